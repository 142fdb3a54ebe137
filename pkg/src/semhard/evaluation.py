"""Retrieval metrics and training-efficiency diagnostics.

Recall@k over both retrieval directions, their mean (the validation
score), the signed percent change in epochs needed to reach a reference
score, and per-batch unique hard-negative counts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeMismatch

I2T = "i2t"
T2I = "t2i"


@dataclass
class RelevanceMap:
    img_to_desc: list[set[int]]  # image index -> relevant description indices
    desc_to_img: list[int]       # description index -> its image

    def __post_init__(self):
        n_img = len(self.img_to_desc)
        for img, rel in enumerate(self.img_to_desc):
            if not rel:
                raise ValueError(f"image {img} has no relevant descriptions")
        for d, img in enumerate(self.desc_to_img):
            if not 0 <= img < n_img:
                raise ValueError(f"description {d} references image {img}")


@dataclass
class RetrievalReport:
    i2t: dict[int, float]  # k -> Recall@k percentage
    t2i: dict[int, float]
    m_recall: float


@dataclass
class HardNegStats:
    unique_img: list[int] = field(default_factory=list)   # per batch: #ImEmbs
    unique_desc: list[int] = field(default_factory=list)  # per batch: #DesEmbs


def _rank_hits(scores: np.ndarray, relevant: set[int], k: int) -> bool:
    # descending similarity, ties broken by lower candidate index
    order = np.argsort(-scores, kind="stable")[:k]
    return any(int(c) in relevant for c in order)


def recall_at_k(
    sim: np.ndarray, relevance: RelevanceMap, k: int, direction: str
) -> float:
    """Percentage of queries with >= 1 relevant item in the top k.

    `sim` is images x descriptions; direction "i2t" queries rows,
    "t2i" queries columns.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    sim = np.asarray(sim)
    n_img, n_desc = sim.shape
    if len(relevance.img_to_desc) != n_img or len(relevance.desc_to_img) != n_desc:
        raise ShapeMismatch("similarity shape disagrees with relevance map")

    if direction == I2T:
        hits = sum(
            _rank_hits(sim[i], relevance.img_to_desc[i], k) for i in range(n_img)
        )
        return 100.0 * hits / n_img
    if direction == T2I:
        hits = sum(
            _rank_hits(sim[:, d], {relevance.desc_to_img[d]}, k)
            for d in range(n_desc)
        )
        return 100.0 * hits / n_desc
    raise ValueError(f"direction must be {I2T!r} or {T2I!r}")


def m_recall(values: Sequence[float]) -> float:
    """Mean of the six Recall values (R@1/5/10 in both directions)."""
    if len(values) != 6:
        raise ValueError("m_recall takes exactly six recall values")
    return float(np.mean(values))


def retrieval_report(sim: np.ndarray, relevance: RelevanceMap) -> RetrievalReport:
    i2t = {k: recall_at_k(sim, relevance, k, I2T) for k in (1, 5, 10)}
    t2i = {k: recall_at_k(sim, relevance, k, T2I) for k in (1, 5, 10)}
    return RetrievalReport(
        i2t=i2t,
        t2i=t2i,
        m_recall=m_recall([*i2t.values(), *t2i.values()]),
    )


def efficiency_difference(epochs_new: float, epochs_ref: float) -> float:
    """Signed percent change in epochs; negative means faster."""
    if epochs_ref <= 0:
        raise ZeroDivisionError("reference epoch count must be > 0")
    return 100.0 * (epochs_new - epochs_ref) / epochs_ref


def epochs_to_threshold(records: Iterable[tuple[float, float]], threshold: float):
    """Earliest epoch fraction whose validation score reaches `threshold`.

    `records` holds (epoch_fraction, m_recall) pairs; returns None when
    the threshold is never reached.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    for epoch_fraction, score in records:
        if score >= threshold:
            return epoch_fraction
    return None


def hard_negative_uniques(
    batch_logs: Iterable[tuple[Sequence[int], Sequence[int]]]
) -> HardNegStats:
    """Per batch, count distinct hard-negative image and description picks.

    Each log entry is (hard_neg_img indices, hard_neg_desc indices) as
    produced by the max-of-hinges losses.
    """
    stats = HardNegStats()
    for img_idx, desc_idx in batch_logs:
        stats.unique_img.append(len(set(int(i) for i in img_idx)))
        stats.unique_desc.append(len(set(int(i) for i in desc_idx)))
    return stats


def write_report_csv(report: RetrievalReport, path: str | Path, header: str = ""):
    """CSV rows `direction,k,recall` plus an `m_recall` summary line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["direction", "k", "recall"])
        for k in (1, 5, 10):
            writer.writerow([I2T, k, f"{report.i2t[k]:.6f}"])
        for k in (1, 5, 10):
            writer.writerow([T2I, k, f"{report.t2i[k]:.6f}"])
        writer.writerow(["m_recall", "", f"{report.m_recall:.6f}"])


def write_diagnostics_csv(stats: HardNegStats, path: str | Path, header: str = ""):
    """CSV `batch_index,unique_img,unique_desc`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["batch_index", "unique_img", "unique_desc"])
        for i, (ui, ud) in enumerate(zip(stats.unique_img, stats.unique_desc)):
            writer.writerow([i, ui, ud])
