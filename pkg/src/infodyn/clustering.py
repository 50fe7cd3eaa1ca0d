"""Segmenting a frame-series trajectory by k-means clustering of alpha spectra."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .io import atomic_write

__all__ = [
    "TooFewRows",
    "LengthMismatch",
    "ClusterModel",
    "Segment",
    "feature_matrix",
    "kmeans",
    "kmeans_sweep",
    "decimate",
    "labels_to_segments",
    "segments_to_labels",
    "oscillating_stretches",
    "compare_clusterings",
    "write_labels_csv",
    "write_segments_csv",
]


class TooFewRows(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    objective: float
    iterations: int
    seed: int
    history: tuple[float, ...] = field(default=())

    def predict(self, X):
        return _sqdist(np.asarray(X, dtype=float), self.centroids).argmin(axis=1)


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    label: int

    def __len__(self):
        return self.end - self.start + 1


def feature_matrix(spectra, mode: str = "I", standardize: bool = False) -> np.ndarray:
    """Stack spectra into rows; `mode` is "I", "P" or "IP" (concatenated)."""
    X = np.array([s.features(mode) for s in spectra], dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ValueError("feature matrix must be rectangular and finite")
    if standardize:
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        X = (X - X.mean(axis=0)) / sd
    return X


def _sqdist(X, C):
    # exact differences rather than the |x|^2 - 2xc + |c|^2 expansion: keeps
    # the objective free of cancellation so monotonicity can be asserted
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _plusplus(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(X, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-8) -> ClusterModel:
    """Lloyd's k-means from k-means++ seeding, squared Euclidean objective.

    Each iteration assigns points to the nearest centroid, records the
    objective, repairs empty clusters by moving their centroid onto the point
    farthest from its own centroid, and recomputes the means.  Iteration stops
    once the largest centroid move is below `tol` or after `max_iter` rounds.
    ``history`` holds the objective after every assignment and never increases.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2D")
    n = len(X)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise TooFewRows(f"{n} rows cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    C = _plusplus(X, k, rng)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sqdist(X, C)
        labels = d.argmin(axis=1)
        cost = d[np.arange(n), labels]
        labels, cost = _repair_empty(X, labels, cost, k)
        history.append(float(cost.sum()))
        newC = np.array([X[labels == j].mean(axis=0) for j in range(k)])
        shift = np.sqrt(((newC - C) ** 2).sum(axis=1)).max()
        C = newC
        if shift < tol:
            break
    # centroids are the means of the final labels, so this cannot exceed history[-1]
    objective = min(float(((X - C[labels]) ** 2).sum()), history[-1])
    history.append(objective)
    return ClusterModel(k, C, labels, objective, it, seed, tuple(history))


def _repair_empty(X, labels, cost, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        # farthest point among clusters that can spare one
        donors = counts[labels] > 1
        cand = np.where(donors, cost, -1.0)
        i = int(cand.argmax())
        counts[labels[i]] -= 1
        labels[i] = j
        cost[i] = 0.0
        counts[j] = 1
    return labels, cost


def kmeans_sweep(X, ks: Sequence[int] = (3, 4, 5, 6), seed: int = 0, **kw) -> dict[int, ClusterModel]:
    return {k: kmeans(X, k, seed=seed, **kw) for k in ks}


def decimate(n_items: int, n: int) -> np.ndarray:
    """Indices 0, n, 2n, ... of a series whose last index is `n_items`."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.arange(0, n_items + 1, n)


def labels_to_segments(labels) -> list[Segment]:
    """Maximal runs of equal consecutive labels."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty label sequence")
    cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate([[0], cuts])
    ends = np.concatenate([cuts - 1, [len(labels) - 1]])
    return [Segment(int(s), int(e), int(labels[s])) for s, e in zip(starts, ends)]


def segments_to_labels(segments: Sequence[Segment]) -> np.ndarray:
    out = []
    for seg in segments:
        out.extend([seg.label] * len(seg))
    return np.array(out, dtype=int)


def oscillating_stretches(segments: Sequence[Segment], min_runs: int = 4):
    """Stretches of consecutive runs that alternate between exactly two labels.

    Returns ``(first_run, last_run, (label_a, label_b))`` for every maximal
    stretch of at least `min_runs` runs following the pattern a, b, a, b, ...
    """
    out = []
    i = 0
    while i < len(segments) - 1:
        j = i + 1
        while j + 1 < len(segments) and segments[j + 1].label == segments[j - 1].label:
            j += 1
        if j - i + 1 >= min_runs:
            out.append((i, j, (segments[i].label, segments[i + 1].label)))
        i = j
    return out


def compare_clusterings(labels_a, labels_b) -> float:
    """Adjusted Rand index between two labelings of the same items."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"label arrays differ: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise LengthMismatch("need at least two items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        return int(sum(int(v) * (int(v) - 1) // 2 for v in np.ravel(x)))

    # exact rational arithmetic so that hand-computable cases come out exact
    index = pairs(table)
    rows = pairs(table.sum(axis=1))
    cols = pairs(table.sum(axis=0))
    expected = Fraction(rows * cols, pairs([len(a)]))
    best = Fraction(rows + cols, 2)
    if best == expected:
        # both partitions trivial (all one cluster or all singletons)
        return 1.0
    return float((index - expected) / (best - expected))


def write_labels_csv(path, models: dict[int, ClusterModel], index=None):
    """Columns: pair_index, then one label column per k."""
    ks = sorted(models)
    n = len(models[ks[0]].labels)
    index = np.arange(n) if index is None else np.asarray(index)
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["pair_index"] + [f"k{k}" for k in ks])
    for r in range(n):
        w.writerow([int(index[r])] + [int(models[k].labels[r]) for k in ks])
    atomic_write(path, fh.getvalue())


def write_segments_csv(path, segments_by_k: dict[int, list[Segment]], index=None):
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "start", "end", "label"])
    for k in sorted(segments_by_k):
        for seg in segments_by_k[k]:
            s, e = (seg.start, seg.end) if index is None else (int(index[seg.start]), int(index[seg.end]))
            w.writerow([k, s, e, seg.label])
    atomic_write(path, fh.getvalue())
