"""Rényi entropy of intensity histograms and the point divergence gain.

The point divergence gain of a pixel is the change of the Rényi entropy of
an image histogram when the intensity of that one pixel is replaced by the
intensity found at the same position in the next image.  Only two histogram
bins change, so each pixel is evaluated in O(1) from a precomputed power sum.

All entropies are in bits.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .io import atomic_write

__all__ = [
    "DEFAULT_ALPHAS",
    "InvalidAlpha",
    "DimensionMismatch",
    "Histogram",
    "PdgMap",
    "AlphaSpectrum",
    "histogram",
    "renyi_entropy",
    "pdg",
    "pdg_map",
    "pdge",
    "pdged",
    "spectrum",
    "spectra_series",
    "write_spectra_csv",
    "read_spectra_csv",
]

DEFAULT_ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.99, 1.3, 1.5, 1.7, 2.0, 2.5, 3.0, 3.5, 4.0)

# significant decimal digits used to decide whether two |omega| are the same level
DISTINCT_DIGITS = 12


class InvalidAlpha(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Histogram:
    """Counts per intensity level; ``counts[i]`` is the number of pixels at level ``i``."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a non-empty 1D array")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if counts.sum() < 1:
            raise ValueError("histogram must hold at least one pixel")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class PdgMap:
    omega: np.ndarray
    alpha: float
    pair: tuple[int, int] = (0, 1)


@dataclass(frozen=True)
class AlphaSpectrum:
    alphas: tuple[float, ...]
    I: np.ndarray
    P: np.ndarray
    pair_index: int = 0

    def features(self, mode: str = "I") -> np.ndarray:
        if mode == "I":
            return self.I
        if mode == "P":
            return self.P
        if mode == "IP":
            return np.concatenate([self.I, self.P])
        raise ValueError(f"unknown feature mode {mode!r}")


def _check_alpha(alpha):
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0:
        raise InvalidAlpha(f"alpha must be a positive real, got {alpha}")
    return alpha


def histogram(frame, n_levels: int | None = None) -> Histogram:
    """Histogram of a non-negative integer frame."""
    frame = np.asarray(frame)
    if frame.size == 0:
        raise ValueError("empty frame")
    flat = frame.ravel().astype(np.int64)
    if flat.min() < 0:
        raise ValueError("intensities must be non-negative")
    return Histogram(np.bincount(flat, minlength=n_levels or 0))


def renyi_entropy(hist, alpha: float) -> float:
    """Rényi entropy of order `alpha` in bits.

    ``H = log2(sum p_i**alpha) / (1 - alpha)``; at ``alpha == 1`` the Shannon
    limit ``-sum p_i log2 p_i`` is returned.

    Parameters
    ----------
    hist : Histogram or array-like of counts
    alpha : float
        Order, strictly positive.
    """
    alpha = _check_alpha(alpha)
    if not isinstance(hist, Histogram):
        hist = Histogram(hist)
    n = hist.counts[hist.counts > 0].astype(float)
    p = n / n.sum()
    if alpha == 1.0:
        h = -np.sum(p * np.log2(p))
    else:
        h = np.log2(np.sum(p**alpha)) / (1.0 - alpha)
    # the degenerate single-level case can come out as -0.0 or 1e-17
    return max(float(h), 0.0)


def _as_pair(frame_l, frame_l1):
    a = np.asarray(frame_l)
    b = np.asarray(frame_l1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"frame shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise DimensionMismatch("frames must be 2D")
    if a.size == 0:
        raise DimensionMismatch("frames are empty")
    a = a.astype(np.int64, copy=False)
    b = b.astype(np.int64, copy=False)
    if a.min() < 0 or b.min() < 0:
        raise ValueError("intensities must be non-negative")
    return a, b


def _omega_from_counts(na, nb, total, alpha, power_sum=None):
    """omega for substitutions a -> b given the counts n_a, n_b of the base frame.

    `na` and `nb` are float arrays; cells with a == b must be masked by the caller.
    """
    if alpha == 1.0:
        # H = log2 N - (1/N) sum n log2 n; only the two touched bins move
        def xlogx(x):
            return np.where(x > 0, x * np.log2(np.where(x > 0, x, 1.0)), 0.0)

        delta = (xlogx(na - 1) - xlogx(nb)) + (xlogx(nb + 1) - xlogx(na))
        return -delta / total
    # grouped so that n_a == n_b + 1 cancels to exactly zero
    delta = ((na - 1) ** alpha - nb**alpha) + ((nb + 1) ** alpha - na**alpha)
    return np.log1p(delta / power_sum) / np.log(2.0) / (1.0 - alpha)


def _pair_counts(a, b):
    n_levels = int(max(a.max(), b.max())) + 1
    return np.bincount(a.ravel(), minlength=n_levels).astype(float)


def pdg(frame_l, frame_l1, x: int, y: int, alpha: float) -> float:
    """Point divergence gain of pixel ``(x, y)`` (column, row) between two frames."""
    alpha = _check_alpha(alpha)
    a, b = _as_pair(frame_l, frame_l1)
    if not (0 <= y < a.shape[0] and 0 <= x < a.shape[1]):
        raise IndexError(f"pixel ({x}, {y}) outside a frame of shape {a.shape}")
    va, vb = a[y, x], b[y, x]
    if va == vb:
        return 0.0
    counts = _pair_counts(a, b)
    power_sum = None if alpha == 1.0 else float(np.sum(counts[counts > 0] ** alpha))
    return float(
        _omega_from_counts(
            np.float64(counts[va]), np.float64(counts[vb]), a.size, alpha, power_sum
        )
    )


def pdg_map(frame_l, frame_l1, alpha: float, pair: tuple[int, int] = (0, 1)) -> PdgMap:
    """Point divergence gain for every pixel of a frame pair.

    Each substitution is evaluated against the unmodified histogram of
    `frame_l`, so the result does not depend on pixel order.
    """
    alpha = _check_alpha(alpha)
    a, b = _as_pair(frame_l, frame_l1)
    counts = _pair_counts(a, b)
    return PdgMap(_omega(a, b, counts, alpha), alpha, tuple(pair))


def _omega(a, b, counts, alpha):
    power_sum = None if alpha == 1.0 else float(np.sum(counts[counts > 0] ** alpha))
    omega = np.zeros(a.shape, dtype=float)
    changed = a != b
    if np.any(changed):
        na = counts[a[changed]]
        nb = counts[b[changed]]
        omega[changed] = _omega_from_counts(na, nb, a.size, alpha, power_sum)
    return omega


def pdge(pmap) -> float:
    """Sum of |omega| over all pixels."""
    omega = pmap.omega if isinstance(pmap, PdgMap) else np.asarray(pmap, dtype=float)
    return float(np.sum(np.abs(omega)))


def _distinct_levels(values, digits=DISTINCT_DIGITS):
    v = np.abs(np.asarray(values, dtype=float).ravel())
    v = v[v > 0]
    if v.size == 0:
        return v
    exponent = np.floor(np.log10(v))
    scale = 10.0**exponent
    key = np.round(v / scale, digits - 1) * scale
    _, first = np.unique(key, return_index=True)
    return v[np.sort(first)]


def pdged(pmap, digits: int = DISTINCT_DIGITS) -> float:
    """Sum over the distinct non-zero |omega| levels, each counted once.

    Two values are the same level when they agree to `digits` significant
    decimal digits.
    """
    omega = pmap.omega if isinstance(pmap, PdgMap) else pmap
    return float(np.sum(_distinct_levels(omega, digits)))


def spectrum(frame_l, frame_l1, alphas: Sequence[float] = DEFAULT_ALPHAS,
             pair_index: int = 0) -> AlphaSpectrum:
    """I_alpha and P_alpha of one frame pair for every alpha in `alphas`."""
    alphas = tuple(_check_alpha(al) for al in alphas)
    if not alphas:
        raise InvalidAlpha("alpha list is empty")
    a, b = _as_pair(frame_l, frame_l1)
    counts = _pair_counts(a, b)
    I = np.zeros(len(alphas))
    P = np.zeros(len(alphas))
    changed = a != b
    if not np.any(changed):
        return AlphaSpectrum(alphas, I, P, pair_index)
    # omega depends on the pixel only through (n_a, n_b): evaluate each pair once
    na = counts[a[changed]].astype(np.int64)
    nb = counts[b[changed]].astype(np.int64)
    keys, mult = np.unique(na * (a.size + 2) + nb, return_counts=True)
    na_u = (keys // (a.size + 2)).astype(float)
    nb_u = (keys % (a.size + 2)).astype(float)
    for j, alpha in enumerate(alphas):
        power_sum = None if alpha == 1.0 else float(np.sum(counts[counts > 0] ** alpha))
        omega = _omega_from_counts(na_u, nb_u, a.size, alpha, power_sum)
        I[j] = float(np.sum(mult * np.abs(omega)))
        P[j] = float(np.sum(_distinct_levels(omega)))
    return AlphaSpectrum(alphas, I, P, pair_index)


def spectra_series(frames, alphas: Sequence[float] = DEFAULT_ALPHAS, step: int = 1):
    """Spectra of consecutive pairs ``(frames[i], frames[i + step])`` for i = 0, step, 2*step, ...

    Returns a list of AlphaSpectrum whose `pair_index` is the position of the
    pair in the (possibly decimated) sequence.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    idx = list(range(0, len(frames), step))
    return [spectrum(frames[i], frames[j], alphas, pair_index=n)
            for n, (i, j) in enumerate(zip(idx[:-1], idx[1:]))]


def write_spectra_csv(path, spectra: Sequence[AlphaSpectrum]):
    """One row per frame pair: pair_index, I_<alpha>..., P_<alpha>..."""
    if not spectra:
        raise ValueError("no spectra to write")
    alphas = spectra[0].alphas
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["pair_index"] + [f"I_{a:g}" for a in alphas] + [f"P_{a:g}" for a in alphas])
    for s in spectra:
        if s.alphas != alphas:
            raise ValueError("spectra use different alpha lists")
        w.writerow([s.pair_index] + [repr(float(v)) for v in s.I] + [repr(float(v)) for v in s.P])
    atomic_write(path, fh.getvalue())


def read_spectra_csv(path) -> list[AlphaSpectrum]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = (len(header) - 1) // 2
    if header[0] != "pair_index" or len(header) != 2 * n + 1:
        raise ValueError(f"{path}: not a spectra table")
    alphas = tuple(float(h[2:]) for h in header[1:n + 1])
    out = []
    for row in body:
        vals = np.array([float(v) for v in row[1:]])
        out.append(AlphaSpectrum(alphas, vals[:n], vals[n:], int(row[0])))
    return out
