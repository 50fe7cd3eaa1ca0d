"""Separating an LC-MS intensity grid into noise, ridges and analyte signal.

The grid ``y[m, t]`` (mass bin by scan) is modelled as the sum of three
sub-systems: random chemical noise ``r`` (log-normal), systematic noise ``q``
(solvent ridges along fixed mass rows) and analyte signal ``s`` (transient
chromatographic peaks).  Isolated single-cell excursions are electrical
spikes.  The noise envelope is fitted robustly on log intensities; cells
above it are sorted into spikes, ridges and peaks.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .io import atomic_write, read_json, write_json

__all__ = [
    "R", "Q", "S", "SPIKE", "LABELS",
    "InvalidConfig",
    "DegenerateData",
    "LcmsGrid",
    "NoiseModel",
    "PeakSpec",
    "Peak",
    "SynthConfig",
    "synth_generate",
    "fit_noise_envelope",
    "classify",
    "decompose",
    "extract_peaks",
    "subtract_blank",
    "cell_scores",
    "read_grid",
    "write_grid",
    "write_peaks_csv",
    "read_peaks_csv",
]

R, Q, S, SPIKE = 0, 1, 2, 3
LABELS = {R: "r", Q: "q", S: "s", SPIKE: "spike"}

# MAD of a standard normal is Phi^-1(3/4); 1 / 0.67449 = 1.4826
MAD_TO_SIGMA = 1.4826


class InvalidConfig(ValueError):
    pass


class DegenerateData(ValueError):
    pass


@dataclass
class LcmsGrid:
    """Intensities ``y[m, t]`` with the m/z of each row and the time of each scan."""

    y: np.ndarray
    mz: np.ndarray | None = None
    scan_times: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2:
            raise ValueError("grid must be 2D (mass x scan)")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValueError("grid entries must be finite and non-negative")
        self.y = y
        n_m, n_t = y.shape
        self.mz = np.arange(n_m, dtype=float) if self.mz is None else np.asarray(self.mz, dtype=float)
        self.scan_times = (np.arange(n_t, dtype=float) if self.scan_times is None
                           else np.asarray(self.scan_times, dtype=float))
        if self.mz.shape != (n_m,) or self.scan_times.shape != (n_t,):
            raise ValueError("axis calibration does not match the grid")

    @property
    def shape(self):
        return self.y.shape


@dataclass(frozen=True)
class NoiseModel:
    mu: float
    sigma: float
    k: float = 4.0
    degenerate: bool = False

    @property
    def envelope(self) -> float:
        return float(np.exp(self.mu + self.k * self.sigma))

    @property
    def mean_level(self) -> float:
        """Expected noise intensity, ``exp(mu + sigma**2 / 2)``."""
        return float(np.exp(self.mu + self.sigma**2 / 2))

    def with_k(self, k: float) -> "NoiseModel":
        return NoiseModel(self.mu, self.sigma, k, self.degenerate)


@dataclass(frozen=True)
class PeakSpec:
    m: int
    t0: float
    width: float
    height: float


@dataclass(frozen=True)
class Peak:
    m: int
    rows: tuple[int, ...]
    t_start: int
    t_end: int
    apex_t: int
    area: float
    max: float


@dataclass
class SynthConfig:
    """Synthetic grid parameters.

    Ridge amplitudes, peak heights and spike heights are in units of the
    true noise envelope ``exp(mu + truth_k * sigma)``.  When `ridge_rows` or
    `peaks` are empty, `n_ridges` / `n_peaks` are placed at random.
    """

    n_mass: int = 200
    n_scan: int = 500
    mu: float = 0.0
    sigma: float = 0.5
    truth_k: float = 4.0
    ridge_rows: tuple[int, ...] = ()
    ridge_amplitudes: tuple[float, ...] = ()
    n_ridges: int = 6
    ridge_amplitude: float = 3.0
    peaks: tuple[PeakSpec, ...] = ()
    n_peaks: int = 150
    snr_range: tuple[float, float] = (5.0, 20.0)
    peak_width: float = 6.0
    n_spikes: int = 40
    spike_height: float = 5.0
    mz0: float = 100.0
    mz_step: float = 1.0
    scan_seconds: float = 0.5

    def __post_init__(self):
        self.ridge_rows = tuple(int(r) for r in self.ridge_rows)
        self.ridge_amplitudes = tuple(float(a) for a in self.ridge_amplitudes)
        self.peaks = tuple(p if isinstance(p, PeakSpec) else PeakSpec(**p) for p in self.peaks)
        self.snr_range = tuple(self.snr_range)
        self.validate()

    def validate(self):
        if self.n_mass < 3 or self.n_scan < 3:
            raise InvalidConfig("n_mass, n_scan: grid must be at least 3x3")
        if self.sigma < 0:
            raise InvalidConfig("sigma: must be >= 0")
        if self.ridge_amplitudes and len(self.ridge_amplitudes) != len(self.ridge_rows):
            raise InvalidConfig("ridge_amplitudes: one amplitude per ridge row")
        for r in self.ridge_rows:
            if not 0 <= r < self.n_mass:
                raise InvalidConfig(f"ridge_rows: row {r} outside the grid")
        for p in self.peaks:
            if not 0 <= p.m < self.n_mass or not 0 <= p.t0 < self.n_scan:
                raise InvalidConfig(f"peaks: {p} outside the grid")
            if p.width <= 0 or p.height < 0:
                raise InvalidConfig(f"peaks: {p} needs width > 0 and height >= 0")
        for name in ("n_ridges", "n_peaks", "n_spikes"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name}: must be >= 0")
        lo, hi = self.snr_range
        if not 0 < lo <= hi:
            raise InvalidConfig("snr_range: need 0 < low <= high")
        if self.peak_width <= 0:
            raise InvalidConfig("peak_width: must be > 0")
        if self.n_peaks and not self.peaks and self.n_scan - 1 <= 8 * self.peak_width:
            raise InvalidConfig("peak_width: random peaks need n_scan > 8 * peak_width + 1")

    def to_dict(self):
        d = asdict(self)
        d["peaks"] = [asdict(p) for p in self.peaks]
        return d


@dataclass
class SynthResult:
    grid: LcmsGrid
    truth: np.ndarray
    peaks: list[PeakSpec]
    components: dict = field(default_factory=dict)


def _gaussian(t, t0, width, height):
    return height * np.exp(-0.5 * ((t - t0) / width) ** 2)


def synth_generate(config: SynthConfig | None = None, seed: int = 0) -> SynthResult:
    """Synthetic grid with known components.

    ``y = noise + ridges + peaks + spikes``; the truth mask labels ridge rows
    q, cells where a peak contributes at least the true envelope s, spike
    cells spike and everything else r.
    """
    cfg = config or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    n_m, n_t = cfg.n_mass, cfg.n_scan
    env = float(np.exp(cfg.mu + cfg.truth_k * cfg.sigma))
    t = np.arange(n_t, dtype=float)

    noise = np.exp(cfg.mu + cfg.sigma * rng.standard_normal((n_m, n_t)))
    truth = np.full((n_m, n_t), R, dtype=np.uint8)

    if cfg.ridge_rows:
        rows = list(cfg.ridge_rows)
        amps = list(cfg.ridge_amplitudes) or [cfg.ridge_amplitude] * len(rows)
    else:
        rows = sorted(rng.choice(n_m, size=min(cfg.n_ridges, n_m), replace=False).tolist())
        amps = [cfg.ridge_amplitude] * len(rows)
    ridge = np.zeros((n_m, n_t))
    for r, a in zip(rows, amps):
        ridge[r] = a * env
        truth[r] = Q

    peaks = list(cfg.peaks)
    if not peaks and cfg.n_peaks:
        peaks = _place_peaks(cfg, rng, set(rows))
    signal = np.zeros((n_m, n_t))
    for p in peaks:
        signal[p.m] += _gaussian(t, p.t0, p.width, p.height * env)
    peak_cells = (signal >= env) & (truth != Q)
    truth[peak_cells] = S

    spikes = np.zeros((n_m, n_t))
    if cfg.n_spikes:
        occupied = ndimage.binary_dilation(truth != R, structure=np.ones((3, 3), bool))
        free = np.flatnonzero(~occupied)
        picked = []
        for idx in rng.permutation(free):
            if len(picked) == cfg.n_spikes:
                break
            m, c = divmod(int(idx), n_t)
            if all(max(abs(m - pm), abs(c - pc)) > 1 for pm, pc in picked):
                picked.append((m, c))
        for m, c in picked:
            spikes[m, c] = cfg.spike_height * env
            truth[m, c] = SPIKE

    y = noise + ridge + signal + spikes
    grid = LcmsGrid(y, cfg.mz0 + cfg.mz_step * np.arange(n_m), cfg.scan_seconds * t)
    return SynthResult(grid, truth, peaks,
                       {"noise": noise, "ridge": ridge, "signal": signal, "spikes": spikes,
                        "envelope": env, "ridge_rows": rows})


def _place_peaks(cfg, rng, ridge_rows):
    rows = np.array([r for r in range(cfg.n_mass) if r not in ridge_rows])
    lo, hi = cfg.snr_range
    half = 4 * cfg.peak_width
    taken: dict[int, list[float]] = {}
    peaks = []
    for _ in range(50 * cfg.n_peaks):
        if len(peaks) == cfg.n_peaks:
            break
        m = int(rng.choice(rows))
        t0 = float(rng.uniform(half, cfg.n_scan - 1 - half))
        if any(abs(t0 - u) < 2 * half for u in taken.get(m, [])):
            continue
        taken.setdefault(m, []).append(t0)
        peaks.append(PeakSpec(m, t0, cfg.peak_width, float(rng.uniform(lo, hi))))
    return peaks


def fit_noise_envelope(grid, k: float = 4.0, clip: float = 3.0, max_iter: int = 20) -> NoiseModel:
    """Robust log-normal fit of the background.

    ``mu`` is the median and ``sigma`` the scaled MAD of the log intensities
    of positive cells.  The fit is repeated on the cells below
    ``exp(mu + clip * sigma)`` until the retained set stops changing, which
    removes ridge and peak cells from the estimate.  The envelope is
    ``exp(mu + k * sigma)``.
    """
    y = grid.y if isinstance(grid, LcmsGrid) else np.asarray(grid, dtype=float)
    v = y[y > 0]
    if v.size < 100:
        raise DegenerateData(f"need at least 100 positive cells, got {v.size}")
    logs = np.log(v)
    keep = np.ones(logs.size, dtype=bool)
    mu = sigma = 0.0
    for _ in range(max_iter):
        sel = logs[keep]
        mu = float(np.median(sel))
        sigma = float(MAD_TO_SIGMA * np.median(np.abs(sel - mu)))
        if sigma == 0:
            break
        new = logs <= mu + clip * sigma
        if np.array_equal(new, keep):
            break
        keep = new
    return NoiseModel(mu, sigma, k, degenerate=sigma == 0)


def _isolated(above):
    neighbours = ndimage.convolve(above.astype(np.int32), np.ones((3, 3), np.int32),
                                  mode="constant") - above
    return above & (neighbours == 0)


def classify(grid, model: NoiseModel, ridge_frac: float = 0.8) -> np.ndarray:
    """Per-cell component labels (R, Q, S, SPIKE)."""
    y = grid.y if isinstance(grid, LcmsGrid) else np.asarray(grid, dtype=float)
    above = y > model.envelope
    mask = np.full(y.shape, R, dtype=np.uint8)
    spike = _isolated(above)
    mask[spike] = SPIKE
    ridge_rows = above.mean(axis=1) >= ridge_frac
    rest = above & ~spike
    q = rest & ridge_rows[:, None]
    mask[q] = Q
    mask[rest & ~q] = S
    return mask


def _carve(total, part):
    """Split ``total`` into ``(part', rest)`` with ``part' + rest == total`` exactly.

    Needs ``0 <= part <= total``.  ``d = total - part`` is rounded once; if
    ``d >= total / 2`` then ``total - d`` is exact (Sterbenz), otherwise
    ``part > total / 2`` and ``d`` itself is exact.  Either way ``part'``
    differs from ``part`` only by rounding.
    """
    rest = total - part
    return total - rest, rest


def decompose(grid, mask, model: NoiseModel | None = None):
    """Split `grid` into non-negative (r, q, s) grids with ``(r + q) + s == y`` exactly.

    q is the median intensity of each ridge row's q cells, placed on those
    cells and capped at the cell intensity.  s is what a peak adds above the
    expected noise intensity, clamped at zero.  r takes the remainder.
    """
    y = grid.y if isinstance(grid, LcmsGrid) else np.asarray(grid, dtype=float)
    mask = np.asarray(mask)
    if mask.shape != y.shape:
        raise ValueError("mask does not match the grid")
    if model is None:
        model = fit_noise_envelope(y)
    q = np.zeros_like(y)
    for m in np.flatnonzero((mask == Q).any(axis=1)):
        cells = mask[m] == Q
        q[m, cells] = np.median(y[m, cells])
    s = np.zeros_like(y)
    sc = mask == S
    s[sc] = np.clip(y[sc] - model.mean_level, 0.0, y[sc])
    s, rest = _carve(y, s)
    q, r = _carve(rest, np.minimum(q, rest))
    return r, q, s


def extract_peaks(s_grid) -> list[Peak]:
    """Connected regions (8-neighbourhood) of positive s cells, in apex order."""
    s = np.asarray(s_grid, dtype=float)
    labels, n = ndimage.label(s > 0, structure=np.ones((3, 3), bool))
    peaks = []
    for sl, lab in zip(ndimage.find_objects(labels), range(1, n + 1)):
        sub = np.where(labels[sl] == lab, s[sl], 0.0)
        am, at = np.unravel_index(np.argmax(sub), sub.shape)
        rows = tuple(int(sl[0].start + i) for i in np.flatnonzero(sub.any(axis=1)))
        peaks.append(Peak(int(sl[0].start + am), rows, int(sl[1].start), int(sl[1].stop - 1),
                          int(sl[1].start + at), float(sub.sum()), float(sub.max())))
    peaks.sort(key=lambda p: (p.m, p.apex_t))
    return peaks


def subtract_blank(peaks: Sequence[Peak], blank: Sequence[Peak], m_tol: float = 0,
                   t_tol: float = 0) -> list[Peak]:
    """Drop peaks matched by a blank peak within the mass and time tolerances."""
    if m_tol < 0 or t_tol < 0:
        raise ValueError("tolerances must be >= 0")
    return [p for p in peaks
            if not any(abs(p.m - b.m) <= m_tol and abs(p.apex_t - b.apex_t) <= t_tol for b in blank)]


def cell_scores(mask, truth, label=S) -> dict:
    """Cell-level precision and recall of `label` against a truth mask."""
    pred = np.asarray(mask) == label
    true = np.asarray(truth) == label
    tp = int(np.sum(pred & true))
    return {
        "true_positive": tp,
        "predicted": int(pred.sum()),
        "actual": int(true.sum()),
        "precision": tp / pred.sum() if pred.any() else 1.0,
        "recall": tp / true.sum() if true.any() else 1.0,
    }


# -- file formats ----------------------------------------------------------------

def write_grid(path, grid: LcmsGrid, values=None):
    """Write `values` (default ``grid.y``) on the grid's axes.

    ``.csv``: first row ``mz/t`` then scan times; each further row an m/z
    followed by that row's values.  Any other suffix: flat little-endian
    float64 plus a ``.json`` descriptor next to it.
    """
    path = Path(path)
    values = grid.y if values is None else np.asarray(values)
    if path.suffix == ".csv":
        fh = io.StringIO()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mz/t"] + [repr(float(x)) for x in grid.scan_times])
        for mz, row in zip(grid.mz, values):
            w.writerow([repr(float(mz))] + [repr(float(v)) for v in row])
        atomic_write(path, fh.getvalue())
    else:
        atomic_write(path, np.ascontiguousarray(values, dtype="<f8").tobytes())
        write_json(path.with_suffix(".json"), {
            "file": path.name, "dtype": "float64-le", "shape": list(values.shape),
            "mz": grid.mz, "scan_times": grid.scan_times})


def read_grid(path) -> LcmsGrid:
    """Read a grid from CSV or from a binary descriptor (``.json``)."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        times = np.array([float(v) for v in rows[0][1:]])
        mz = np.array([float(r[0]) for r in rows[1:]])
        y = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return LcmsGrid(y, mz, times)
    desc = read_json(path)
    y = np.fromfile(path.parent / desc["file"], dtype="<f8").reshape(desc["shape"])
    return LcmsGrid(y, desc.get("mz"), desc.get("scan_times"))


PEAK_COLUMNS = ["m", "mz", "t_start", "t_end", "apex_t", "apex_time", "area", "max"]


def write_peaks_csv(path, peaks: Sequence[Peak], grid: LcmsGrid | None = None):
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PEAK_COLUMNS)
    for p in peaks:
        mz = grid.mz[p.m] if grid is not None else p.m
        rt = grid.scan_times[p.apex_t] if grid is not None else p.apex_t
        w.writerow([p.m, repr(float(mz)), p.t_start, p.t_end, p.apex_t, repr(float(rt)),
                    repr(p.area), repr(p.max)])
    atomic_write(path, fh.getvalue())


def read_peaks_csv(path) -> list[Peak]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Peak(int(r["m"]), (int(r["m"]),), int(r["t_start"]), int(r["t_end"]),
                 int(r["apex_t"]), float(r["area"]), float(r["max"])) for r in rows]
