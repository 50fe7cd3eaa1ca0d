"""Noisy hodgepodge machine.

An excitable-medium cellular automaton in the Gerhardt-Schuster form with
an additive integer noise term on infected cells.  Cell states run from 0
(healthy) through 1..q-1 (infected) to q (ill).  Update, with A and B the
numbers of infected and ill cells in the Moore neighbourhood and S the sum
of states over the cell and its neighbours::

    healthy   ->  A // k1 + B // k2
    infected  ->  S // (A + B + 1) + g + eta
    ill       ->  0

then clamped to [0, q].  ``eta`` is drawn uniformly from 0..eta_max with
probability p_noise, else 0.  The noise for step k comes from a generator
seeded by ``(seed, k)`` and is drawn for the whole lattice in raster order,
so the result is fixed by (params, step) alone.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import atomic_write, read_json, read_pgm, write_json, write_pgm

__all__ = [
    "InvalidParams",
    "HodgepodgeParams",
    "Lattice",
    "FrameSeries",
    "init",
    "step",
    "run",
    "save_series",
    "load_series",
    "palette",
]


class InvalidParams(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class HodgepodgeParams:
    width: int = 64
    height: int = 64
    q: int = 200
    k1: int = 2
    k2: int = 1
    g: int = 30
    eta_max: int = 8
    p_noise: float = 0.05
    ignition: tuple[tuple[int, int], ...] = ((32, 32),)
    boundary: str = "torus"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ignition", tuple(tuple(int(c) for c in p) for p in self.ignition))
        self.validate()

    def validate(self):
        for name in ("width", "height"):
            if int(getattr(self, name)) < 1:
                raise InvalidParams(name, "must be >= 1")
        if self.q < 2:
            raise InvalidParams("q", "must be >= 2")
        if self.q > 65535:
            raise InvalidParams("q", "must fit in 16 bits")
        if self.k1 < 1:
            raise InvalidParams("k1", "must be >= 1")
        if self.k2 < 1:
            raise InvalidParams("k2", "must be >= 1")
        if self.g < 0:
            raise InvalidParams("g", "must be >= 0")
        if self.eta_max < 0:
            raise InvalidParams("eta_max", "must be >= 0")
        if not 0.0 <= self.p_noise <= 1.0:
            raise InvalidParams("p_noise", "must lie in [0, 1]")
        if self.boundary not in ("torus", "fixed"):
            raise InvalidParams("boundary", "must be 'torus' or 'fixed'")
        for x, y in self.ignition:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise InvalidParams("ignition", f"point ({x}, {y}) outside {self.width}x{self.height}")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["ignition"] = [list(p) for p in self.ignition]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "ignition" in d:
            d["ignition"] = tuple(tuple(p) for p in d["ignition"])
        return cls(**d)


def _dtype(q):
    return np.uint8 if q <= 255 else np.uint16


@dataclass(frozen=True)
class Lattice:
    states: np.ndarray
    step: int = 0


@dataclass
class FrameSeries:
    frames: np.ndarray
    steps: list[int]
    params: HodgepodgeParams
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]


def init(params: HodgepodgeParams) -> Lattice:
    """All cells healthy except the ignition points, which start ill."""
    params.validate()
    s = np.zeros((params.height, params.width), dtype=_dtype(params.q))
    for x, y in params.ignition:
        s[y, x] = params.q
    return Lattice(s, 0)


def _neighbour_sum(a, boundary):
    mode = "wrap" if boundary == "torus" else "constant"
    p = np.pad(a, 1, mode=mode)
    h, w = a.shape
    total = np.zeros_like(a)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            if dy == 1 and dx == 1:
                continue
            total += p[dy:dy + h, dx:dx + w]
    return total


def step(lattice: Lattice, params: HodgepodgeParams) -> Lattice:
    s = lattice.states.astype(np.int32)
    q = params.q
    healthy = s == 0
    ill = s == q
    infected = ~healthy & ~ill

    A = _neighbour_sum(infected.astype(np.int32), params.boundary)
    B = _neighbour_sum(ill.astype(np.int32), params.boundary)
    S = _neighbour_sum(s, params.boundary) + s

    new = np.zeros_like(s)
    new[healthy] = A[healthy] // params.k1 + B[healthy] // params.k2
    new[infected] = S[infected] // (A[infected] + B[infected] + 1) + params.g
    if params.p_noise > 0 and params.eta_max > 0:
        rng = np.random.default_rng([params.seed, lattice.step])
        hit = rng.random(s.shape) < params.p_noise
        eta = rng.integers(0, params.eta_max, size=s.shape, endpoint=True)
        new[infected] += np.where(hit, eta, 0)[infected]
    np.clip(new, 0, q, out=new)
    return Lattice(new.astype(_dtype(q)), lattice.step + 1)


def run(params: HodgepodgeParams, n_steps: int, emit_every: int = 1) -> FrameSeries:
    """Simulate `n_steps` steps and keep the lattice at steps 0, emit_every, 2*emit_every, ..."""
    if n_steps < 1:
        raise InvalidParams("n_steps", "must be >= 1")
    if emit_every < 1:
        raise InvalidParams("emit_every", "must be >= 1")
    lat = init(params)
    frames = [lat.states]
    steps = [0]
    for _ in range(n_steps):
        lat = step(lat, params)
        if lat.step % emit_every == 0:
            frames.append(lat.states)
            steps.append(lat.step)
    return FrameSeries(np.stack(frames), steps, params, {"n_steps": n_steps, "emit_every": emit_every})


def palette(frame, q: int) -> np.ndarray:
    """RGB rendering of a state frame for display: healthy dark, infected warm ramp, ill white."""
    f = np.asarray(frame, dtype=float) / q
    rgb = np.stack([np.clip(2 * f, 0, 1), np.clip(2 * f - 0.5, 0, 1), np.clip(2 * f - 1, 0, 1)], axis=-1)
    return (rgb * 255).round().astype(np.uint8)


def save_series(series: FrameSeries, out_dir) -> Path:
    """Write frames as PGM plus ``series.json`` metadata and a ``manifest.txt`` frame list."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    maxval = series.params.q
    names = []
    for k, frame in zip(series.steps, series.frames):
        name = f"frames/frame_{k:07d}.pgm"
        write_pgm(out / name, frame, maxval=maxval)
        names.append(name)
    write_json(out / "series.json", {
        "params": series.params.to_dict(),
        "seed": series.params.seed,
        "steps": list(series.steps),
        "frames": names,
        **series.meta,
    })
    atomic_write(out / "manifest.txt", "".join(n + "\n" for n in names))
    return out


def load_series(path) -> FrameSeries:
    """Load a series directory written by :func:`save_series`."""
    path = Path(path)
    meta = read_json(path / "series.json")
    names = (path / "manifest.txt").read_text().split()
    frames = np.stack([read_pgm(path / n)[0] for n in names])
    params = HodgepodgeParams.from_dict(meta["params"])
    extra = {k: v for k, v in meta.items() if k not in ("params", "seed", "steps", "frames")}
    return FrameSeries(frames.astype(_dtype(params.q)), list(meta["steps"]), params, extra)
