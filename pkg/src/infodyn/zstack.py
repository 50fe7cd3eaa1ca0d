"""Point-divergence-gain transform of microscope z-stacks.

Consecutive focal planes are compared pixel by pixel with the point
divergence gain; pixels whose information does not change between planes
(omega == 0) mark structures larger than one voxel.  The least-information-
lost rescale maps a >8-bit image onto 0..255 through its occupied levels
only, for display.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import pdg as _pdg
from .io import atomic_write, read_json, read_pgm, write_json, write_pgm

__all__ = [
    "UnknownChannel",
    "TooFewFrames",
    "ZStack",
    "OmegaImage",
    "pdg_transform_stack",
    "split_signs",
    "stable_mask",
    "lil_rescale",
    "lil_invert",
    "section_rescale",
    "quantize_omega",
    "load_stack",
    "save_stack",
    "write_omega_volume",
    "read_omega_volume",
    "write_level_map_csv",
]


class UnknownChannel(KeyError):
    pass


class TooFewFrames(ValueError):
    pass


@dataclass
class ZStack:
    """Frames indexed ``[z, channel, row, col]``."""

    data: np.ndarray
    channels: tuple[str, ...] = ("gray",)
    bit_depth: int = 12
    pixel_pitch_nm: float = 64.0
    z_step_nm: float = 130.0
    z_positions: tuple[float, ...] | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[:, None]
        if data.ndim != 4:
            raise ValueError("stack data must be (z, row, col) or (z, channel, row, col)")
        if data.shape[1] != len(self.channels):
            raise ValueError(f"{data.shape[1]} channel planes but {len(self.channels)} channel names")
        if data.size and (data.min() < 0 or data.max() >= 2**self.bit_depth):
            raise ValueError(f"intensities outside {self.bit_depth}-bit range")
        self.data = data.astype(np.int64, copy=False)
        self.channels = tuple(self.channels)
        if self.z_positions is None:
            self.z_positions = tuple(self.z_step_nm * np.arange(len(data)))
        self.z_positions = tuple(float(z) for z in self.z_positions)
        if len(self.z_positions) != len(data):
            raise ValueError("one z position per frame")
        if np.any(np.diff(self.z_positions) <= 0):
            raise ValueError("z positions must be strictly increasing")

    def channel(self, name: str) -> np.ndarray:
        try:
            c = self.channels.index(name)
        except ValueError:
            raise UnknownChannel(name) from None
        return self.data[:, c]

    def __len__(self):
        return len(self.data)


@dataclass(frozen=True)
class OmegaImage:
    omega: np.ndarray
    alpha: float
    pair: tuple[int, int]
    channel: str


def pdg_transform_stack(stack: ZStack, channel: str, alpha: float = 0.99) -> list[OmegaImage]:
    """One omega image per pair of consecutive planes of `channel`."""
    planes = stack.channel(channel)
    if len(planes) < 2:
        raise TooFewFrames(f"need at least 2 planes, got {len(planes)}")
    out = []
    for z in range(len(planes) - 1):
        m = _pdg.pdg_map(planes[z], planes[z + 1], alpha, pair=(z, z + 1))
        out.append(OmegaImage(m.omega, alpha, (z, z + 1), channel))
    return out


def split_signs(img) -> tuple[np.ndarray, np.ndarray]:
    """(|min(omega, 0)|, max(omega, 0)); positive minus negative gives omega back."""
    w = img.omega if isinstance(img, OmegaImage) else np.asarray(img, dtype=float)
    neg = -np.minimum(w, 0.0)
    pos = np.maximum(w, 0.0)
    return neg + 0.0, pos


def stable_mask(img, eps: float = 0.0) -> np.ndarray:
    """Pixels whose information is unchanged between the two planes (|omega| <= eps)."""
    w = img.omega if isinstance(img, OmegaImage) else np.asarray(img, dtype=float)
    return np.abs(w) <= eps


def lil_rescale(img, depth: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Map the occupied levels of a deep integer image onto 0..255 in order.

    With at most 256 occupied levels the map is one-to-one and spreads the
    levels evenly from 0 to 255.  With more, the sorted levels are cut into
    exactly 256 groups of consecutive levels holding about the same number
    of pixels (see :func:`_equal_frequency_groups`).

    Returns
    -------
    out : ndarray of uint8
    level_map : ndarray, shape (n_levels, 2)
        Rows ``(input level, output level)`` sorted by input level.
    """
    a = np.asarray(img)
    if a.size == 0:
        raise ValueError("image has no pixels")
    if depth is not None and not 9 <= depth <= 16:
        raise ValueError("native depth must be 9..16 bits")
    if not np.issubdtype(a.dtype, np.integer):
        if not np.all(a == np.round(a)):
            raise ValueError("LIL rescale needs integer intensities")
        a = a.astype(np.int64)
    levels, inverse, counts = np.unique(a.ravel(), return_inverse=True, return_counts=True)
    n = len(levels)
    groups = np.arange(n) if n <= 256 else _equal_frequency_groups(counts, 256)
    n_groups = groups.max() + 1
    if n_groups == 1:
        target = np.zeros(n, dtype=np.int64)
    else:
        target = np.round(groups * 255.0 / (n_groups - 1)).astype(np.int64)
    out = target[inverse].reshape(a.shape).astype(np.uint8)
    return out, np.stack([levels, target], axis=1)


def _equal_frequency_groups(counts, n_bins):
    """Group consecutive levels into exactly `n_bins` bins of similar pixel count.

    A bin is closed once it holds its share of the pixels not yet binned,
    so one heavily occupied level takes a single bin without starving the
    rest.  When the levels left are no more than the bins left, every level
    gets its own bin.  Needs ``len(counts) >= n_bins``.
    """
    n = len(counts)
    groups = np.empty(n, dtype=np.int64)
    g, acc, remaining = 0, 0, int(np.sum(counts))
    for i, c in enumerate(counts):
        groups[i] = g
        acc += int(c)
        levels_left, bins_left = n - i - 1, n_bins - g - 1
        if levels_left and bins_left and (levels_left <= bins_left or acc * (bins_left + 1) >= remaining):
            remaining -= acc
            acc = 0
            g += 1
    return groups


def lil_invert(img8, level_map) -> np.ndarray:
    """Undo a one-to-one LIL rescale through its level map."""
    level_map = np.asarray(level_map)
    if len(np.unique(level_map[:, 1])) != len(level_map):
        raise ValueError("level map is not one-to-one")
    lut = np.zeros(256, dtype=level_map.dtype)
    lut[level_map[:, 1]] = level_map[:, 0]
    return lut[np.asarray(img8, dtype=np.int64)]


def section_rescale(img, depth: int) -> np.ndarray:
    """Plain sectioning of the native range into 256 equal bins (for comparison)."""
    return (np.asarray(img, dtype=np.int64) >> (depth - 8)).astype(np.uint8)


def quantize_omega(omega, depth: int = 16) -> np.ndarray:
    """Linear map of a float omega image onto 0..2**depth-1 (for LIL display)."""
    w = np.asarray(omega, dtype=float)
    lo, hi = w.min(), w.max()
    if hi == lo:
        return np.zeros(w.shape, dtype=np.int64)
    return np.round((w - lo) / (hi - lo) * (2**depth - 1)).astype(np.int64)


# -- file formats ---------------------------------------------------------------

def load_stack(path) -> ZStack:
    """Load a stack directory or a raw volume descriptor.

    A directory holds ``stack.json`` plus PGM frames listed under
    ``frames`` as ``[[plane0_ch0, plane0_ch1, ...], ...]``.  A ``.json`` file
    is a raw volume descriptor with keys ``file`` (flat little-endian uint16
    data), ``shape`` ``[z, channel, row, col]`` and the metadata keys.
    """
    path = Path(path)
    if path.is_dir():
        meta = read_json(path / "stack.json")
        planes = [[read_pgm(path / f)[0] for f in plane] for plane in meta["frames"]]
        data = np.array(planes)
    else:
        meta = read_json(path)
        raw = np.fromfile(path.parent / meta["file"], dtype="<u2")
        data = raw.reshape(meta["shape"])
    return ZStack(
        data,
        channels=tuple(meta.get("channels", ["gray"])),
        bit_depth=int(meta.get("bit_depth", 16)),
        pixel_pitch_nm=float(meta.get("pixel_pitch_nm", 64.0)),
        z_step_nm=float(meta.get("z_step_nm", 130.0)),
        z_positions=meta.get("z_positions"),
    )


def _stack_meta(stack):
    return {
        "channels": list(stack.channels),
        "bit_depth": stack.bit_depth,
        "pixel_pitch_nm": stack.pixel_pitch_nm,
        "z_step_nm": stack.z_step_nm,
        "z_positions": list(stack.z_positions),
    }


def save_stack(stack: ZStack, out_dir) -> Path:
    """Write a stack directory of 16-bit PGM planes and ``stack.json``."""
    out = Path(out_dir)
    frames = []
    for z in range(len(stack)):
        plane = []
        for c, name in enumerate(stack.channels):
            fn = f"z{z:04d}_{name}.pgm"
            write_pgm(out / fn, stack.data[z, c], maxval=65535)
            plane.append(fn)
        frames.append(plane)
    write_json(out / "stack.json", {**_stack_meta(stack), "frames": frames})
    return out


def write_omega_volume(path, images: Sequence[OmegaImage], stack: ZStack | None = None):
    """Float64 omega volume as flat little-endian binary plus a ``.json`` descriptor."""
    path = Path(path)
    vol = np.stack([im.omega for im in images]).astype("<f8")
    atomic_write(path, vol.tobytes())
    desc = {
        "file": path.name,
        "dtype": "float64-le",
        "shape": list(vol.shape),
        "alpha": images[0].alpha,
        "channel": images[0].channel,
        "pairs": [list(im.pair) for im in images],
    }
    if stack is not None:
        desc.update({k: v for k, v in _stack_meta(stack).items() if k != "channels"})
    write_json(path.with_suffix(".json"), desc)


def read_omega_volume(descriptor) -> list[OmegaImage]:
    descriptor = Path(descriptor)
    desc = read_json(descriptor)
    vol = np.fromfile(descriptor.parent / desc["file"], dtype="<f8").reshape(desc["shape"])
    return [OmegaImage(vol[i], desc["alpha"], tuple(p), desc["channel"])
            for i, p in enumerate(desc["pairs"])]


def write_level_map_csv(path, level_map):
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["input_level", "output_level"])
    for a, b in np.asarray(level_map):
        w.writerow([int(a), int(b)])
    atomic_write(path, fh.getvalue())
