"""One-dimensional Poisson point processes for base-station layouts.

Each side of the highway carries its own homogeneous PPP. Blockage by large
vehicles is modelled as independent thinning with the line-of-sight
probability ``exp(-tau0 * lambda_block)``.

Random streams are counter based: a :class:`Seed` is a ``(master, stream)``
pair used directly as the Philox key, so realization ``i`` of a run draws the
same numbers no matter which worker evaluates it or in what order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "Side",
    "Seed",
    "PointProcess1D",
    "LosModel",
    "GapStats",
    "as_generator",
    "sample_ppp",
    "thin_los",
    "gap_distribution_check",
    "superpose",
]

_U64 = 2**64


class Side(str, Enum):
    TOP = "top"
    BOTTOM = "bottom"


@dataclass(frozen=True)
class Seed:
    """Key of one independent random stream."""

    master: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= self.master < _U64) or not (0 <= self.stream_index < _U64):
            raise ValueError("seed components must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        key = np.array([self.master, self.stream_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "Seed":
        """Child stream; mixes ``index`` into the stream word with splitmix64."""
        z = (self.stream_index + 0x9E3779B97F4A7C15 * (index + 1)) % _U64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % _U64
        return Seed(self.master, z ^ (z >> 31))


def as_generator(seed: Seed | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return seed.generator()


@dataclass(frozen=True)
class PointProcess1D:
    points: np.ndarray
    density: float
    length: float
    side: Side = Side.TOP

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise ValueError("points must be one-dimensional")
        if not (self.density >= 0 and math.isfinite(self.density)):
            raise ValueError(f"invalid density {self.density!r}")
        if pts.size:
            if pts[0] < 0 or pts[-1] > self.length:
                raise ValueError("points must lie within [0, length]")
            if np.any(np.diff(pts) <= 0):
                raise ValueError("points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return int(self.points.size)


@dataclass(frozen=True)
class LosModel:
    """Blockage model: blockers of length ``tau0`` on each side (per meter)."""

    tau0: float = 9.0
    lambda_block_top: float = 1e-4
    lambda_block_bottom: float = 1e-4

    def __post_init__(self):
        for name in ("tau0", "lambda_block_top", "lambda_block_bottom"):
            v = getattr(self, name)
            if not v >= 0:
                raise ValueError(f"{name} must be non-negative, got {v!r}")

    def los_probability(self, side: Side) -> float:
        lam = self.lambda_block_top if Side(side) is Side.TOP else self.lambda_block_bottom
        if self.tau0 == 0 or lam == 0:
            return 1.0
        return math.exp(-self.tau0 * lam)


def _check_finite(name: str, value: float, *, positive: bool = False) -> None:
    if not math.isfinite(value) or value < 0 or (positive and value == 0):
        raise ValueError(f"{name} must be finite and {'> 0' if positive else '>= 0'}, got {value!r}")


def sample_ppp(
    density: float,
    length: float,
    seed: Seed | np.random.Generator,
    side: Side = Side.TOP,
) -> PointProcess1D:
    """Homogeneous PPP on ``[0, length]`` with ``density`` points per meter."""
    _check_finite("density", density)
    _check_finite("length", length, positive=True)
    rng = as_generator(seed)
    n = rng.poisson(density * length) if density > 0 else 0
    pts = np.sort(rng.uniform(0.0, length, n))
    if n > 1 and np.any(np.diff(pts) <= 0):
        # duplicate doubles have probability ~n^2 * 2^-53; drop them
        pts = np.unique(pts)
    return PointProcess1D(pts, float(density), float(length), Side(side))


def thin_los(pp: PointProcess1D, los: LosModel, seed: Seed | np.random.Generator) -> PointProcess1D:
    """Keep each point independently with the side's LoS probability."""
    p = los.los_probability(pp.side)
    if p == 1.0:
        return pp
    rng = as_generator(seed)
    keep = rng.random(len(pp)) < p
    return PointProcess1D(pp.points[keep], pp.density * p, pp.length, pp.side)


def superpose(a: PointProcess1D, b: PointProcess1D) -> PointProcess1D:
    if a.length != b.length:
        raise ValueError("processes must share the same window")
    pts = np.unique(np.concatenate([a.points, b.points]))
    return PointProcess1D(pts, a.density + b.density, a.length, a.side)


@dataclass(frozen=True)
class GapStats:
    count: int = 0
    mean: float = math.nan
    variance: float = math.nan
    gaps: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def empty(self) -> bool:
        return self.count == 0


def gap_distribution_check(pp: PointProcess1D | np.ndarray) -> GapStats:
    """Mean and variance of the gaps between consecutive points.

    Fewer than two points yields an empty :class:`GapStats` (``count == 0``).
    """
    pts = pp.points if isinstance(pp, PointProcess1D) else np.asarray(pp, dtype=float)
    if pts.size < 2:
        return GapStats()
    gaps = np.diff(pts)
    return GapStats(int(gaps.size), float(gaps.mean()), float(gaps.var()), gaps)
