"""Symmetric codebook geometry on a straight lane.

A BS at longitudinal position ``b`` and lateral offset ``w`` from the VU lane
projects its beam edges onto the lane at ``b +/- w * a_k`` where
``a_k = tan(pi/N_c + 2*k*pi/N_c)``, ``k = 0 .. N_c/4 - 1``. Beam 0 is the
broadside beam; indices grow toward +x and are negative toward -x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Codebook",
    "LaneGeometry",
    "PathlossParams",
    "beam_index",
    "beam_boundaries",
    "switch_count_between",
    "handover_point_same_side",
    "handover_point_cross_side",
    "nearest_bs",
]


@dataclass(frozen=True)
class Codebook:
    n_c: int

    def __post_init__(self):
        if int(self.n_c) != self.n_c or self.n_c < 4 or self.n_c % 4:
            raise ValueError(f"codebook size must be a positive multiple of 4, got {self.n_c!r}")

    @classmethod
    def from_beamwidth(cls, degrees: float) -> "Codebook":
        n = 360.0 / degrees
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"beamwidth {degrees} deg does not divide 360")
        return cls(int(round(n)))

    @property
    def beamwidth_deg(self) -> float:
        return 360.0 / self.n_c

    @property
    def quarter(self) -> int:
        return self.n_c // 4

    @cached_property
    def boundary_tangents(self) -> np.ndarray:
        k = np.arange(self.quarter)
        a = np.tan(np.pi / self.n_c + 2.0 * np.pi * k / self.n_c)
        a.setflags(write=False)
        return a


@dataclass(frozen=True)
class LaneGeometry:
    """Lateral distances from the VU lane centerline to each BS line."""

    w_top: float
    w_bottom: float
    lane_width: float = 3.7
    n_lanes: int = 4

    def __post_init__(self):
        if not (self.w_top > 0 and self.w_bottom > 0):
            raise ValueError("lateral distances must be positive")

    @property
    def vu_on_top(self) -> bool:
        return self.w_top < self.w_bottom

    @classmethod
    def from_lanes(
        cls,
        vu_lane: int,
        n_lanes: int = 4,
        lane_width: float = 3.7,
        bs_setback: float = 0.0,
        antenna_height: float | None = None,
    ) -> "LaneGeometry":
        """Lanes are numbered 1..n_lanes from the top road edge.

        BS lines sit ``bs_setback`` meters outside each road edge. With
        ``antenna_height`` the planar offset is replaced by ``sqrt(w^2 + h^2)``.
        """
        if not 1 <= vu_lane <= n_lanes:
            raise ValueError(f"vu_lane must be in 1..{n_lanes}")
        w_t = bs_setback + (vu_lane - 0.5) * lane_width
        w_b = bs_setback + (n_lanes - vu_lane + 0.5) * lane_width
        if antenna_height:
            w_t, w_b = math.hypot(w_t, antenna_height), math.hypot(w_b, antenna_height)
        return cls(w_t, w_b, lane_width, n_lanes)


@dataclass(frozen=True)
class PathlossParams:
    c_gain: float = 1.0
    alpha: float = 2.0

    def __post_init__(self):
        if not (self.c_gain > 0 and self.alpha > 0):
            raise ValueError("pathloss gain and exponent must be positive")

    def pathloss(self, r):
        return self.c_gain * np.power(r, self.alpha)


def beam_boundaries(bs_x: float, w: float, codebook: Codebook) -> np.ndarray:
    """Sorted lane positions of all N_c/2 beam edges of one BS."""
    p = w * codebook.boundary_tangents
    return np.concatenate([bs_x - p[::-1], bs_x + p])


def beam_index(vu_x, bs_x: float, w: float, codebook: Codebook):
    """Signed beam index serving lane position ``vu_x``; ties go to the +x beam."""
    if not w > 0:
        raise ValueError("w must be positive")
    p = w * codebook.boundary_tangents
    d = np.asarray(vu_x, dtype=float) - bs_x
    idx = np.searchsorted(p, d, side="right") - np.searchsorted(p, -d, side="left")
    return int(idx) if idx.ndim == 0 else idx


def switch_count_between(x_start: float, x_end: float, bs_x: float, w: float, codebook: Codebook) -> int:
    """Beam edges of the BS lying strictly inside ``(x_start, x_end)``."""
    if x_end < x_start:
        raise ValueError("x_start must not exceed x_end")
    b = beam_boundaries(bs_x, w, codebook)
    return int(np.searchsorted(b, x_end, side="left") - np.searchsorted(b, x_start, side="right"))


def handover_point_same_side(b_i: float, b_next: float) -> float:
    if not b_i < b_next:
        raise ValueError("b_i must be smaller than b_next")
    return 0.5 * (b_i + b_next)


def handover_point_cross_side(b_t: float, b_b: float, w_t: float, w_b: float) -> float | None:
    """Lane position equidistant from a top BS and a bottom BS.

    Returns ``None`` when both BSs share the same abscissa; the nearer line
    then serves everywhere and there is no crossing.
    """
    if b_b == b_t:
        return None
    return (w_b * w_b - w_t * w_t + (b_b - b_t) * (b_b + b_t)) / (2.0 * (b_b - b_t))


def nearest_bs(x: float, positions: np.ndarray, offsets: np.ndarray) -> int:
    """Index of the BS with the smallest Euclidean distance to lane point x."""
    d2 = (np.asarray(positions) - x) ** 2 + np.asarray(offsets) ** 2
    return int(np.argmin(d2))
