"""Beam-training time budgets and the training-to-connectivity ratio (TCR).

Times are in milliseconds, speeds in m/s, lengths in meters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SS_PERIODS_MS",
    "CSI_PERIODS_SLOTS",
    "OverheadConfig",
    "OverheadReport",
    "SaturationError",
    "CsiFeasibility",
    "ssb_count",
    "t_handover",
    "t_beamswitch",
    "tcr",
    "overhead_report",
    "feasible_csi_periods",
]

SS_PERIODS_MS = (5, 10, 20, 40, 80, 160)
CSI_PERIODS_SLOTS = (5, 10, 20, 40, 80, 160, 320, 640)
SSB_CAPACITY = 64


class SaturationError(ValueError):
    """Beam training consumes the whole trip; the link never settles."""


@dataclass(frozen=True)
class OverheadConfig:
    codebook_bs: int = 72
    codebook_vu: int = 4
    tau_ss: float = 5.0
    tau_sym: float = 0.125
    speed: float = 60.0 / 3.6
    t_ss_period: int = 20
    t_csi_period: int = 20
    slot_symbols: int = 14
    fractional_ssb: bool = False

    def __post_init__(self):
        if self.codebook_bs < 1 or self.codebook_vu < 1:
            raise ValueError("codebook sizes must be positive")
        if not (self.tau_ss > 0 and self.tau_sym > 0):
            raise ValueError("tau_ss and tau_sym must be positive")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        if self.t_ss_period not in SS_PERIODS_MS:
            raise ValueError(f"t_ss_period must be one of {SS_PERIODS_MS} ms")
        if self.t_csi_period not in CSI_PERIODS_SLOTS:
            raise ValueError(f"t_csi_period must be one of {CSI_PERIODS_SLOTS} slots")
        if self.slot_symbols < 1:
            raise ValueError("slot_symbols must be positive")

    @property
    def slot_ms(self) -> float:
        return self.slot_symbols * self.tau_sym


def _check_count(n) -> None:
    if np.any(np.asarray(n) < 0):
        raise ValueError("event counts must be non-negative")


def ssb_count(cfg: OverheadConfig) -> float:
    """Bursts needed to sweep every BS/VU beam pair (whole bursts unless fractional)."""
    n = cfg.codebook_bs * cfg.codebook_vu / SSB_CAPACITY
    return n if cfg.fractional_ssb else float(math.ceil(n))


def t_handover(n_handovers, cfg: OverheadConfig):
    _check_count(n_handovers)
    return n_handovers * ssb_count(cfg) * cfg.tau_ss


def t_beamswitch(n_switches, cfg: OverheadConfig):
    _check_count(n_switches)
    return n_switches * (cfg.codebook_bs * cfg.codebook_vu * cfg.tau_sym)


def travel_time_ms(l_h: float, cfg: OverheadConfig) -> float:
    return 1000.0 * l_h / cfg.speed


def tcr(n_ho, n_bs, l_h: float, cfg: OverheadConfig) -> float:
    """Training time over the remaining connected time of the trip."""
    spent = t_handover(n_ho, cfg) + t_beamswitch(n_bs, cfg)
    total = travel_time_ms(l_h, cfg)
    if spent >= total:
        raise SaturationError(f"overhead {spent:.1f} ms reaches travel time {total:.1f} ms")
    return spent / (total - spent)


@dataclass(frozen=True)
class OverheadReport:
    t_ho: float
    t_bswitch: float
    tcr: float
    switch_share: float

    def as_dict(self) -> dict:
        return {"t_ho_ms": self.t_ho, "t_bswitch_ms": self.t_bswitch, "tcr": self.tcr,
                "switch_share": self.switch_share}


def overhead_report(n_ho, n_bs, l_h: float, cfg: OverheadConfig) -> OverheadReport:
    th = float(t_handover(n_ho, cfg))
    tb = float(t_beamswitch(n_bs, cfg))
    share = tb / (th + tb) if th + tb > 0 else 0.0
    return OverheadReport(th, tb, tcr(n_ho, n_bs, l_h, cfg), share)


@dataclass(frozen=True)
class CsiFeasibility:
    slots: tuple[int, ...]
    ms: tuple[float, ...]
    advisory: bool  # True when no standard period is short enough


def feasible_csi_periods(mean_sojourn: float, cfg: OverheadConfig) -> CsiFeasibility:
    """Standard CSI-RS periods strictly shorter than the mean beam sojourn (ms)."""
    if not mean_sojourn > 0:
        raise ValueError("mean sojourn must be positive")
    ok = [s for s in CSI_PERIODS_SLOTS if s * cfg.slot_ms < mean_sojourn]
    return CsiFeasibility(tuple(ok), tuple(s * cfg.slot_ms for s in ok), not ok)
