"""Closed-form expectations of beam-switch and handover counts.

Single-side deployment (all BSs on one side):

* switches between neighbours at distance ``d``: ``2 * #{k : d > 2 w a_k}``
* mean over ``d ~ Exp(lambda)``: ``2 * sum_k exp(-2 w lambda a_k)``
* highway totals ``BSN = lambda L * E[N]`` and ``HON = lambda L - 1``

Double-side deployment (VU on the top half, ``w_t < w_b``) is analysed box
by box, a box being the stretch between two consecutive top BSs. The number
of bottom BSs inside a box is geometric with ratio ``lambda_b / lambda_tb``;
the number of those that actually serve the VU follows the absorbing walk of
:func:`conditional_pmf_nbv`. Distances between non-consecutive points are
treated as exponential, so the double-side results are approximations
(the Monte-Carlo engine gives the exact value).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaincc

from .codebook import Codebook
from .quadrature import integrate

__all__ = [
    "SingleSideParams",
    "DoubleSideParams",
    "SeriesControl",
    "SeriesResult",
    "SeriesConvergenceError",
    "HandoverProbabilities",
    "conditional_switches",
    "expected_switches_neighbor",
    "bsn_single_side",
    "hon_single_side",
    "prob_handover_tb",
    "prob_handover_bt",
    "handover_probabilities",
    "expected_switches_top_to_handover",
    "expected_switches_handover_to_bottom",
    "expected_switches_cross",
    "handover_offset_densities",
    "handover_offset_cdfs",
    "conditional_pmf_nbv",
    "box_series",
    "expected_switches_box",
    "expected_handovers_box",
    "bsn_double_side",
    "hon_double_side",
]


@dataclass(frozen=True)
class SingleSideParams:
    lambda_los: float
    w: float
    codebook: Codebook
    l_h: float = 10_000.0

    def __post_init__(self):
        if not (self.lambda_los > 0 and self.w > 0 and self.l_h > 0):
            raise ValueError("density, lateral distance and highway length must be positive")


@dataclass(frozen=True)
class DoubleSideParams:
    lambda_t_los: float
    lambda_b_los: float
    w_t: float
    w_b: float
    codebook: Codebook
    l_h: float = 10_000.0

    def __post_init__(self):
        if not (self.lambda_t_los > 0 and self.lambda_b_los > 0):
            raise ValueError("LoS densities must be positive")
        if not (0 < self.w_t <= self.w_b):
            raise ValueError("the VU must be on the top half: 0 < w_t <= w_b")
        if not self.l_h > 0:
            raise ValueError("highway length must be positive")

    @property
    def lambda_tb(self) -> float:
        return self.lambda_t_los + self.lambda_b_los

    @property
    def c(self) -> float:
        """Squared-offset gap ``w_b^2 - w_t^2``."""
        return self.w_b * self.w_b - self.w_t * self.w_t

    def top(self) -> SingleSideParams:
        return SingleSideParams(self.lambda_t_los, self.w_t, self.codebook, self.l_h)

    def bottom(self) -> SingleSideParams:
        return SingleSideParams(self.lambda_b_los, self.w_b, self.codebook, self.l_h)


@dataclass(frozen=True)
class SeriesControl:
    rel_tol: float = 1e-10
    n_max: int = 512

    def __post_init__(self):
        if not (0 < self.rel_tol <= 1e-3):
            raise ValueError("rel_tol must lie in (0, 1e-3]")
        if self.n_max < 16:
            raise ValueError("n_max must be at least 16")


@dataclass(frozen=True)
class SeriesResult:
    value: float
    n_terms: int
    tail_bound: float

    def __float__(self) -> float:
        return self.value


class SeriesConvergenceError(ArithmeticError):
    def __init__(self, partial: float, tail_bound: float, n_terms: int):
        super().__init__(
            f"series not converged after {n_terms} terms: partial={partial!r}, tail bound={tail_bound!r}"
        )
        self.partial = partial
        self.tail_bound = tail_bound
        self.n_terms = n_terms


# -- single side ---------------------------------------------------------------

def conditional_switches(d: float, p: SingleSideParams) -> int:
    """Beam switches while moving between two same-side BSs ``d`` meters apart."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    thresholds = 2.0 * p.w * p.codebook.boundary_tangents
    return 2 * int(np.searchsorted(thresholds, d, side="left"))


def expected_switches_neighbor(p: SingleSideParams) -> float:
    a = p.codebook.boundary_tangents
    return float(2.0 * np.sum(np.exp(-2.0 * p.w * p.lambda_los * a)))


def bsn_single_side(p: SingleSideParams) -> float:
    return p.lambda_los * p.l_h * expected_switches_neighbor(p)


def _clamped_hon(mean_bs: float) -> float:
    if mean_bs < 1.0:
        warnings.warn(
            f"expected BS count {mean_bs:.3g} < 1; handover count clamped to 0",
            RuntimeWarning,
            stacklevel=3,
        )
        return 0.0
    return mean_bs - 1.0


def hon_single_side(p: SingleSideParams) -> float:
    return _clamped_hon(p.lambda_los * p.l_h)


# -- handover probabilities -------------------------------------------------------

def prob_handover_tb(p: DoubleSideParams, *, abs_tol: float = 1e-12) -> float:
    """P{a lone bottom BS between two top BSs takes over the VU}.

    Integral of ``L exp(-L (x + c/x))`` over ``x > 0`` with ``L = lambda_tb``.
    Substituting ``x = sqrt(c) e^t`` folds it onto ``t >= 0`` as
    ``z cosh(t) exp(-z cosh t)`` with ``z = 2 L sqrt(c)``.
    """
    c = p.c
    if c == 0.0:
        return 1.0
    z = 2.0 * p.lambda_tb * math.sqrt(c)
    if not math.isfinite(z):
        raise ValueError("handover probability integrand is not finite")
    # exp(-z cosh t) < e^-60 beyond t_max
    t_max = math.acosh(max(60.0 / z, 1.0)) + 1.0

    def integrand(t):
        ch = np.cosh(t)
        return z * ch * np.exp(-z * ch)

    val, _ = integrate(integrand, 0.0, t_max, abs_tol=abs_tol, rel_tol=1e-13)
    return min(max(val, 0.0), 1.0)


def prob_handover_bt(p: DoubleSideParams) -> float:
    return 1.0 - prob_handover_tb(p)


@dataclass(frozen=True)
class HandoverProbabilities:
    tb: float

    @property
    def tt(self) -> float:
        return 1.0 - self.tb

    @property
    def bt(self) -> float:
        return 1.0 - self.tb

    @property
    def bb(self) -> float:
        return 1.0 - self.bt


def handover_probabilities(p: DoubleSideParams) -> HandoverProbabilities:
    return HandoverProbabilities(prob_handover_tb(p))


# -- cross-side switch counts ----------------------------------------------------

def expected_switches_top_to_handover(p: DoubleSideParams) -> float:
    """Mean switches from the top BS up to its handover point with a bottom BS.

    Only edges beyond ``sqrt(c)`` can be missed; the branch test compares
    squares so the knots are not moved by rounding.
    """
    lam, c = p.lambda_tb, p.c
    t = p.w_t * p.codebook.boundary_tangents
    beyond = t * t > c
    s = np.sqrt(t[beyond] ** 2 - c)
    # 2 exp(-L t) sinh(L s) written without overflow
    missed = np.exp(-lam * (t[beyond] - s)) - np.exp(-lam * (t[beyond] + s))
    return float(p.codebook.quarter - np.sum(missed))


def expected_switches_handover_to_bottom(p: DoubleSideParams) -> float:
    lam, c = p.lambda_tb, p.c
    u = p.w_b * p.codebook.boundary_tangents
    return float(np.sum(np.exp(-lam * (u + np.sqrt(u * u + c)))))


def expected_switches_cross(p: DoubleSideParams) -> tuple[float, float]:
    """(E[N_tb], E[N_bt]); both legs share one expression."""
    e = expected_switches_top_to_handover(p) + expected_switches_handover_to_bottom(p)
    return e, e


def handover_offset_densities(p: DoubleSideParams, y):
    """Densities of the handover offsets measured from the top and bottom BS.

    ``d_h^t = x/2 + c/(2x)`` lives on ``y >= sqrt(c)`` and has two branches.
    ``d_h^b = x/2 - c/(2x)`` is evaluated on the whole real line: negative
    values are handover points past the bottom BS (they carry zero switches).
    """
    lam, c = p.lambda_tb, p.c
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inside = y > math.sqrt(c)
        s = np.sqrt(np.where(inside, y * y - c, 1.0))
        r = y / s
        f_t = lam * (r + 1.0) * np.exp(-lam * (y + s)) + lam * (r - 1.0) * np.exp(-lam * (y - s))
        f_t = np.where(inside, f_t, 0.0)
        q = np.sqrt(y * y + c)
        f_b = lam * (y / q + 1.0) * np.exp(-lam * (y + q)) if c > 0 else np.where(
            y > 0, 2.0 * lam * np.exp(-2.0 * lam * y), 0.0)
    if f_t.ndim == 0:
        return float(f_t), float(f_b)
    return f_t, f_b


def handover_offset_cdfs(p: DoubleSideParams, y):
    """CDFs matching :func:`handover_offset_densities` (for KS tests)."""
    lam, c = p.lambda_tb, p.c
    y = np.asarray(y, dtype=float)
    inside = y > math.sqrt(c)
    yt = np.where(inside, y, math.sqrt(c))
    s = np.sqrt(yt * yt - c)
    F_t = np.where(inside, np.exp(-lam * (yt - s)) - np.exp(-lam * (yt + s)), 0.0)
    F_b = 1.0 - np.exp(-lam * (y + np.sqrt(y * y + c)))
    F_b = np.clip(F_b, 0.0, 1.0)
    if F_t.ndim == 0:
        return float(F_t), float(F_b)
    return F_t, F_b


# -- box analysis ----------------------------------------------------------------

def _pmf(n_b: int, hp: HandoverProbabilities) -> np.ndarray:
    out = np.zeros(n_b + 1)
    if n_b == 0:
        out[0] = 1.0
        return out
    ptt, ptb, pbt, pbb = hp.tt, hp.tb, hp.bt, hp.bb
    out[0] = ptt**n_b
    k = np.arange(1, n_b + 1)
    # run of k served bottom BSs starting at the n-th one (n = 1 .. n_b - k + 1)
    tail = n_b - k
    if ptt < 1.0:
        early = pbt * (1.0 - ptt**tail) / (1.0 - ptt)
    else:
        early = pbt * tail
    out[1:] = ptb * pbb ** (k - 1) * (early + ptt**tail)
    return out


def conditional_pmf_nbv(n_b: int, p: DoubleSideParams | HandoverProbabilities) -> np.ndarray:
    """P{n_bv = k | n_b} for k = 0..n_b: number of bottom BSs that serve the VU."""
    if n_b < 0 or int(n_b) != n_b:
        raise ValueError("n_b must be a non-negative integer")
    hp = p if isinstance(p, HandoverProbabilities) else handover_probabilities(p)
    return _pmf(int(n_b), hp)


@dataclass(frozen=True)
class BoxWeights:
    """Per-box event weights plugged into the box series.

    ``top_gap(n)`` is the mean event count over a direct top-to-top pass
    times the probability of ``n`` bottom BSs in the box; ``cross`` counts a
    top-bottom plus bottom-top leg; ``bottom`` counts one bottom-bottom leg.
    """

    top_gap: Callable[[int], float]
    cross: float
    bottom: float
    per_term_max: Callable[[int], float]


def switch_weights(p: DoubleSideParams) -> BoxWeights:
    lam, lt, lb = p.lambda_tb, p.lambda_t_los, p.lambda_b_los
    thresholds = 2.0 * p.w_t * p.codebook.boundary_tangents
    x = lam * thresholds
    e_tb, e_bt = expected_switches_cross(p)
    e_bb = expected_switches_neighbor(p.bottom())
    half = p.codebook.n_c / 2

    def top_gap(n: int) -> float:
        # lt lb^n / n! * int r^n N_t(r) e^{-L r} dr, N_t = 2 * #{k: r > thresholds_k};
        # each threshold gives the regularized upper gamma Q(n + 1, L t_k)
        geom = (lt / lam) * (lb / lam) ** n
        return 2.0 * geom * float(np.sum(gammaincc(n + 1, x)))

    return BoxWeights(top_gap, e_tb + e_bt, e_bb, lambda n: half * (n + 1))


def unit_weights(p: DoubleSideParams) -> BoxWeights:
    lam, lt, lb = p.lambda_tb, p.lambda_t_los, p.lambda_b_los
    return BoxWeights(lambda n: (lt / lam) * (lb / lam) ** n, 2.0, 1.0, lambda n: n + 1.0)


def _geometric_tail(q: float, n: int) -> float:
    """sum_{m > n} (m + 1) q^m."""
    if q >= 1.0:
        return math.inf
    return q ** (n + 1) * ((n + 2) - (n + 1) * q) / (1.0 - q) ** 2


def box_series(p: DoubleSideParams, weights: BoxWeights, ctl: SeriesControl = SeriesControl()) -> SeriesResult:
    """Mean per-box event count for the given weights, summed over n_b."""
    hp = handover_probabilities(p)
    lt, lb, lam = p.lambda_t_los, p.lambda_b_los, p.lambda_tb
    q = lb / lam
    scale = (lt / lam) * max(weights.per_term_max(0), 1.0)
    total = 0.0
    tail = math.inf
    for n in range(ctl.n_max):
        pmf = _pmf(n, hp)
        term = pmf[0] * weights.top_gap(n)
        if n >= 1:
            k = np.arange(1, n + 1)
            served = float(np.sum(pmf[1:] * (weights.cross + (k - 1) * weights.bottom)))
            term += (lt / lam) * q**n * served
        total += term
        # every weight is bounded by per_term_max(n) <= per_term_max(0) * (n + 1)
        tail = scale * _geometric_tail(q, n)
        if tail <= ctl.rel_tol * abs(total):
            return SeriesResult(float(total), n + 1, float(tail))
    raise SeriesConvergenceError(float(total), float(tail), ctl.n_max)


def expected_switches_box(p: DoubleSideParams, ctl: SeriesControl = SeriesControl()) -> SeriesResult:
    """Mean beam switches while crossing one top-to-top box."""
    return box_series(p, switch_weights(p), ctl)


def expected_handovers_box(p: DoubleSideParams, ctl: SeriesControl = SeriesControl()) -> SeriesResult:
    """Mean handovers per box, summed term by term with unit weights."""
    hp = handover_probabilities(p)
    lt, lb, lam = p.lambda_t_los, p.lambda_b_los, p.lambda_tb
    q = lb / lam
    g1 = lt * lb / lam**2
    total = lt / lam + hp.tt * g1 + 2.0 * hp.tb * g1
    tail = math.inf
    for n in range(2, ctl.n_max):
        geom = (lt / lam) * q**n
        pmf = _pmf(n, hp)
        served = 2.0 * pmf[1] + float(np.sum((1.0 + np.arange(2, n)) * pmf[2:n])) + (n + 1) * pmf[n]
        total += hp.tt**n * geom + geom * served
        tail = (lt / lam) * _geometric_tail(q, n)
        if tail <= ctl.rel_tol * abs(total):
            return SeriesResult(float(total), n + 1, float(tail))
    raise SeriesConvergenceError(float(total), float(tail), ctl.n_max)


def bsn_double_side(p: DoubleSideParams, ctl: SeriesControl = SeriesControl()) -> float:
    return p.lambda_t_los * p.l_h * expected_switches_box(p, ctl).value


def hon_double_side(p: DoubleSideParams, ctl: SeriesControl = SeriesControl()) -> float:
    return _clamped_hon(p.lambda_t_los * p.l_h) * expected_handovers_box(p, ctl).value
