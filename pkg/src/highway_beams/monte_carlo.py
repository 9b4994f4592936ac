"""Monte-Carlo engine: exact tracing of the serving BS and beam along the lane.

Two exact engines share one geometry:

* :func:`trace_realization` walks from event to event. Candidate events are
  the serving BS's beam edges and its equal-distance crossings with every BS
  ahead of it (midpoints on the same side, the cross-side root otherwise).
* :func:`count_events` builds the nearest-BS partition of the lane in one
  vectorized pass (per-side Voronoi midpoints refined by one cross-side root
  per elementary interval) and counts beam edges inside each serving cell.

Ensembles use :func:`count_events` unless forward-only handover is
requested; the tests hold both engines to identical event sets.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .codebook import Codebook, LaneGeometry, beam_index, handover_point_cross_side
from .closed_form import HandoverProbabilities
from .stochastic_geometry import LosModel, PointProcess1D, Seed, Side, sample_ppp, thin_los

log = logging.getLogger(__name__)

__all__ = [
    "SimulationSetup",
    "Realization",
    "Handover",
    "BeamSwitch",
    "TraceResult",
    "RealizationCounts",
    "MetricStats",
    "EnsembleStats",
    "sample_realization",
    "trace_realization",
    "count_events",
    "counts_from_trace",
    "run_ensemble",
    "box_statistics",
    "sojourn_times",
    "cross_pair_offsets",
    "lone_bottom_takeover",
    "simulate_nbv_walks",
]

Z95 = 1.96


@dataclass(frozen=True)
class SimulationSetup:
    l_h: float
    lambda_bs_top: float
    lambda_bs_bottom: float
    geometry: LaneGeometry
    codebook: Codebook
    los: LosModel = LosModel()
    forward_only: bool = False

    def __post_init__(self):
        if not self.l_h > 0:
            raise ValueError("highway length must be positive")
        if self.lambda_bs_top < 0 or self.lambda_bs_bottom < 0:
            raise ValueError("BS densities must be non-negative")


@dataclass(frozen=True)
class Realization:
    bs_top: PointProcess1D
    bs_bottom: PointProcess1D
    geometry: LaneGeometry
    codebook: Codebook

    @property
    def l_h(self) -> float:
        return self.bs_top.length

    @property
    def empty(self) -> bool:
        return len(self.bs_top) + len(self.bs_bottom) == 0

    @classmethod
    def from_positions(cls, top, bottom, geometry: LaneGeometry, codebook: Codebook, l_h: float) -> "Realization":
        t = PointProcess1D(np.sort(np.asarray(top, dtype=float)), 0.0, l_h, Side.TOP)
        b = PointProcess1D(np.sort(np.asarray(bottom, dtype=float)), 0.0, l_h, Side.BOTTOM)
        return cls(t, b, geometry, codebook)


def sample_realization(setup: SimulationSetup, seed: Seed) -> Realization:
    """Draw one world; draw order is top PPP, top thinning, bottom PPP, bottom thinning."""
    rng = seed.generator()
    top = thin_los(sample_ppp(setup.lambda_bs_top, setup.l_h, rng, Side.TOP), setup.los, rng)
    bottom = thin_los(sample_ppp(setup.lambda_bs_bottom, setup.l_h, rng, Side.BOTTOM), setup.los, rng)
    return Realization(top, bottom, setup.geometry, setup.codebook)


# -- event-driven tracer ------------------------------------------------------------

@dataclass(frozen=True)
class Handover:
    x: float
    from_side: Side
    from_index: int
    to_side: Side
    to_index: int


@dataclass(frozen=True)
class BeamSwitch:
    x: float
    side: Side
    bs_index: int
    old: int
    new: int


@dataclass(frozen=True)
class TraceResult:
    handovers: tuple[Handover, ...]
    beam_switches: tuple[BeamSwitch, ...]
    sojourn_intervals: np.ndarray
    box_switches: np.ndarray
    box_handovers: np.ndarray
    l_h: float
    flags: frozenset[str] = frozenset()

    @property
    def empty(self) -> bool:
        return "empty" in self.flags

    def events(self) -> list[tuple[float, str, str, str]]:
        """Merged event log: (x, 'HO' | 'BS', from, to) sorted by x."""
        rows = [(h.x, "HO", f"{h.from_side.value}:{h.from_index}", f"{h.to_side.value}:{h.to_index}")
                for h in self.handovers]
        rows += [(s.x, "BS", str(s.old), str(s.new)) for s in self.beam_switches]
        rows.sort(key=lambda r: r[0])
        return rows


def _flatten(r: Realization):
    n_t, n_b = len(r.bs_top), len(r.bs_bottom)
    pos = np.concatenate([r.bs_top.points, r.bs_bottom.points])
    w = np.concatenate([np.full(n_t, r.geometry.w_top), np.full(n_b, r.geometry.w_bottom)])
    side = np.concatenate([np.zeros(n_t, dtype=np.int8), np.ones(n_b, dtype=np.int8)])
    idx = np.concatenate([np.arange(n_t), np.arange(n_b)])
    return pos, w, side, idx


_SIDES = (Side.TOP, Side.BOTTOM)


def _box_counts(top: np.ndarray, xs: np.ndarray) -> np.ndarray:
    if top.size < 2:
        return np.zeros(0, dtype=np.int64)
    box = np.searchsorted(top, xs, side="right") - 1
    box = box[(box >= 0) & (box < top.size - 1)]
    return np.bincount(box, minlength=top.size - 1)


def trace_realization(r: Realization, forward_only: bool = False) -> TraceResult:
    """Follow the VU from x = 0 to x = L_h and log every event.

    With ``forward_only`` the VU may only hand over to a BS that is not
    behind it at the handover point.
    """
    L = r.l_h
    if r.empty:
        z = np.zeros(0, dtype=np.int64)
        return TraceResult((), (), np.zeros(0), z, z, L, frozenset({"empty"}))
    pos, w, side, idx = _flatten(r)
    a = r.codebook.boundary_tangents
    key = pos * pos + w * w  # d^2(x) = x^2 - 2 x pos + key

    x = 0.0
    d2 = key - 2.0 * x * pos
    cur = int(np.lexsort((idx, side, d2))[0])
    beam = beam_index(x, pos[cur], w[cur], r.codebook)
    handovers: list[Handover] = []
    switches: list[BeamSwitch] = []
    while True:
        edges = np.concatenate([pos[cur] - w[cur] * a[::-1], pos[cur] + w[cur] * a])
        k = np.searchsorted(edges, x, side="right")
        next_edge = edges[k] if k < edges.size else math.inf

        ahead = pos > pos[cur]
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = (key - key[cur]) / (2.0 * (pos - pos[cur]))
        ok = ahead & (cross > x)
        if forward_only:
            ok &= pos >= cross
        if ok.any():
            cand = np.flatnonzero(ok)
            hx = cross[cand].min()
            tied = cand[cross[cand] == hx]
            new = int(tied[np.argmax(pos[tied])])
        else:
            hx, new = math.inf, -1

        nxt = min(hx, next_edge)
        if nxt >= L:
            break
        if hx <= next_edge:
            handovers.append(Handover(hx, _SIDES[side[cur]], int(idx[cur]), _SIDES[side[new]], int(idx[new])))
            cur = new
            beam = beam_index(hx, pos[cur], w[cur], r.codebook)
        else:
            # moving toward +x, every edge crossed advances the beam by one
            nb = beam + 1
            switches.append(BeamSwitch(next_edge, _SIDES[side[cur]], int(idx[cur]), beam, nb))
            beam = nb
        x = nxt

    ev = np.sort(np.array([h.x for h in handovers] + [s.x for s in switches], dtype=float))
    sojourn = np.diff(np.concatenate([[0.0], ev, [L]]))
    top = r.bs_top.points
    return TraceResult(
        tuple(handovers),
        tuple(switches),
        sojourn,
        _box_counts(top, np.array([s.x for s in switches])),
        _box_counts(top, np.array([h.x for h in handovers])),
        L,
    )


# -- vectorized exact counter -------------------------------------------------------

@dataclass(frozen=True)
class RealizationCounts:
    n_switches: int
    n_handovers: int
    box_switches: np.ndarray
    box_handovers: np.ndarray
    mean_sojourn_m: float
    empty: bool = False
    switch_x: np.ndarray | None = field(default=None, repr=False)
    handover_x: np.ndarray | None = field(default=None, repr=False)
    servers: np.ndarray | None = field(default=None, repr=False)


def serving_cells(r: Realization) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-BS partition of ``[0, L]``.

    Returns ``(lo, hi, server)`` with ``server`` indexing the top BSs first,
    then the bottom BSs. Consecutive cells always have different servers.
    """
    L = r.l_h
    T, B = r.bs_top.points, r.bs_bottom.points
    wt, wb = r.geometry.w_top, r.geometry.w_bottom
    nt = T.size
    if T.size == 0 or B.size == 0:
        P = T if B.size == 0 else B
        mids = 0.5 * (P[:-1] + P[1:])
        lo = np.concatenate([[0.0], mids])
        hi = np.concatenate([mids, [L]])
        server = np.arange(P.size) + (0 if B.size == 0 else nt)
        return lo, hi, server

    mt = 0.5 * (T[:-1] + T[1:])
    mb = 0.5 * (B[:-1] + B[1:])
    cuts = np.sort(np.concatenate([mt, mb]))
    lo = np.concatenate([[0.0], cuts])
    hi = np.concatenate([cuts, [L]])
    probe = 0.5 * (lo + hi)
    i = np.searchsorted(mt, probe)
    j = np.searchsorted(mb, probe)
    t, b = T[i], B[j]
    diff = b - t
    with np.errstate(divide="ignore", invalid="ignore"):
        h = (wb * wb - wt * wt + diff * (b + t)) / (2.0 * diff)
    # top is nearer left of h when b > t, right of h when b < t
    same = diff == 0
    h = np.where(same, np.where(wt <= wb, np.inf, -np.inf), h)
    top_first = (diff > 0) | same
    split = np.clip(h, lo, hi)
    first = np.where(top_first, i, nt + j)
    second = np.where(top_first, nt + j, i)
    seg_lo = np.stack([lo, split], axis=1).ravel()
    seg_hi = np.stack([split, hi], axis=1).ravel()
    seg_srv = np.stack([first, second], axis=1).ravel()
    keep = seg_hi > seg_lo
    seg_lo, seg_hi, seg_srv = seg_lo[keep], seg_hi[keep], seg_srv[keep]
    start = np.concatenate([[True], seg_srv[1:] != seg_srv[:-1]])
    cell_lo = seg_lo[start]
    cell_srv = seg_srv[start]
    cell_hi = np.concatenate([cell_lo[1:], [L]])
    return cell_lo, cell_hi, cell_srv


def count_events(r: Realization, detail: bool = True) -> RealizationCounts:
    if r.empty:
        z = np.zeros(0, dtype=np.int64)
        return RealizationCounts(0, 0, z, z, math.nan, True)
    lo, hi, srv = serving_cells(r)
    pos, w, _, _ = _flatten(r)
    a = r.codebook.boundary_tangents
    p = pos[srv][:, None]
    wa = w[srv][:, None] * a[None, :]
    edges = np.concatenate([p - wa, p + wa], axis=1)
    inside = (edges > lo[:, None]) & (edges < hi[:, None])
    n_sw = int(inside.sum())
    n_ho = int(srv.size - 1)
    if not detail:
        return RealizationCounts(n_sw, n_ho, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                                 r.l_h / (n_sw + n_ho + 1))
    sw_x = np.sort(edges[inside])
    ho_x = lo[1:]
    top = r.bs_top.points
    return RealizationCounts(
        n_sw,
        n_ho,
        _box_counts(top, sw_x),
        _box_counts(top, ho_x),
        r.l_h / (n_sw + n_ho + 1),
        False,
        sw_x,
        ho_x,
        srv,
    )


def counts_from_trace(tr: TraceResult) -> RealizationCounts:
    if tr.empty:
        z = np.zeros(0, dtype=np.int64)
        return RealizationCounts(0, 0, z, z, math.nan, True)
    n_sw, n_ho = len(tr.beam_switches), len(tr.handovers)
    return RealizationCounts(
        n_sw, n_ho, tr.box_switches, tr.box_handovers, float(tr.sojourn_intervals.mean()),
        False,
        np.array([s.x for s in tr.beam_switches]),
        np.array([h.x for h in tr.handovers]),
    )


# -- ensembles ----------------------------------------------------------------------

@dataclass(frozen=True)
class MetricStats:
    mean: float
    variance: float
    count: int
    half_width: float

    @classmethod
    def of(cls, values) -> "MetricStats":
        v = np.asarray(values, dtype=float)
        n = int(v.size)
        if n == 0:
            return cls(math.nan, math.nan, 0, math.nan)
        var = float(v.var(ddof=1)) if n > 1 else 0.0
        return cls(float(v.mean()), var, n, Z95 * math.sqrt(var / n))

    def contains(self, value: float, scale: float = 1.0) -> bool:
        return abs(value - self.mean) <= scale * self.half_width

    def as_dict(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "count": self.count, "ci95_half_width": self.half_width}


@dataclass(frozen=True)
class EnsembleStats:
    bsn: MetricStats
    hon: MetricStats
    ns_box: MetricStats
    nh_box: MetricStats
    sojourn_m: MetricStats
    n_realizations: int
    n_empty: int
    n_without_boxes: int
    switches: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    handovers: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def sojourn_ms(self, speed_mps: float) -> MetricStats:
        s = self.sojourn_m
        f = 1000.0 / speed_mps
        return MetricStats(s.mean * f, s.variance * f * f, s.count, s.half_width * f)

    def as_dict(self) -> dict:
        return {
            "n_realizations": self.n_realizations,
            "n_empty_excluded": self.n_empty,
            "n_without_boxes": self.n_without_boxes,
            "bsn": self.bsn.as_dict(),
            "hon": self.hon.as_dict(),
            "ns_box": self.ns_box.as_dict(),
            "nh_box": self.nh_box.as_dict(),
            "sojourn_m": self.sojourn_m.as_dict(),
        }


def _count_single_side_batch(realizations: Sequence[Realization]) -> list[RealizationCounts]:
    """Counts for many one-sided worlds at once (no per-event detail)."""
    r0 = realizations[0]
    L = r0.l_h
    pts = [r.bs_top.points if len(r.bs_top) else r.bs_bottom.points for r in realizations]
    w = r0.geometry.w_top if len(r0.bs_top) or not len(r0.bs_bottom) else r0.geometry.w_bottom
    sizes = np.array([p.size for p in pts])
    P = np.concatenate(pts)
    out = []
    if P.size:
        g = np.repeat(np.arange(len(pts)), sizes)
        mid = 0.5 * (P[:-1] + P[1:])
        same = g[:-1] == g[1:]
        lo = np.concatenate([[0.0], np.where(same, mid, 0.0)])
        hi = np.concatenate([np.where(same, mid, L), [L]])
        wa = w * r0.codebook.boundary_tangents
        inside = ((P[:, None] - wa > lo[:, None]).sum(1) + (P[:, None] + wa < hi[:, None]).sum(1))
        sw = np.bincount(g, weights=inside, minlength=len(pts)).astype(np.int64)
    else:
        sw = np.zeros(len(pts), dtype=np.int64)
    z = np.zeros(0, dtype=np.int64)
    for n, k in zip(sizes, sw):
        if n == 0:
            out.append(RealizationCounts(0, 0, z, z, math.nan, True))
        else:
            out.append(RealizationCounts(int(k), int(n - 1), z, z, L / (k + n)))
    return out


def _simulate_one(setup: SimulationSetup, seed: Seed, detail: bool) -> RealizationCounts:
    r = sample_realization(setup, seed)
    if setup.forward_only:
        return counts_from_trace(trace_realization(r, forward_only=True))
    return count_events(r, detail=detail)


def _chunks(n: int, size: int) -> list[range]:
    return [range(s, min(s + size, n)) for s in range(0, n, size)]


def run_ensemble(
    setup: SimulationSetup,
    n_realizations: int,
    master_seed: int,
    *,
    workers: int = 1,
    detail: bool = True,
    checkpoints: int = 10,
    on_checkpoint: Callable[[int, "EnsembleStats"], None] | None = None,
) -> EnsembleStats:
    """Simulate ``n_realizations`` independent worlds.

    Realization ``i`` uses stream ``Seed(master_seed, i)`` and results are
    merged in index order, so the statistics do not depend on ``workers``.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    chunk = max(1, math.ceil(n_realizations / max(checkpoints, 1)))
    ranges = _chunks(n_realizations, chunk)

    one_sided = (setup.lambda_bs_top == 0) != (setup.lambda_bs_bottom == 0)
    batched = one_sided and not detail and not setup.forward_only

    def work(rg: range) -> list[RealizationCounts]:
        if batched and len(rg):
            # one geometry per batch: the side that carries BSs is fixed by the setup
            return _count_single_side_batch([sample_realization(setup, Seed(master_seed, i)) for i in rg])
        return [_simulate_one(setup, Seed(master_seed, i), detail) for i in rg]

    results: list[RealizationCounts] = []
    if workers <= 1:
        parts = map(work, ranges)
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        # finer chunks so every worker has something to do
        sub = max(1, math.ceil(chunk / workers))
        ranges = [r for rg in ranges for r in _chunks_of(rg, sub)]
        parts = pool.map(work, ranges)
    try:
        for part in parts:
            results.extend(part)
            if on_checkpoint is not None and (len(results) % chunk == 0 or len(results) == n_realizations):
                on_checkpoint(len(results), _aggregate(results))
    finally:
        if pool is not None:
            pool.shutdown()
    return _aggregate(results)


def _chunks_of(rg: range, size: int) -> list[range]:
    return [range(s, min(s + size, rg.stop)) for s in range(rg.start, rg.stop, size)]


def _aggregate(results: Sequence[RealizationCounts]) -> EnsembleStats:
    valid = [c for c in results if not c.empty]
    sw = np.array([c.n_switches for c in valid], dtype=float)
    ho = np.array([c.n_handovers for c in valid], dtype=float)
    boxed = [c for c in valid if c.box_switches.size]
    ns = np.concatenate([c.box_switches for c in boxed]) if boxed else np.zeros(0)
    nh = np.concatenate([c.box_handovers for c in boxed]) if boxed else np.zeros(0)
    soj = np.array([c.mean_sojourn_m for c in valid], dtype=float)
    return EnsembleStats(
        MetricStats.of(sw),
        MetricStats.of(ho),
        MetricStats.of(ns),
        MetricStats.of(nh),
        MetricStats.of(soj),
        len(results),
        len(results) - len(valid),
        len(valid) - len(boxed),
        sw,
        ho,
    )


def box_statistics(results: Iterable[TraceResult | RealizationCounts]) -> dict:
    """Pooled per-box means of switches and handovers (boxes = top-BS gaps)."""
    ns, nh, excluded = [], [], 0
    for res in results:
        if res.box_switches.size == 0:
            excluded += 1
            continue
        ns.append(res.box_switches)
        nh.append(res.box_handovers)
    ns_s = MetricStats.of(np.concatenate(ns) if ns else [])
    nh_s = MetricStats.of(np.concatenate(nh) if nh else [])
    return {"ns_box": ns_s, "nh_box": nh_s, "excluded": excluded}


def sojourn_times(result: TraceResult, speed: float) -> np.ndarray:
    """Durations (seconds) of the (BS, beam) serving intervals at ``speed`` m/s."""
    if not speed > 0:
        raise ValueError("speed must be positive")
    return result.sojourn_intervals / speed


# -- oracle samplers for handover offsets and box walks -----------------------------

def _end_margin(setup: SimulationSetup) -> float:
    """Samples start at least 30 mean gaps before x = L_h so the window end cannot truncate them."""
    lam = (setup.lambda_bs_top * setup.los.los_probability(Side.TOP)
           + setup.lambda_bs_bottom * setup.los.los_probability(Side.BOTTOM))
    return 30.0 / lam


def cross_pair_offsets(setup: SimulationSetup, n_pairs: int, seed: Seed) -> tuple[np.ndarray, np.ndarray]:
    """Handover offsets for sampled top BSs whose next LoS neighbour is a bottom BS.

    Returns ``(d_t, d_b)``: handover point minus the top BS, and the bottom
    BS minus the handover point, computed from the equal-distance root.
    """
    d_t, d_b = [], []
    got, i = 0, 0
    wt, wb = setup.geometry.w_top, setup.geometry.w_bottom
    margin = _end_margin(setup)
    while got < n_pairs:
        r = sample_realization(setup, seed.substream(i))
        i += 1
        T, B = r.bs_top.points, r.bs_bottom.points
        if T.size == 0 or B.size == 0:
            continue
        merged = np.concatenate([T, B])
        is_top = np.concatenate([np.ones(T.size, bool), np.zeros(B.size, bool)])
        order = np.argsort(merged, kind="stable")
        merged, is_top = merged[order], is_top[order]
        sel = np.flatnonzero(is_top[:-1] & ~is_top[1:] & (merged[:-1] < r.l_h - margin))
        bt, bb = merged[sel], merged[sel + 1]
        h = np.array([handover_point_cross_side(t, b, wt, wb) for t, b in zip(bt, bb)])
        d_t.append(h - bt)
        d_b.append(bb - h)
        got += sel.size
    return np.concatenate(d_t)[:n_pairs], np.concatenate(d_b)[:n_pairs]


def lone_bottom_takeover(setup: SimulationSetup, n_opportunities: int, seed: Seed) -> tuple[int, int]:
    """(taken, opportunities) over boxes holding exactly one bottom BS.

    ``taken`` counts boxes whose bottom BS serves the VU at some point. A lone
    bottom BS at gap ``x`` after the top BS and ``y`` before the next one is
    served iff ``x * y > W_b^2 - W_t^2``.
    """
    taken = seen = 0
    i = 0
    margin = _end_margin(setup)
    while seen < n_opportunities:
        r = sample_realization(setup, seed.substream(i))
        i += 1
        T, B = r.bs_top.points, r.bs_bottom.points
        if T.size < 2 or B.size == 0:
            continue
        box = np.searchsorted(T, B, side="right") - 1
        inner = (box >= 0) & (box < T.size - 1)
        per_box = np.bincount(box[inner], minlength=T.size - 1)
        lone = np.flatnonzero(inner & (per_box[np.clip(box, 0, T.size - 2)] == 1)
                              & (T[np.clip(box, 0, T.size - 1)] < r.l_h - margin))
        if lone.size == 0:
            continue
        _, _, srv = serving_cells(r)
        served = np.isin(T.size + lone, srv)
        take = min(lone.size, n_opportunities - seen)
        taken += int(served[:take].sum())
        seen += take
    return taken, seen


def simulate_nbv_walks(n_b: int, probs: HandoverProbabilities, n_walks: int, seed: Seed) -> np.ndarray:
    """Histogram of served bottom BSs from the top/bottom handover state machine.

    The walk starts on the top BS and visits the ``n_b`` bottom BSs in order.
    From top it moves to the bottom BS with ``P_tb``; from a bottom BS it
    moves to the next bottom BS with ``P_bb`` and otherwise returns to the
    next top BS, which ends the box.
    """
    rng = seed.generator()
    on_bottom = np.zeros(n_walks, dtype=bool)
    done = np.zeros(n_walks, dtype=bool)
    served = np.zeros(n_walks, dtype=np.int64)
    for _ in range(n_b):
        u = rng.random(n_walks)
        go_b = ~done & ~on_bottom & (u < probs.tb)
        stay_b = ~done & on_bottom & (u < probs.bb)
        leave = ~done & on_bottom & ~(u < probs.bb)
        served += go_b | stay_b
        done |= leave
        on_bottom = (on_bottom & ~leave) | go_b
    return np.bincount(served, minlength=n_b + 1)
