import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sint
from scipy.special import k1

from highway_beams import closed_form as cf
from highway_beams.closed_form import (
    DoubleSideParams, HandoverProbabilities, SeriesControl, SeriesConvergenceError, SingleSideParams,
)
from highway_beams.codebook import Codebook
from oracles import ray_trace_neighbor_switches, walk_pmf

n_cs = st.sampled_from([4, 8, 16, 32, 64, 72])
lams = st.floats(1e-4, 5e-2)


def double(lt=0.005, lb=0.005, wt=10.0, wb=20.0, n_c=16, l_h=1e4):
    return DoubleSideParams(lt, lb, wt, wb, Codebook(n_c), l_h)


# -- single side ------------------------------------------------------------------

def test_conditional_switches_examples():
    p = SingleSideParams(1e-3, 10.0, Codebook(4), 1e4)
    assert cf.conditional_switches(19.0, p) == 0
    assert cf.conditional_switches(21.0, p) == 2
    assert cf.conditional_switches(0.0, p) == 0
    assert cf.conditional_switches(1e9, SingleSideParams(1e-3, 10.0, Codebook(64), 1e4)) == 32
    with pytest.raises(ValueError):
        cf.conditional_switches(-1.0, p)


@given(st.floats(0, 5000), st.floats(1, 50), n_cs)
def test_conditional_switches_match_ray_trace(d, w, n_c):
    p = SingleSideParams(1e-3, w, Codebook(n_c), 1e4)
    edges = 2 * w * Codebook(n_c).boundary_tangents
    if np.min(np.abs(edges - d)) < 1e-9 * (1 + d):
        return
    assert cf.conditional_switches(d, p) == ray_trace_neighbor_switches(d, w, n_c)


def test_expected_switches_frozen():
    # 2 exp(-0.2) and a 16-beam case, both from a 30-digit reference evaluation
    assert cf.expected_switches_neighbor(SingleSideParams(0.01, 10.0, Codebook(4), 1e4)) == pytest.approx(
        1.6374615061559637173, rel=1e-14)
    assert cf.expected_switches_neighbor(SingleSideParams(0.005, 10.0, Codebook(16), 1e4)) == pytest.approx(
        6.7630914191437734679, rel=1e-14)


def test_expected_switches_limits():
    assert cf.expected_switches_neighbor(SingleSideParams(1e3, 10.0, Codebook(16), 1e4)) == pytest.approx(0, abs=1e-12)
    assert cf.expected_switches_neighbor(SingleSideParams(1e-15, 10.0, Codebook(16), 1e4)) == pytest.approx(8, rel=1e-9)


def test_expected_switches_against_sampled_gaps():
    p = SingleSideParams(0.004, 10.0, Codebook(32), 1e4)
    d = np.random.default_rng(0).exponential(1 / 0.004, 200_000)
    ns = np.array([cf.conditional_switches(x, p) for x in d[:20_000]])
    # vectorized remainder via the same thresholds would not be independent; 2e4 samples suffice
    assert abs(ns.mean() - cf.expected_switches_neighbor(p)) < 3 * ns.std() / math.sqrt(ns.size)


@given(lams, st.floats(1, 40), n_cs)
def test_expected_switches_bounds_and_monotone(lam, w, n_c):
    cb = Codebook(n_c)
    e = cf.expected_switches_neighbor(SingleSideParams(lam, w, cb, 1e4))
    assert 0 <= e <= n_c / 2
    assert cf.expected_switches_neighbor(SingleSideParams(lam * 1.5, w, cb, 1e4)) < e
    assert cf.expected_switches_neighbor(SingleSideParams(lam, w * 1.5, cb, 1e4)) < e
    if 2 * w * lam * 1.5 < 1.0:
        # each term lam*exp(-2 w lam a_k) peaks at 2 w lam a_k = 1, so BSN grows in lam only below that
        assert cf.bsn_single_side(SingleSideParams(lam * 1.5, w, cb, 1e4)) > cf.bsn_single_side(
            SingleSideParams(lam, w, cb, 1e4))


def test_network_totals_are_products():
    p = SingleSideParams(1e-3, 10.0, Codebook(16), 1e4)
    assert cf.hon_single_side(p) == pytest.approx(9.0)
    assert cf.bsn_single_side(p) == pytest.approx(10.0 * cf.expected_switches_neighbor(p))
    q = SingleSideParams(1e-3, 100.0, Codebook(4), 1e4)  # 2 w lambda = 0.2, lambda L = 10
    assert cf.bsn_single_side(q) == pytest.approx(16.374615061559637, rel=1e-14)


def test_hon_clamps_with_warning():
    with pytest.warns(RuntimeWarning):
        assert cf.hon_single_side(SingleSideParams(5e-5, 10.0, Codebook(16), 1e4)) == 0.0
    with pytest.warns(RuntimeWarning):
        assert cf.hon_double_side(double(lt=5e-5, lb=5e-5)) == 0.0


def test_param_validation():
    with pytest.raises(ValueError):
        SingleSideParams(0.0, 10.0, Codebook(4), 1e4)
    with pytest.raises(ValueError):
        double(wt=20.0, wb=10.0)
    with pytest.raises(ValueError):
        SeriesControl(rel_tol=1e-2)
    with pytest.raises(ValueError):
        SeriesControl(n_max=8)


# -- handover probabilities ------------------------------------------------------------

def test_ptb_equal_offsets_is_one():
    p = double(wb=10.0)
    assert cf.prob_handover_tb(p) == 1.0
    assert cf.prob_handover_bt(p) == 0.0


def test_ptb_frozen_and_bessel():
    p = double(0.01, 0.01, 10.0, 20.0)
    assert cf.prob_handover_tb(p) == pytest.approx(0.73851998643985192398, abs=1e-12)
    z = 2 * 0.02 * math.sqrt(300)
    assert cf.prob_handover_tb(p) == pytest.approx(z * k1(z), abs=1e-12)


@given(st.floats(1e-4, 1e-1), st.floats(1, 30), st.floats(0.01, 200))
def test_ptb_bessel_identity(lam, wt, extra):
    p = double(lam / 2, lam / 2, wt, wt + extra)
    z = 2 * lam * math.sqrt(p.c)
    assert abs(cf.prob_handover_tb(p) - z * k1(z)) <= 1e-9


def test_ptb_vanishes_for_huge_offset():
    assert cf.prob_handover_tb(double(0.01, 0.01, 10.0, 5000.0)) < 1e-80


def test_probability_accessors():
    hp = cf.handover_probabilities(double())
    assert hp.tb + hp.tt == 1.0 and hp.bt == hp.tt and hp.bb == hp.tb
    assert 0 <= hp.tb <= 1


# -- cross-side switch counts ------------------------------------------------------------

def test_cross_switches_frozen():
    e = cf.expected_switches_cross(double(0.005, 0.005, 10.0, 20.0, 16))
    assert e[0] == e[1] == pytest.approx(5.5716300002252757724, rel=1e-13)
    far = double(0.005, 0.005, 10.0, 60.0, 16)  # sqrt(c) beyond every top edge
    assert cf.expected_switches_top_to_handover(far) == 4.0
    assert cf.expected_switches_cross(far)[0] == pytest.approx(4.954350581249542685, rel=1e-13)


@pytest.mark.parametrize("wt, wb, n_c, lam", [(10, 20, 16, 0.01), (10, 12, 32, 0.004), (5, 40, 8, 0.02),
                                              (10, 10.5, 64, 0.01)])
def test_cross_switches_against_density_quadrature(wt, wb, n_c, lam):
    p = double(lam / 2, lam / 2, wt, wb, n_c)
    a = Codebook(n_c).boundary_tangents
    sc = math.sqrt(p.c)
    ft = lambda y: cf.handover_offset_densities(p, y)[0]
    fb = lambda y: cf.handover_offset_densities(p, y)[1]
    # edges beyond the handover offset are reached: E = sum_k P(offset > W a_k)
    nth = sum(sint.quad(ft, max(wt * ak, sc), np.inf, limit=400, epsabs=1e-13)[0] for ak in a)
    nhb = sum(sint.quad(fb, wb * ak, np.inf, limit=400, epsabs=1e-13)[0] for ak in a)
    assert cf.expected_switches_top_to_handover(p) == pytest.approx(nth, abs=1e-7)
    assert cf.expected_switches_handover_to_bottom(p) == pytest.approx(nhb, abs=1e-7)


def test_cross_switches_equal_offset_limit():
    p = double(0.005, 0.005, 10.0, 10.0 + 1e-9, 16)
    a = Codebook(16).boundary_tangents
    assert cf.expected_switches_handover_to_bottom(p) == pytest.approx(
        np.sum(np.exp(-0.01 * 2 * 10.0 * a)), rel=1e-7)


@given(lams, st.floats(1, 30), st.floats(0, 100), n_cs)
def test_cross_switches_bounded(lam, wt, extra, n_c):
    e = cf.expected_switches_cross(double(lam / 2, lam / 2, wt, wt + extra, n_c))[0]
    assert -1e-12 <= e <= n_c / 2 + 1e-12


# -- handover offset densities -------------------------------------------------------------

@pytest.mark.parametrize("lam, wt, wb", [(0.01, 10, 20), (0.002, 10, 20), (0.04, 3, 30), (0.01, 10, 10.01)])
def test_densities_normalized(lam, wt, wb):
    p = double(lam / 2, lam / 2, wt, wb)
    sc = math.sqrt(p.c)
    it = sint.quad(lambda y: cf.handover_offset_densities(p, y)[0], sc, sc + 1, epsabs=1e-13)[0] + \
        sint.quad(lambda y: cf.handover_offset_densities(p, y)[0], sc + 1, np.inf, limit=500, epsabs=1e-13)[0]
    ib = sint.quad(lambda y: cf.handover_offset_densities(p, y)[1], -np.inf, 0, limit=500, epsabs=1e-13)[0] + \
        sint.quad(lambda y: cf.handover_offset_densities(p, y)[1], 0, np.inf, limit=500, epsabs=1e-13)[0]
    assert abs(it - 1) < 1e-6 and abs(ib - 1) < 1e-6


def test_density_support_and_cdf_consistency():
    p = double(0.005, 0.005, 10, 20)
    sc = math.sqrt(p.c)
    assert cf.handover_offset_densities(p, sc - 1e-6)[0] == 0.0
    for y in (sc + 0.5, 40.0, 300.0):
        ft = sint.quad(lambda v: cf.handover_offset_densities(p, v)[0], sc, y, epsabs=1e-13)[0]
        fb = sint.quad(lambda v: cf.handover_offset_densities(p, v)[1], -np.inf, y, limit=500, epsabs=1e-13)[0]
        Ft, Fb = cf.handover_offset_cdfs(p, y)
        assert Ft == pytest.approx(ft, abs=1e-9) and Fb == pytest.approx(fb, abs=1e-9)


def test_density_vectorized_matches_scalar():
    p = double()
    ys = np.linspace(-50, 400, 37)
    ft, fb = cf.handover_offset_densities(p, ys)
    for i, y in enumerate(ys):
        assert (ft[i], fb[i]) == cf.handover_offset_densities(p, float(y))


# -- conditional pmf -------------------------------------------------------------------------

def test_pmf_small_cases():
    hp = HandoverProbabilities(0.7)
    np.testing.assert_array_equal(cf.conditional_pmf_nbv(0, hp), [1.0])
    np.testing.assert_allclose(cf.conditional_pmf_nbv(1, hp), [hp.tt, hp.tb], rtol=1e-15)
    np.testing.assert_allclose(cf.conditional_pmf_nbv(3, hp), [0.027, 0.336, 0.294, 0.343], rtol=1e-13)
    with pytest.raises(ValueError):
        cf.conditional_pmf_nbv(-1, hp)


@given(st.integers(0, 40), st.floats(0, 1))
def test_pmf_matches_walk_enumeration(n_b, ptb):
    pmf = cf.conditional_pmf_nbv(n_b, HandoverProbabilities(ptb))
    assert abs(pmf.sum() - 1) < 1e-12
    np.testing.assert_allclose(pmf, walk_pmf(n_b, ptb), atol=1e-13)


def test_pmf_accepts_params():
    p = double()
    np.testing.assert_array_equal(cf.conditional_pmf_nbv(4, p), cf.conditional_pmf_nbv(4, cf.handover_probabilities(p)))


# -- box series ---------------------------------------------------------------------------------

def test_box_series_frozen():
    # reference: 30-digit series with enumerated walk pmf and direct gap integrals
    p = double(0.005, 0.005, 10.0, 20.0, 16)
    assert cf.expected_switches_box(p).value == pytest.approx(10.678251160438660989, rel=1e-9)
    assert cf.expected_handovers_box(p).value == pytest.approx(1.8576997673516857473, rel=1e-9)


def test_box_reduces_to_single_side():
    p = double(0.005, 1e-12, 10.0, 20.0, 32)
    ns = cf.expected_switches_box(p).value
    assert ns == pytest.approx(cf.expected_switches_neighbor(p.top()), rel=1e-9)
    assert cf.expected_handovers_box(p).value == pytest.approx(1.0, rel=1e-9)
    assert cf.bsn_double_side(p) == pytest.approx(cf.bsn_single_side(p.top()), rel=1e-9)


@given(st.floats(1e-3, 3e-2), st.floats(0.05, 10), st.floats(1, 20), st.floats(0, 40), n_cs)
def test_unit_weights_reproduce_handover_series(lt, ratio, wt, extra, n_c):
    p = double(lt, lt * ratio, wt, wt + extra, n_c)
    ctl = SeriesControl(1e-13, 4096)
    a = cf.box_series(p, cf.unit_weights(p), ctl).value
    b = cf.expected_handovers_box(p, ctl).value
    assert a == pytest.approx(b, rel=1e-12)
    assert b >= p.lambda_t_los / p.lambda_tb - 1e-15


def test_truncation_stability():
    p = double(0.004, 0.012, 10.0, 20.0, 32)
    a = cf.expected_switches_box(p, SeriesControl(1e-10)).value
    b = cf.expected_switches_box(p, SeriesControl(1e-12)).value
    assert abs(a - b) / b < 1e-8


def test_series_reports_terms_and_fails_loudly():
    p = double(0.002, 0.01, 10.0, 20.0, 16)
    r = cf.expected_switches_box(p)
    assert r.n_terms > 16 and r.tail_bound <= 1e-10 * r.value
    with pytest.raises(SeriesConvergenceError) as exc:
        cf.expected_switches_box(p, SeriesControl(1e-10, 16))
    assert exc.value.partial > 0 and exc.value.n_terms == 16


def test_handover_series_pmf_expansion():
    # direct expansion: sum_n P(n bottom BSs) * E[1 + n_bv | n] with the enumerated walk pmf
    p = double(0.004, 0.006, 10.0, 20.0)
    hp = cf.handover_probabilities(p)
    q = 0.6
    ref = 0.0
    for n in range(200):
        pmf = walk_pmf(n, hp.tb)
        ref += 0.4 * q**n * (pmf[0] + sum((1 + k) * pmf[k] for k in range(1, n + 1)))
    assert cf.expected_handovers_box(p).value == pytest.approx(ref, rel=1e-9)


def test_bsn_scales_with_length():
    p = double()
    p2 = double(l_h=2e4)
    assert cf.bsn_double_side(p2) == pytest.approx(2 * cf.bsn_double_side(p), rel=1e-15)
