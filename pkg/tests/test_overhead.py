import math

import pytest
from hypothesis import given, strategies as st

from highway_beams.overhead import (
    CSI_PERIODS_SLOTS, OverheadConfig, SaturationError, feasible_csi_periods, overhead_report, ssb_count,
    t_beamswitch, t_handover, tcr,
)

CFG = OverheadConfig(codebook_bs=48, codebook_vu=12)
counts = st.floats(0, 1e3)


def test_worked_budget():
    assert ssb_count(CFG) == 9.0
    assert t_handover(1, CFG) == pytest.approx(45.0)
    assert t_beamswitch(1, CFG) == pytest.approx(72.0)
    assert t_handover(10, CFG) == pytest.approx(450.0)


def test_partial_burst_rounds_up():
    cfg = OverheadConfig(codebook_bs=72, codebook_vu=4)
    assert ssb_count(cfg) == 5.0
    assert ssb_count(OverheadConfig(codebook_bs=72, codebook_vu=4, fractional_ssb=True)) == 4.5


def test_zero_counts_zero_overhead():
    assert t_handover(0, CFG) == 0 and t_beamswitch(0, CFG) == 0
    assert tcr(0, 0, 1e4, CFG) == 0
    assert overhead_report(0, 0, 1e4, CFG).switch_share == 0.0


@given(counts, counts)
def test_budgets_linear(a, b):
    assert t_handover(a + b, CFG) == pytest.approx(t_handover(a, CFG) + t_handover(b, CFG))
    assert t_beamswitch(a + b, CFG) == pytest.approx(t_beamswitch(a, CFG) + t_beamswitch(b, CFG))


@given(counts, counts, st.floats(0.1, 100), st.floats(1e-3, 100))
def test_tcr_monotone(n_ho, n_bs, speed, dn):
    lo = OverheadConfig(48, 12, speed=speed)
    hi = OverheadConfig(48, 12, speed=speed * 1.5)
    l_h = 1e6
    base = tcr(n_ho, n_bs, l_h, lo)
    assert tcr(n_ho + dn, n_bs, l_h, lo) > base
    assert tcr(n_ho, n_bs + dn, l_h, lo) > base
    if n_ho + n_bs > 0:
        assert tcr(n_ho, n_bs, l_h, hi) > base


@given(counts, counts)
def test_switch_share_bounded(n_ho, n_bs):
    r = overhead_report(n_ho, n_bs, 1e7, CFG)
    assert 0.0 <= r.switch_share <= 1.0
    assert r.as_dict()["tcr"] == r.tcr


def test_saturation_raises():
    with pytest.raises(SaturationError):
        tcr(1000, 1000, 100.0, CFG)


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        t_handover(-1, CFG)
    with pytest.raises(ValueError):
        t_beamswitch(-1, CFG)


def test_csi_periods_against_sojourn():
    cfg = OverheadConfig()
    f = feasible_csi_periods(78.0, cfg)
    assert f.slots == (5, 10, 20, 40) and not f.advisory
    assert f.ms == tuple(s * 1.75 for s in f.slots)
    assert feasible_csi_periods(math.inf, cfg).slots == CSI_PERIODS_SLOTS
    tight = feasible_csi_periods(0.1, cfg)
    assert tight.slots == () and tight.advisory
    with pytest.raises(ValueError):
        feasible_csi_periods(0.0, cfg)


@given(st.floats(0.01, 2000), st.floats(0.01, 2000))
def test_csi_set_nested(a, b):
    lo, hi = sorted((a, b))
    assert set(feasible_csi_periods(lo, OverheadConfig()).slots) <= set(feasible_csi_periods(hi, OverheadConfig()).slots)


@pytest.mark.parametrize("kw", [dict(t_ss_period=15), dict(t_csi_period=7), dict(speed=0.0), dict(codebook_bs=0),
                                dict(tau_sym=-1.0), dict(slot_symbols=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OverheadConfig(**kw)
