import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from medcomplete.cmt_criteria import critical_value, decide, decision_curve, proportions
from medcomplete.errors import DomainError
from medcomplete.mediation import MediationEstimate


def est_from_z(z_ie, z_de, ie=None, de=None):
    ie = z_ie if ie is None else ie
    de = z_de if de is None else de
    se_ie = ie / z_ie if z_ie else 1.0
    se_de = de / z_de if z_de else 1.0
    return MediationEstimate("linear", ie, se_ie, de, se_de, ie + de, z_ie, z_de, 100)


def test_critical_value():
    assert critical_value(0.05) == pytest.approx(1.959964, abs=1e-6)
    assert critical_value(0.001) == pytest.approx(3.290527, abs=1e-6)
    with pytest.raises(DomainError):
        critical_value(0)


# ---------------------------------------------------------------- proportions

def test_apm_reference_row():
    p = proportions(MediationEstimate.from_effects(-0.0109, 0.0025, -0.005, 0.0844))
    assert p.apm == pytest.approx(0.0109 / 0.0159, abs=1e-12)
    assert round(100 * p.apm) == 69 and int(100 * p.apm) == 68


def test_sapm_reference_z():
    p = proportions(est_from_z(-4.36, -0.0592))
    assert p.sapm == pytest.approx(0.9866, abs=5e-5)


def test_symmetric_case():
    p = proportions(est_from_z(2.0, 2.0, ie=0.3, de=0.3))
    assert p.pm == 0.5 and p.apm == 0.5 and p.sapm == 0.5 and p.psse == 0.5


def test_competitive_mediation():
    p = proportions(est_from_z(3.0, -1.0, ie=1.0, de=-0.9))
    assert p.pm == pytest.approx(10.0)
    assert p.apm == pytest.approx(1 / 1.9)


def test_undefined_proportions():
    p = proportions(est_from_z(0.0, 0.0, ie=0.0, de=0.0))
    assert not p.defined
    assert math.isnan(p.apm) and math.isnan(p.sapm) and math.isnan(p.psse)
    for method, delta in (("CMT2", 0.5), ("CMT3", 0.5)):
        assert not decide(est_from_z(0.0, 0.0, ie=0.0, de=0.0), method, delta).crit_iii


finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=200)
@given(zi=finite, zd=finite, ie=finite, de=finite, c=st.floats(1e-3, 1e3))
def test_proportion_invariants(zi, zd, ie, de, c):
    assume(abs(zi) + abs(zd) > 1e-9 and abs(ie) + abs(de) > 1e-9)
    p = proportions(est_from_z(zi, zd, ie=ie, de=de))
    assert p.defined
    for v in (p.apm, p.sapm, p.psse):
        assert 0.0 <= v <= 1.0
    assert (p.sapm > 0.5) == (abs(zi) > abs(zd))
    assert abs(p.psse - p.sapm**2 / (p.sapm**2 + (1 - p.sapm) ** 2)) <= 1e-12
    if zi or zd:
        assert abs(p.psse - zi**2 / (zi**2 + zd**2)) <= 1e-9
    scaled = proportions(est_from_z(c * zi, c * zd, ie=ie, de=de))
    assert abs(scaled.sapm - p.sapm) <= 1e-12
    flipped = proportions(est_from_z(zi, zd, ie=-ie, de=-de))
    assert flipped.apm == p.apm


# ---------------------------------------------------------------- decide

def test_reference_rs1393823_pattern():
    est = MediationEstimate.from_effects(0.0026, 0.0006, -0.0034, 0.0226)
    assert decide(est, "CMT1", alpha=0.001).verdict
    assert not decide(est, "CMT2", 0.65, alpha=0.001).verdict
    assert decide(est, "CMT3", 0.65, alpha=0.001).verdict


def test_zero_indirect_never_claims():
    est = est_from_z(0.0, 0.1, ie=0.0, de=0.1)
    for method, delta in (("CMT1", None), ("CMT2", 0.6), ("CMT3", 0.6)):
        assert not decide(est, method, delta).verdict


def test_strict_inequalities():
    c = critical_value(0.05)
    assert not decide(est_from_z(c, 0.0), "CMT1", cutoff=c).crit_i
    assert not decide(est_from_z(3.0, c), "CMT1", cutoff=c).crit_ii
    tie = est_from_z(3.0, 1.0)  # sapm = 0.75 exactly
    assert not decide(tie, "CMT3", 0.75).crit_iii


@pytest.mark.parametrize("method,delta", [("CMT1", 0.5), ("CMT2", None), ("CMT3", 0.0), ("CMT3", 1.0), ("CMT4", 0.5)])
def test_method_delta_pairing(method, delta):
    with pytest.raises(DomainError):
        decide(est_from_z(3, 0.5), method, delta)


def test_cutoff_overrides_quantile():
    est = est_from_z(2.05, 0.3)
    assert decide(est, "CMT1").verdict
    assert not decide(est, "CMT1", cutoff=2.1).verdict


positive = st.floats(1e-3, 10)


@settings(max_examples=300)
@given(zi=finite, zd=finite, se_i=positive, se_d=positive, delta=st.floats(0.01, 0.99), alpha=st.floats(1e-4, 0.5))
def test_verdict_structure(zi, zd, se_i, se_d, delta, alpha):
    est = MediationEstimate.from_effects(zi * se_i, se_i, zd * se_d, se_d, scale="linear")
    d1 = decide(est, "CMT1", alpha=alpha)
    for method in ("CMT2", "CMT3"):
        d = decide(est, method, delta, alpha)
        assert d.verdict == (d.crit_i and d.crit_ii and d.crit_iii)
        if d.verdict:
            assert d1.verdict
    if d1.crit_i and d1.crit_ii:
        assert decide(est, "CMT3", 0.5, alpha).verdict == d1.verdict


# ---------------------------------------------------------------- decision_curve

def test_curve_pattern():
    est = est_from_z(3.6, 1.4)  # sapm = 0.72
    assert proportions(est).sapm == pytest.approx(0.72)
    assert [d.verdict for d in decision_curve(est, "CMT3", [0.6, 0.7, 0.8])] == [True, True, False]


def test_curve_singleton_matches_decide():
    est = est_from_z(3.6, 1.4)
    assert decision_curve(est, "CMT2", [0.55]) == [decide(est, "CMT2", 0.55)]


def test_curve_rejects_unsorted_grid():
    with pytest.raises(DomainError):
        decision_curve(est_from_z(3, 1), "CMT3", [0.7, 0.6])


def test_curve_monotone_over_random_estimates():
    grid = np.round(np.arange(0.05, 0.96, 0.05), 10)
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        zi, zd = rng.normal(0, 3, 2)
        ie, de = rng.normal(0, 1, 2)
        est = est_from_z(zi, zd, ie=ie, de=de)
        for method in ("CMT2", "CMT3"):
            v = [d.verdict for d in decision_curve(est, method, grid)]
            assert all(a >= b for a, b in zip(v, v[1:]))
