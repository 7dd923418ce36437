import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medcomplete.errors import DegenerateCorrelationError, DomainError
from medcomplete.gauss_num import (
    BvnParams,
    QuadratureSpec,
    adaptive_quad,
    cm_power,
    inside_prob,
    norm_cdf,
    reject_prob_cmt1,
    reject_prob_cmt3,
    theorem_scan,
)

from .oracles import mc_reject, mp_inside, mp_norm_cdf, product_oracle


# ---------------------------------------------------------------- norm_cdf

def test_norm_cdf_at_zero():
    assert norm_cdf(0.0) == 0.5


def test_norm_cdf_at_two_matches_mpmath():
    assert norm_cdf(2.0) == pytest.approx(0.977250, abs=5e-7)
    assert abs(norm_cdf(2.0) - mp_norm_cdf(2.0)) <= 1e-12


def test_central_mass_at_two():
    assert 2 * norm_cdf(2.0) - 1 == pytest.approx(0.9545, abs=5e-5)


@pytest.mark.parametrize("x", np.linspace(-9, 9, 73))
def test_norm_cdf_absolute_error(x):
    assert abs(norm_cdf(x) - mp_norm_cdf(x)) <= 1e-12


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 1.96, 3.0, 5.0, 8.0])
def test_norm_cdf_symmetry(x):
    assert abs(norm_cdf(-x) - (1 - norm_cdf(x))) <= 1e-14


def test_norm_cdf_monotone():
    xs = np.linspace(-10, 10, 2001)
    vals = [norm_cdf(x) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_norm_cdf_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        norm_cdf(bad)


def test_norm_cdf_against_empirical_cdf():
    rng = np.random.default_rng(2024)
    z = np.sort(rng.standard_normal(10_000_000))
    n = z.size
    for x in (-2, -1, 0, 1, 2):
        p = norm_cdf(x)
        emp = np.searchsorted(z, x) / n
        assert abs(emp - p) < 4 * math.sqrt(p * (1 - p) / n)


# ---------------------------------------------------------------- types

def test_params_validation():
    with pytest.raises(DomainError):
        BvnParams(0, 0, 1.5, 2)
    with pytest.raises(DomainError):
        BvnParams(0, 0, 0, 0)
    with pytest.raises(DomainError):
        QuadratureSpec(abs_tol=0)
    with pytest.raises(DomainError):
        QuadratureSpec(outer_range=5)


def test_adaptive_quad_polynomial_and_gaussian():
    val, err = adaptive_quad(lambda x: x**4, [0.0, 2.0])
    assert val == pytest.approx(32 / 5, abs=1e-12)
    val, _ = adaptive_quad(lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi), [-8, 0, 8])
    assert val == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- power

@pytest.mark.parametrize("rho", [0.0, 0.3, 0.5])
def test_cm_power_at_mu2_two(rho):
    assert cm_power(BvnParams(0, 2, rho, 2)) == pytest.approx(0.4773, abs=5e-4)


def test_cm_power_null_matches_product():
    expected = (2 * mp_norm_cdf(2) - 1) * (1 - mp_norm_cdf(2) + mp_norm_cdf(-2))
    assert expected == pytest.approx(0.04343, abs=5e-5)
    assert cm_power(BvnParams(0, 0, 0, 2)) == pytest.approx(expected, abs=1e-10)


def test_cm_power_large_mu2():
    assert cm_power(BvnParams(0, 4, 0.5, 2)) > 0.93
    assert cm_power(BvnParams(0, 3.01, 0.5, 2)) > 0.8


def test_cm_power_requires_mu1_zero():
    with pytest.raises(DomainError):
        cm_power(BvnParams(1, 2, 0, 2))


@pytest.mark.parametrize("rho", [1.0, -1.0])
def test_degenerate_correlation(rho):
    with pytest.raises(DegenerateCorrelationError):
        cm_power(BvnParams(0, 2, rho, 2))
    with pytest.raises(DegenerateCorrelationError):
        reject_prob_cmt3(BvnParams(0, 2, rho, 2), 0.8)


def test_cm_power_nearly_flat_in_rho():
    # curves for rho in {0, .3, .5} overlap visually but differ by up to ~0.007
    spreads = []
    for mu2 in np.arange(0, 5.01, 0.25):
        vals = [cm_power(BvnParams(0, mu2, r, 2)) for r in (0.0, 0.3, 0.5)]
        spreads.append(max(vals) - min(vals))
    assert max(spreads) < 0.01
    assert spreads[8] < 1e-4  # mu2 = 2 == cutoff


def test_cm_power_rho_dependence_is_real():
    lo = cm_power(BvnParams(0, 1, 0.5, 2))
    hi = cm_power(BvnParams(0, 1, 0.0, 2))
    p0, se0 = mc_reject(0, 1, 0.0, 2, None, draws=4_000_000)
    p5, se5 = mc_reject(0, 1, 0.5, 2, None, draws=4_000_000, seed=777)
    assert abs(hi - p0) < 4 * se0 and abs(lo - p5) < 4 * se5
    assert hi - lo > 1e-3


def test_cm_power_monotone_in_mu2():
    for rho in (0.0, 0.3, 0.5, 0.9):
        vals = [cm_power(BvnParams(0, mu2, rho, 2)) for mu2 in np.arange(0, 6.01, 0.1)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- CMT1

def test_cmt1_theorem_point():
    assert reject_prob_cmt1(BvnParams(2, 2, 0, 2)) == pytest.approx(0.25, abs=1e-3)


def test_cmt1_product_point():
    expected = mp_inside(1) * (1 - mp_inside(1))
    assert expected == pytest.approx(0.13441, abs=5e-5)
    assert reject_prob_cmt1(BvnParams(1, 1, 0, 2)) == pytest.approx(expected, abs=1e-10)


def test_cmt1_equals_power_at_mu1_zero():
    p = BvnParams(0, 2, 0.3, 2)
    assert abs(reject_prob_cmt1(p) - cm_power(p)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(u=st.floats(0, 6), c=st.floats(1, 3))
def test_rho_zero_factorization(u, c):
    quad = QuadratureSpec()
    expected = product_oracle(u, u, c)
    assert abs(reject_prob_cmt1(BvnParams(u, u, 0.0, c), quad) - expected) <= quad.abs_tol


# ---------------------------------------------------------------- CMT3

def test_cmt3_below_005_for_unit_means():
    assert reject_prob_cmt3(BvnParams(1, 1, 0.5, 2), 0.8) < 0.05


@pytest.mark.parametrize("mu1,mu2,rho", [(1, 1, 0.5), (0, 2, 0.3), (2, 2, 0), (1, 2, -0.7), (-1, 3, 0.9)])
def test_cmt3_half_equals_cmt1(mu1, mu2, rho):
    p = BvnParams(mu1, mu2, rho, 2)
    assert abs(reject_prob_cmt3(p, 0.5) - reject_prob_cmt1(p)) <= 1e-9


def test_cmt3_monte_carlo_point():
    p = BvnParams(1, 2, 0, 2)
    quad_val = reject_prob_cmt3(p, 0.67)
    mc, se = mc_reject(1, 2, 0, 2, 0.67)
    assert abs(quad_val - mc) <= 3 * se
    assert quad_val <= reject_prob_cmt1(p)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.2, 1.5])
def test_cmt3_delta_domain(delta):
    with pytest.raises(DomainError):
        reject_prob_cmt3(BvnParams(1, 1, 0, 2), delta)


@settings(max_examples=60, deadline=None)
@given(
    mu1=st.floats(-4, 4),
    mu2=st.floats(-5, 5),
    rho=st.floats(-0.95, 0.95),
    d1=st.floats(0.05, 0.95),
    d2=st.floats(0.05, 0.95),
)
def test_cmt3_bounded_and_monotone(mu1, mu2, rho, d1, d2):
    p = BvnParams(mu1, mu2, rho, 2)
    lo, hi = sorted((d1, d2))
    p1 = reject_prob_cmt1(p)
    p_lo = reject_prob_cmt3(p, lo)
    p_hi = reject_prob_cmt3(p, hi)
    assert 0.0 <= p_hi <= p_lo + 1e-9
    assert p_lo <= p1 + 1e-9
    assert p1 <= 1.0


# ---------------------------------------------------------------- theorem scan

def test_theorem_scan_small_grid():
    (rho, u), value = theorem_scan([0, 0.5], [1, 2, 3])
    assert (rho, u) == (0.0, 2.0)
    assert value == pytest.approx(0.25, abs=1e-3)


def test_theorem_scan_single_point():
    _, value = theorem_scan([0.0], [0.0])
    assert value == pytest.approx(product_oracle(0, 0), abs=1e-10)
    assert value == pytest.approx(0.0434, abs=1e-4)


def test_theorem_scan_rho_zero_pointwise():
    quad = QuadratureSpec()
    for u in np.arange(0, 4.01, 0.5):
        (_, _), value = theorem_scan([0.0], [u], quad=quad)
        p = inside_prob(u)
        assert abs(value - p * (1 - p)) <= quad.abs_tol


def test_theorem_holds_for_nonnegative_rho():
    rhos = np.round(np.arange(0, 0.91, 0.1), 10)
    us = np.round(np.arange(0, 4.01, 0.1), 10)
    (rho, u), value = theorem_scan(rhos, us)
    assert (rho, u) == (0.0, 2.0)
    assert value == pytest.approx(0.25, abs=1e-3)


def test_negative_rho_exceeds_quarter():
    # The bound fails under negative dependence; Monte Carlo confirms the quadrature.
    p = reject_prob_cmt1(BvnParams(2, 2, -0.9, 2))
    mc, se = mc_reject(2, 2, -0.9, 2, None, draws=2_000_000)
    assert abs(p - mc) <= 3 * se
    assert p > 0.4


def test_theorem_scan_domain():
    with pytest.raises(DomainError):
        theorem_scan([], [1.0])
    with pytest.raises(DomainError):
        theorem_scan([1.0], [1.0])
    with pytest.raises(DomainError):
        theorem_scan([0.0], [7.0])
