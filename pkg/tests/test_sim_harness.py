import math

import numpy as np
import pytest

from medcomplete.errors import DomainError, StudyAbort
from medcomplete.model_fit import DesignMatrix, fit_logistic, fit_ols
from medcomplete.sim_harness import (
    BINARY_DELTAS,
    CONTINUOUS_DELTAS,
    Dataset,
    MetricsRow,
    ReplicateResult,
    SimConfig,
    evaluate,
    gen_binary,
    gen_continuous,
    gen_screening_cohort,
    replicate_rng,
    roc,
    run_replicate,
    run_study,
)


# ---------------------------------------------------------------- config

def test_config_defaults_and_grids():
    c = SimConfig()
    assert c.delta_grid == CONTINUOUS_DELTAS and c.coef_sd == 4.0
    b = SimConfig("binary")
    assert b.delta_grid == BINARY_DELTAS and b.coef_sd == 1.0
    assert SimConfig(delta_grid=(0.8, 0.6)).delta_grid == (0.6, 0.8)
    keys = SimConfig(delta_grid=(0.6, 0.8)).decision_keys
    assert keys == [("CMT1", None), ("CMT2", 0.8), ("CMT2", 0.6), ("CMT3", 0.8), ("CMT3", 0.6)]


@pytest.mark.parametrize("kw", [
    dict(n=49), dict(replicates=0), dict(delta_grid=(0.5, 1.0)), dict(tau_primes=(0.0,)),
    dict(methods=("CMT9",)), dict(outcome_kind="count"), dict(selection_scope="joint"),
    dict(test_alpha=1.5),
])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        SimConfig(**kw)


def test_study_needs_indirect_effect():
    with pytest.raises(DomainError):
        run_study(SimConfig(alpha_path=0.0, replicates=2))


# ---------------------------------------------------------------- generators

def test_streams_are_keyed_by_arm_and_replicate():
    a = replicate_rng(1, 0.0, 3).random(4)
    assert np.array_equal(a, replicate_rng(1, 0.0, 3).random(4))
    assert not np.array_equal(a, replicate_rng(1, 0.2, 3).random(4))
    assert not np.array_equal(a, replicate_rng(1, 0.0, 4).random(4))
    assert not np.array_equal(a, replicate_rng(2, 0.0, 3).random(4))


@pytest.mark.parametrize("kind", ["continuous", "binary"])
def test_generator_determinism(kind):
    cfg = SimConfig(kind, replicates=1, seed=17)
    gen = gen_continuous if kind == "continuous" else gen_binary
    d1, d2 = gen(cfg, 5, 0.2), gen(cfg, 5, 0.2)
    for x, y in ((d1.a, d2.a), (d1.m, d2.m), (d1.y, d2.y)):
        assert x.tobytes() == y.tobytes()
    assert all(d1.covariates[k].tobytes() == d2.covariates[k].tobytes() for k in d1.covariates)


def test_generator_kind_mismatch():
    with pytest.raises(DomainError):
        gen_binary(SimConfig("continuous"), 0)
    with pytest.raises(DomainError):
        gen_continuous(SimConfig("binary"), 0)


def test_covariate_marginals():
    ds = gen_continuous(SimConfig(n=100_000, replicates=1), 0)
    c = ds.covariates
    n = 100_000
    assert abs(c["C1"].mean() - 0.6) < 4 * math.sqrt(0.24 / n)
    assert abs(c["C3"].mean() - 0.3) < 4 * math.sqrt(0.21 / n)
    p2 = 0.6 / (1 + math.exp(-1.5)) + 0.4 / (1 + math.exp(-1.0))
    assert abs(c["C2"].mean() - p2) < 4 * math.sqrt(p2 * (1 - p2) / n)
    assert abs(c["C4"].std() - 1) < 0.02


def test_continuous_null_structure():
    cfg = SimConfig(alpha_path=0.0, beta_path=0.0, n=100_000, replicates=1)
    ds = gen_continuous(cfg, 0, 0.0)
    cols = {"A": ds.a, **{k: ds.covariates[k] for k in ("C1", "C2", "C3")}}
    fit = fit_ols(DesignMatrix.build(cols), ds.y)
    assert abs(fit.coef_of("A")) < 4 * fit.se_of("A")


def test_continuous_total_effect_plug_in():
    cfg = SimConfig(alpha_path=0.5, beta_path=0.5, n=100_000, replicates=1, pinned_coefficients=0.0)
    ds = gen_continuous(cfg, 0, 0.2)
    fit = fit_ols(DesignMatrix.build({"A": ds.a}), ds.y)
    assert abs(fit.coef_of("A") - (0.2 + 0.25)) < 4 * fit.se_of("A")


def test_binary_mediator_slope_plug_in():
    cfg = SimConfig("binary", alpha_path=0.8, beta_path=0.8, n=100_000, replicates=1, pinned_coefficients=0.0)
    ds = gen_binary(cfg, 0, 0.0)
    fit = fit_logistic(DesignMatrix.build({"A": ds.a}), ds.m)
    assert abs(fit.coef_of("A") - 0.8) < 4 * fit.se_of("A")


def test_binary_null_direct_effect_centered():
    cfg = SimConfig("binary", alpha_path=0.0, beta_path=0.8, n=2000, replicates=1)
    z = []
    for rid in range(60):
        ds = gen_binary(cfg, rid, 0.0)
        cols = {"A": ds.a, "M": ds.m, **{k: ds.covariates[k] for k in ("C1", "C2", "C3")}}
        fit = fit_logistic(DesignMatrix.build(cols), ds.y)
        z.append(fit.coef_of("A") / fit.se_of("A"))
    assert abs(np.mean(z)) < 4 / math.sqrt(len(z))


def test_screening_cohort_layout():
    c = gen_screening_cohort(0, n=500, n_valid=3, n_pleiotropic=2)
    assert c.variants == ("G1", "G2", "G3", "G4", "G5")
    assert c.pleiotropic == {"G4", "G5"}
    for v in c.variants:
        assert set(np.unique(c.columns[v])) <= {0.0, 1.0, 2.0}
    assert set(np.unique(c.columns["X"])) == {0.0, 1.0}
    again = gen_screening_cohort(0, n=500, n_valid=3, n_pleiotropic=2)
    assert all(np.array_equal(c.columns[k], again.columns[k]) for k in c.columns)
    with pytest.raises(DomainError):
        gen_screening_cohort(0, n_valid=0, n_pleiotropic=0)


# ---------------------------------------------------------------- replicate

def test_constant_mediator_fails_fit():
    cfg = SimConfig(replicates=1)
    ds = gen_continuous(cfg, 0)
    broken = Dataset(ds.a, np.ones_like(ds.m), ds.y, ds.covariates, 0.0, 0)
    res = run_replicate(broken, cfg)
    assert res.fit_failed and res.decisions is None and res.estimate is None


def test_cmt3_half_matches_cmt1_per_replicate():
    cfg = SimConfig(replicates=1, delta_grid=(0.5, 0.8))
    for rid in range(20):
        res = run_replicate(gen_continuous(cfg, rid, 0.0), cfg)
        assert res.decisions[("CMT3", 0.5)] == res.decisions[("CMT1", None)]


def test_smoke_batch_continuous_sensitivity():
    cfg = SimConfig(replicates=100, tau_primes=(0.2,))
    hits = 0
    for rid in range(100):
        hits += run_replicate(gen_continuous(cfg, rid, 0.0), cfg).decisions[("CMT1", None)]
    assert abs(hits / 100 - 0.888) <= 0.10


# ---------------------------------------------------------------- evaluate / roc

def _fake(rid, tau, verdict, failed=False):
    decisions = None if failed else {("CMT1", None): verdict, ("CMT3", 0.6): verdict, ("CMT3", 0.8): False}
    return ReplicateResult(rid, tau, None, None, decisions, failed)


def test_perfect_classifier():
    cfg = SimConfig(tau_primes=(0.3,), delta_grid=(0.6, 0.8), methods=("CMT1", "CMT3"))
    results = [_fake(i, 0.0, True) for i in range(10)] + [_fake(i, 0.3, False) for i in range(10)]
    rows = evaluate(results, cfg)
    cmt1 = next(r for r in rows if r.method == "CMT1")
    assert cmt1.youden == 1.0 and cmt1.sensitivity == 1.0 and cmt1.specificity == 1.0


def test_failed_replicates_excluded_and_counted():
    cfg = SimConfig(tau_primes=(0.3,), delta_grid=(0.6, 0.8), methods=("CMT1", "CMT3"))
    results = ([_fake(i, 0.0, True) for i in range(8)] + [_fake(8, 0.0, True, failed=True)]
               + [_fake(i, 0.3, False) for i in range(9)])
    row = evaluate(results, cfg)[0]
    assert row.n_cm == 8 and row.failed_cm == 1 and row.sensitivity == 1.0


def test_empty_arm_is_error():
    cfg = SimConfig(tau_primes=(0.3,), delta_grid=(0.6, 0.8), methods=("CMT1", "CMT3"))
    with pytest.raises(DomainError):
        evaluate([_fake(i, 0.3, False) for i in range(3)], cfg)


def test_coin_flip_youden_near_zero():
    rng = np.random.default_rng(0)
    cfg = SimConfig(tau_primes=(0.3,), delta_grid=(0.6, 0.8), methods=("CMT1", "CMT3"))
    n = 20_000
    results = [_fake(i, 0.0, bool(rng.random() < 0.5)) for i in range(n)]
    results += [_fake(i, 0.3, bool(rng.random() < 0.5)) for i in range(n)]
    row = evaluate(results, cfg)[0]
    assert abs(row.youden) < 4 * math.sqrt(2 * 0.25 / n)


def _row(delta, sens, spec, method="CMT3"):
    return MetricsRow(0.2, method, delta, sens, spec, sens + spec - 1, 10, 10, 0, 0)


def test_roc_tie_goes_to_smaller_delta():
    curve = roc([_row(0.8, 0.6, 0.7), _row(0.7, 0.6, 0.7), _row(None, 0.9, 0.3, "CMT1")])
    assert curve.optimal_delta == 0.7
    assert curve.deltas == (0.7, 0.8)
    assert curve.cmt1_point == pytest.approx((0.7, 0.9))


def test_roc_needs_two_rows():
    with pytest.raises(DomainError):
        roc([_row(0.8, 0.6, 0.7)])


def test_small_study_end_to_end():
    cfg = SimConfig(replicates=30, tau_primes=(0.3,), seed=4)
    study = run_study(cfg)
    assert len(study.results) == 60
    by_key = {(r.method, r.delta): r for r in study.metrics}
    assert by_key[("CMT3", 0.5)].sensitivity == by_key[("CMT1", None)].sensitivity
    assert by_key[("CMT3", 0.5)].specificity == by_key[("CMT1", None)].specificity
    for method in ("CMT2", "CMT3"):
        curve = next(c for c in study.rocs if c.method == method)
        assert curve.optimal_delta in cfg.delta_grid
        pts = curve.points
        assert all(0 <= x <= 1 and 0 <= y <= 1 for x, y in pts)
        assert all(b[0] <= a[0] and b[1] <= a[1] for a, b in zip(pts, pts[1:]))


def test_fit_failure_overrun_aborts():
    # n = 50 with binary layers and wide coefficients separates most datasets
    cfg = SimConfig("binary", 0.8, 0.8, n=50, replicates=20, coef_sd=6.0, selection=False, tau_primes=(0.3,))
    with pytest.raises(StudyAbort):
        run_study(cfg)
