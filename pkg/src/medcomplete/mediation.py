"""Mediation-effect estimates on the linear and log-odds scales."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit, logit

from .errors import DomainError, FitError
from .model_fit import INTERCEPT, DesignMatrix, FitResult, fit_logistic, fit_ols, lasso_select

__all__ = [
    "EXPOSURE",
    "MEDIATOR",
    "MediationEstimate",
    "estimate_continuous",
    "estimate_binary",
    "estimate_ternary_variant",
    "binary_effects",
    "bootstrap_se",
]

EXPOSURE = "A"
MEDIATOR = "M"
MIN_N = 30
GRAD_STEP = 1e-5

Scale = Literal["linear", "log_odds"]
Covariates = Mapping[str, Sequence[float]] | None


@dataclass(frozen=True)
class MediationEstimate:
    """Indirect, direct and total effects with their Z statistics.

    On the log-odds scale ``ie`` and ``de`` are ``log OR_NIE`` and
    ``log OR_NDE`` and ``te = ie + de``.
    """

    scale: Scale
    ie: float
    se_ie: float
    de: float
    se_de: float
    te: float
    z_ie: float
    z_de: float
    n: int
    covariates_used: tuple[str, ...] = ()
    details: Mapping[str, float] = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_effects(cls, ie: float, se_ie: float, de: float, se_de: float,
                     scale: Scale = "log_odds", n: int = 0, te: float | None = None,
                     covariates_used: tuple[str, ...] = (),
                     details: Mapping[str, float] | None = None) -> "MediationEstimate":
        """Build an estimate from effect sizes and standard errors."""
        return cls(
            scale=scale,
            ie=float(ie),
            se_ie=float(se_ie),
            de=float(de),
            se_de=float(se_de),
            te=float(ie + de if te is None else te),
            z_ie=_ratio(ie, se_ie),
            z_de=_ratio(de, se_de),
            n=int(n),
            covariates_used=tuple(covariates_used),
            details=dict(details or {}),
        )

    @property
    def or_nie(self) -> float:
        return math.exp(self.ie)

    @property
    def or_nde(self) -> float:
        return math.exp(self.de)


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return float(num) / float(den)
    if num == 0:
        return 0.0
    return math.copysign(math.inf, num)


def _vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def _prepare(a, m, y, covariates: Covariates):
    a, m, y = _vector(a, "a"), _vector(m, "m"), _vector(y, "y")
    n = a.shape[0]
    if m.shape[0] != n or y.shape[0] != n:
        raise DomainError("a, m and y must have equal lengths")
    if n < MIN_N:
        raise DomainError(f"need at least {MIN_N} observations, got {n}")
    cov = {}
    for name, col in (covariates or {}).items():
        if name in (EXPOSURE, MEDIATOR, INTERCEPT):
            raise DomainError(f"covariate name {name!r} is reserved")
        col = _vector(col, name)
        if col.shape[0] != n:
            raise DomainError(f"covariate {name!r} has {col.shape[0]} rows, expected {n}")
        cov[name] = col
    return a, m, y, cov


SELECTION_SCOPES = ("separate", "union", "double")


def _choose_covariates(a, m, y, cov, family, selection: bool, scope: str, seed):
    """Covariate column sets ``(mediator model, outcome model)``.

    ``separate`` selects per model; ``union`` applies the union of both
    selections to both models; ``double`` also adds covariates selected as
    predictors of the exposure.
    """
    m_design = DesignMatrix.build({EXPOSURE: a, **cov})
    y_design = DesignMatrix.build({EXPOSURE: a, MEDIATOR: m, **cov})
    if scope not in SELECTION_SCOPES:
        raise DomainError(f"unknown selection scope {scope!r}")
    if not selection or not cov:
        return m_design, y_design, m_design.names, y_design.names
    m_names = lasso_select(m_design, m, family, forced={EXPOSURE}, seed=seed).selected
    y_names = lasso_select(y_design, y, family, forced={EXPOSURE, MEDIATOR}, seed=seed).selected
    if scope != "separate":
        keep = set(m_names) | set(y_names)
        if scope == "double":
            a_family = "logistic" if np.all((a == 0) | (a == 1)) else "linear"
            a_design = DesignMatrix.build(cov)
            keep |= set(lasso_select(a_design, a, a_family, seed=seed).selected)
        m_names = tuple(k for k in m_design.names if k in keep or k in (INTERCEPT, EXPOSURE))
        y_names = tuple(k for k in y_design.names if k in keep or k in (INTERCEPT, EXPOSURE, MEDIATOR))
    return m_design, y_design, m_names, y_names


def _covariates_in(names: Sequence[str], cov: Mapping[str, np.ndarray]) -> tuple[str, ...]:
    return tuple(k for k in cov if k in names)


def estimate_continuous(a, m, y, covariates: Covariates = None, selection: bool = False,
                        seed: int | None = None, second_order: bool = False,
                        selection_scope: str = "separate") -> MediationEstimate:
    """Product-of-coefficients estimate for continuous M and Y.

    ``alpha`` comes from OLS of M on (1, A, C), ``beta`` and ``tau'`` from OLS
    of Y on (1, A, M, C), ``tau`` from OLS of Y on (1, A, C).  With
    ``selection`` on, LASSO picks covariates separately for the mediator and
    outcome models; the total-effect model reuses the outcome-model set.
    ``se(alpha*beta)`` is the first-order delta-method (Sobel) form; set
    ``second_order`` to add the ``Var(alpha) Var(beta)`` term.
    """
    a, m, y, cov = _prepare(a, m, y, covariates)
    m_design, y_design, m_names, y_names = _choose_covariates(
        a, m, y, cov, "linear", selection, selection_scope, seed)

    m_fit = fit_ols(m_design.subset(m_names), m)
    y_fit = fit_ols(y_design.subset(y_names), y)
    total_fit = fit_ols(y_design.subset([k for k in y_names if k != MEDIATOR]), y)

    alpha, var_alpha = m_fit.coef_of(EXPOSURE), m_fit.var_of(EXPOSURE)
    beta, var_beta = y_fit.coef_of(MEDIATOR), y_fit.var_of(MEDIATOR)
    tau_prime = y_fit.coef_of(EXPOSURE)
    var_ie = beta**2 * var_alpha + alpha**2 * var_beta
    if second_order:
        var_ie += var_alpha * var_beta
    used = tuple(dict.fromkeys(_covariates_in(m_names, cov) + _covariates_in(y_names, cov)))
    return MediationEstimate.from_effects(
        ie=alpha * beta,
        se_ie=math.sqrt(var_ie),
        de=tau_prime,
        se_de=y_fit.se_of(EXPOSURE),
        te=total_fit.coef_of(EXPOSURE),
        scale="linear",
        n=a.shape[0],
        covariates_used=used,
        details={"alpha": alpha, "se_alpha": math.sqrt(var_alpha), "beta": beta,
                 "se_beta": math.sqrt(var_beta), "tau": total_fit.coef_of(EXPOSURE)},
    )


def _softplus(x):
    return np.logaddexp(0.0, x)


def binary_effects(m_coef: Mapping[str, float], y_coef: Mapping[str, float],
                   covariate_means: Mapping[str, float], a_low: float = 0.0,
                   a_high: float = 1.0) -> tuple[float, float]:
    """Closed-form ``(log OR_NIE, log OR_NDE)`` at fixed covariate values.

    Logistic mediator and outcome models without exposure-mediator
    interaction; the indirect effect is the rare-outcome odds-ratio
    expression for a binary mediator.
    """
    base = m_coef[INTERCEPT] + sum(m_coef[k] * covariate_means.get(k, 0.0)
                                   for k in m_coef if k not in (INTERCEPT, EXPOSURE))
    b_a = m_coef[EXPOSURE]
    t_m = y_coef[MEDIATOR]
    lo = base + b_a * a_low
    hi = base + b_a * a_high
    ie = (_softplus(lo) + _softplus(hi + t_m)) - (_softplus(hi) + _softplus(lo + t_m))
    de = y_coef[EXPOSURE] * (a_high - a_low)
    return float(ie), float(de)


def _marginal_effects(m_coef, y_coef, m_cov: np.ndarray, y_cov: np.ndarray,
                      a_low: float, a_high: float) -> tuple[float, float]:
    # g-computation: average counterfactual outcome probabilities over rows.
    m_lin = m_coef[0] + m_cov @ m_coef[2:]
    y_lin = y_coef[0] + y_cov @ y_coef[3:]
    b_a, t_a, t_m = m_coef[1], y_coef[1], y_coef[2]

    def p_y(a, a_star):
        pm = expit(m_lin + b_a * a_star)
        return float(np.mean(expit(y_lin + t_a * a + t_m) * pm + expit(y_lin + t_a * a) * (1.0 - pm)))

    q11, q10, q00 = p_y(a_high, a_high), p_y(a_high, a_low), p_y(a_low, a_low)
    return float(logit(q11) - logit(q10)), float(logit(q10) - logit(q00))


def _jacobian(f: Callable[[np.ndarray], tuple[float, float]], theta: np.ndarray) -> np.ndarray:
    jac = np.empty((2, theta.size))
    for j in range(theta.size):
        h = GRAD_STEP * max(1.0, abs(theta[j]))
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        jac[:, j] = (np.array(f(up)) - np.array(f(down))) / (2.0 * h)
    return jac


def _binary_response(x: np.ndarray, name: str) -> None:
    if not np.all((x == 0) | (x == 1)):
        raise DomainError(f"{name} must be coded 0/1")
    if x.min() == x.max():
        raise DomainError(f"{name} has a single class")


def estimate_binary(a, m, y, covariates: Covariates = None, selection: bool = False,
                    a_low: float = 0.0, a_high: float = 1.0, seed: int | None = None,
                    effect_scale: Literal["conditional", "marginal"] = "conditional",
                    selection_scope: str = "separate") -> MediationEstimate:
    """Odds-ratio NIE/NDE for binary M and Y from two logistic models.

    ``effect_scale="conditional"`` evaluates the closed form at the sample
    covariate means (``de = t_A (a_high - a_low)``); ``"marginal"`` averages
    counterfactual probabilities over the observed covariate rows.  Standard
    errors use the delta method with a central-difference gradient and a
    block-diagonal covariance of the two fits.
    """
    a, m, y, cov = _prepare(a, m, y, covariates)
    _binary_response(m, "m")
    _binary_response(y, "y")
    if a_low == a_high:
        raise DomainError("a_low and a_high must differ")
    if effect_scale not in ("conditional", "marginal"):
        raise DomainError(f"unknown effect_scale {effect_scale!r}")

    m_design, y_design, m_names, y_names = _choose_covariates(
        a, m, y, cov, "logistic", selection, selection_scope, seed)
    m_fit = fit_logistic(m_design.subset(m_names), m)
    y_fit = fit_logistic(y_design.subset(y_names), y)
    for label, fit in (("mediator", m_fit), ("outcome", y_fit)):
        if not fit.converged:
            raise FitError(f"{label} model did not converge")

    k = len(m_fit.coef)
    theta = np.concatenate([m_fit.coef, y_fit.coef])
    if effect_scale == "conditional":
        means = {name: float(cov[name].mean()) for name in cov}

        def effects(t):
            return binary_effects(dict(zip(m_fit.names, t[:k])), dict(zip(y_fit.names, t[k:])),
                                  means, a_low, a_high)
    else:
        m_cov = np.column_stack([cov[c] for c in m_names[2:]]) if len(m_names) > 2 else np.empty((len(a), 0))
        y_cov = np.column_stack([cov[c] for c in y_names[3:]]) if len(y_names) > 3 else np.empty((len(a), 0))

        def effects(t):
            return _marginal_effects(t[:k], t[k:], m_cov, y_cov, a_low, a_high)

    ie, de = effects(theta)
    jac = _jacobian(effects, theta)
    joint = linalg.block_diag(m_fit.covariance, y_fit.covariance)
    var = np.einsum("ij,jk,ik->i", jac, joint, jac)
    used = tuple(dict.fromkeys(_covariates_in(m_names, cov) + _covariates_in(y_names, cov)))
    return MediationEstimate.from_effects(
        ie=ie, se_ie=math.sqrt(max(var[0], 0.0)), de=de, se_de=math.sqrt(max(var[1], 0.0)),
        scale="log_odds", n=a.shape[0], covariates_used=used,
        details={"b_A": m_fit.coef_of(EXPOSURE), "t_A": y_fit.coef_of(EXPOSURE),
                 "t_M": y_fit.coef_of(MEDIATOR)},
    )


def estimate_ternary_variant(g, m, y, covariates: Covariates = None, selection: bool = False,
                             seed: int | None = None, **kwargs) -> MediationEstimate:
    """Per-allele (0 -> 1) log-odds mediation estimate for a 0/1/2 genotype."""
    g = _vector(g, "g")
    if not np.all(np.isin(g, (0.0, 1.0, 2.0))):
        raise DomainError("genotype must be coded 0/1/2")
    return estimate_binary(g, m, y, covariates, selection, a_low=0.0, a_high=1.0, seed=seed, **kwargs)


def bootstrap_se(a, m, y, covariates: Covariates = None, kind: Literal["continuous", "binary"] = "binary",
                 replicates: int = 200, seed: int = 0, **kwargs) -> tuple[float, float]:
    """Nonparametric bootstrap standard errors of ``(ie, de)``.

    Resamples rows with replacement; resamples whose fits fail are skipped.
    Covariate selection is not rerun inside the bootstrap.
    """
    a, m, y, cov = _prepare(a, m, y, covariates)
    estimator = estimate_continuous if kind == "continuous" else estimate_binary
    rng = np.random.default_rng(seed)
    n = a.shape[0]
    draws = []
    for _ in range(replicates):
        idx = rng.integers(0, n, n)
        try:
            est = estimator(a[idx], m[idx], y[idx], {k: v[idx] for k, v in cov.items()}, **kwargs)
        except (FitError, DomainError):
            continue
        draws.append((est.ie, est.de))
    if len(draws) < 2:
        raise FitError("too few successful bootstrap resamples")
    arr = np.array(draws)
    return float(arr[:, 0].std(ddof=1)), float(arr[:, 1].std(ddof=1))
