"""Regression engines: OLS, logistic maximum likelihood and LASSO pre-selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import DomainError, FitError, SeparationError, SingularDesignError

__all__ = [
    "INTERCEPT",
    "DesignMatrix",
    "FitResult",
    "SelectionResult",
    "fit_ols",
    "fit_logistic",
    "lasso_select",
]

INTERCEPT = "intercept"
COND_LIMIT = 1e10
SEPARATION_BOUND = 15.0

Family = Literal["linear", "logistic"]


@dataclass(frozen=True)
class DesignMatrix:
    """Named regressor matrix; the intercept, when present, is column 0."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DomainError("design values must be two-dimensional")
        names = tuple(self.names)
        if values.shape[1] != len(names):
            raise DomainError(f"{values.shape[1]} columns but {len(names)} names")
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate column names in {names}")
        if INTERCEPT in names and names[0] != INTERCEPT:
            raise DomainError("intercept must be the first column")
        if not np.all(np.isfinite(values)):
            bad = int(np.argwhere(~np.isfinite(values))[0][1])
            raise DomainError(f"non-finite entries in column {names[bad]!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @classmethod
    def build(cls, columns: Mapping[str, Sequence[float]], intercept: bool = True) -> "DesignMatrix":
        names = list(columns)
        arrays = [np.asarray(columns[k], dtype=float).ravel() for k in names]
        lengths = {len(a) for a in arrays}
        if len(lengths) > 1:
            raise DomainError(f"columns have unequal lengths {sorted(lengths)}")
        n = lengths.pop() if lengths else 0
        if intercept:
            names.insert(0, INTERCEPT)
            arrays.insert(0, np.ones(n))
        values = np.column_stack(arrays) if arrays else np.empty((n, 0))
        return cls(values, tuple(names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def subset(self, names: Iterable[str]) -> "DesignMatrix":
        keep = set(names)
        idx = [i for i, k in enumerate(self.names) if k in keep]
        missing = keep - set(self.names)
        if missing:
            raise DomainError(f"unknown columns {sorted(missing)}")
        return DesignMatrix(self.values[:, idx], tuple(self.names[i] for i in idx))


@dataclass(frozen=True)
class FitResult:
    family: Family
    names: tuple[str, ...]
    coef: np.ndarray
    covariance: np.ndarray
    n: int
    converged: bool
    loglik_or_sse: float
    iterations: int = 0

    def __post_init__(self):
        self.coef.setflags(write=False)
        self.covariance.setflags(write=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def index(self, name: str) -> int:
        return self.names.index(name)

    def coef_of(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def var_of(self, name: str) -> float:
        i = self.names.index(name)
        return float(self.covariance[i, i])

    def se_of(self, name: str) -> float:
        return math.sqrt(self.var_of(name))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.coef)))


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[str, ...]
    forced: tuple[str, ...]
    lambda_chosen: float
    lambdas: np.ndarray = field(repr=False)
    criterion_path: np.ndarray = field(repr=False)


def _check_rank(values: np.ndarray, names: Sequence[str]) -> None:
    """Raise SingularDesignError naming the first column that breaks full rank."""
    n, p = values.shape
    if n < p:
        raise SingularDesignError(names[-1], f"singular design: {n} rows for {p} columns")
    norms = np.linalg.norm(values, axis=0)
    for j in np.flatnonzero(norms == 0):
        raise SingularDesignError(names[j], f"singular design: column {names[j]!r} is identically zero")
    scaled = values / norms
    sv = np.linalg.svd(scaled, compute_uv=False)
    if sv[-1] > 0 and sv[0] / sv[-1] < COND_LIMIT:
        return
    for k in range(2, p + 1):
        sv = np.linalg.svd(scaled[:, :k], compute_uv=False)
        if sv[-1] == 0 or sv[0] / sv[-1] >= COND_LIMIT:
            raise SingularDesignError(names[k - 1])
    raise SingularDesignError(names[-1])  # pragma: no cover


def _as_response(design: DesignMatrix, response) -> np.ndarray:
    y = np.asarray(response, dtype=float).ravel()
    if y.shape[0] != design.n:
        raise DomainError(f"response has {y.shape[0]} rows, design has {design.n}")
    if not np.all(np.isfinite(y)):
        raise DomainError("response contains non-finite values")
    return y


def fit_ols(design: DesignMatrix, response) -> FitResult:
    """Ordinary least squares with covariance ``s^2 (X'X)^-1``."""
    y = _as_response(design, response)
    X = design.values
    n, p = X.shape
    _check_rank(X, design.names)
    if n <= p:
        raise DomainError(f"OLS needs more rows than columns to estimate the residual variance (n={n}, p={p})")
    q, r = linalg.qr(X, mode="economic")
    coef = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ coef
    sse = float(resid @ resid)
    r_inv = linalg.solve_triangular(r, np.eye(p))
    cov = (sse / (n - p)) * (r_inv @ r_inv.T)
    cov = 0.5 * (cov + cov.T)
    return FitResult("linear", design.names, coef, cov, n, True, sse, 1)


def _loglik(y: np.ndarray, eta: np.ndarray) -> float:
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _binary_response(design: DesignMatrix, response) -> np.ndarray:
    y = _as_response(design, response)
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("logistic response must contain only 0 and 1")
    if y.min() == y.max():
        raise DomainError("logistic response has a single class")
    return y


def fit_logistic(design: DesignMatrix, response, max_iter: int = 100, tol: float = 1e-10) -> FitResult:
    """Bernoulli maximum likelihood by Newton-Raphson with step halving.

    Convergence is declared when successive log-likelihoods differ by less
    than ``tol``.  A coefficient escaping ``|b| > 15`` while the likelihood is
    still increasing is treated as (quasi-)complete separation.
    """
    y = _binary_response(design, response)
    X = design.values
    _check_rank(X, design.names)
    n, p = X.shape
    beta = np.zeros(p)
    ll = _loglik(y, X @ beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(X @ beta)
        w = mu * (1.0 - mu)
        grad = X.T @ (y - mu)
        hess = (X * w[:, None]).T @ X
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except linalg.LinAlgError as exc:
            raise SeparationError("information matrix became singular") from exc
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _loglik(y, X @ cand)
            if ll_new >= ll or t < 1e-10:
                break
            t *= 0.5
        if np.max(np.abs(cand)) > SEPARATION_BOUND and ll_new > ll + tol:
            raise SeparationError(
                f"coefficient magnitude {np.max(np.abs(cand)):.1f} with increasing likelihood; "
                "data appear separated"
            )
        delta_ll = ll_new - ll
        beta, ll = cand, max(ll, ll_new)
        if abs(delta_ll) < tol:
            converged = True
            break
    mu = expit(X @ beta)
    info = (X * (mu * (1.0 - mu))[:, None]).T @ X
    try:
        cov = linalg.inv(info)
    except linalg.LinAlgError as exc:
        raise SeparationError("observed information is singular at the optimum") from exc
    cov = 0.5 * (cov + cov.T)
    return FitResult("logistic", design.names, beta, cov, n, converged, ll, it)


# --------------------------------------------------------------------------
# LASSO


def _soft(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


class _Reduced:
    """Quadratic lasso problem with its unpenalized block profiled out.

    For ``0.5 b'Gb - c'b + lam * sum_{pen} |b_j|`` the free coordinates have a
    closed-form optimum given the penalized ones, leaving the Schur
    complement problem ``0.5 u'Su - s'u + lam |u|_1``.
    """

    def __init__(self, G: np.ndarray, c: np.ndarray, pen: np.ndarray, free: np.ndarray):
        self.pen, self.free = pen, free
        if free.size:
            g_fp = G[free][:, pen]
            self.proj = linalg.solve(G[free][:, free], np.column_stack([c[free], g_fp]), assume_a="pos")
            S = G[pen][:, pen] - g_fp.T @ self.proj[:, 1:]
            s = c[pen] - g_fp.T @ self.proj[:, 0]
        else:
            S, s = G[pen][:, pen], c[pen]
        self.S = S.tolist()
        self.s = s.tolist()

    def solve(self, b: np.ndarray, lam: float, tol: float = 1e-10, max_sweeps: int = 10_000) -> np.ndarray:
        S, s = self.S, self.s
        u = b[self.pen].tolist()
        k = len(u)
        diag = [S[j][j] for j in range(k)]
        grad = [s[j] - sum(S[j][i] * u[i] for i in range(k)) for j in range(k)]
        for _ in range(max_sweeps):
            biggest = 0.0
            for j in range(k):
                old = u[j]
                new = _soft(grad[j] + diag[j] * old, lam) / diag[j]
                d = new - old
                if d != 0.0:
                    u[j] = new
                    row = S[j]
                    for i in range(k):
                        grad[i] -= row[i] * d
                    biggest = max(biggest, abs(d) * math.sqrt(diag[j]))
            if biggest < tol:
                break
        out = np.zeros_like(b)
        up = np.array(u)
        out[self.pen] = up
        if self.free.size:
            out[self.free] = self.proj[:, 0] - self.proj[:, 1:] @ up
        return out


def _refit_criterion(design: DesignMatrix, y: np.ndarray, family: Family) -> float:
    n = design.n
    k = design.p
    if family == "linear":
        fit = fit_ols(design, y)
        sse = max(fit.loglik_or_sse, np.finfo(float).tiny)
        return n * math.log(sse / n) + k * math.log(n)
    fit = fit_logistic(design, y)
    if not fit.converged:
        raise FitError("logistic refit did not converge")
    return -2.0 * fit.loglik_or_sse + k * math.log(n)


def lasso_select(
    design: DesignMatrix,
    response,
    family: Family = "linear",
    forced: Iterable[str] = (INTERCEPT,),
    seed: int | None = None,
    n_lambda: int = 100,
    lambda_ratio: float = 1e-3,
) -> SelectionResult:
    """Choose covariates by a LASSO path and minimum BIC.

    Candidates (columns not in ``forced``) are standardized internally and
    penalized; forced columns are never penalized.  Along a geometric grid
    of ``n_lambda`` penalties from ``lambda_max`` down to
    ``lambda_max * lambda_ratio``, each distinct active set is refit without
    penalty and scored by BIC; the sparsest minimizer wins.  ``seed`` is
    accepted for interface symmetry and has no effect.
    """
    del seed
    if family not in ("linear", "logistic"):
        raise DomainError(f"unknown family {family!r}")
    y = _binary_response(design, response) if family == "logistic" else _as_response(design, response)
    forced = set(forced) | ({INTERCEPT} if INTERCEPT in design.names else set())
    unknown = forced - set(design.names)
    if unknown:
        raise DomainError(f"forced columns not in design: {sorted(unknown)}")
    forced_names = tuple(k for k in design.names if k in forced)
    candidates = [k for k in design.names if k not in forced]

    # Forced-only model must be fittable; errors propagate from here.
    base_design = design.subset(forced_names)
    cache: dict[tuple[str, ...], float] = {forced_names: _refit_criterion(base_design, y, family)}
    if not candidates:
        return SelectionResult(forced_names, forced_names, math.nan, np.empty(0), np.empty(0))

    X = design.values
    n = design.n
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    has_icpt = INTERCEPT in design.names
    cols = []
    penalized = []
    for j, name in enumerate(design.names):
        if name == INTERCEPT:
            cols.append(X[:, j])
            penalized.append(False)
        elif sd[j] > 0:
            cols.append((X[:, j] - mean[j]) / sd[j] if has_icpt else X[:, j] / sd[j])
            penalized.append(name not in forced)
        elif name in forced:
            cols.append(X[:, j])
            penalized.append(False)
        else:
            # constant candidate: can never enter the model
            cols.append(np.zeros(n))
            penalized.append(True)
    Xs = np.column_stack(cols)
    penalized = np.array(penalized)
    usable = np.array([not (pen and np.all(col == 0)) for pen, col in zip(penalized, Xs.T)])

    def active_names(beta: np.ndarray) -> tuple[str, ...]:
        return tuple(k for j, k in enumerate(design.names)
                     if k in forced or (usable[j] and beta[j] != 0.0))

    idx_forced = np.flatnonzero(~penalized)
    idx_pen = np.flatnonzero(penalized & usable)
    idx_free = np.flatnonzero(~(penalized & usable))
    if family == "linear":
        G = Xs.T @ Xs / n
        c = Xs.T @ y / n
        b = np.zeros(Xs.shape[1])
        b[idx_forced] = linalg.lstsq(G[np.ix_(idx_forced, idx_forced)], c[idx_forced])[0]
        grad = c - G @ b
    else:
        base_fit = fit_logistic(DesignMatrix(Xs[:, idx_forced], tuple(f"_{j}" for j in idx_forced)), y)
        b = np.zeros(Xs.shape[1])
        b[idx_forced] = base_fit.coef
        grad = Xs.T @ (y - expit(Xs @ b)) / n
    lam_max = float(np.max(np.abs(grad[penalized & usable]), initial=0.0))
    if lam_max <= 0:
        lam_max = 1e-12
    lambdas = lam_max * lambda_ratio ** (np.arange(n_lambda) / (n_lambda - 1))

    if family == "linear":
        reduced = _Reduced(G, c, idx_pen, idx_free)
    criteria = np.empty(n_lambda)
    last_error: FitError | None = None
    for k, lam in enumerate(lambdas):
        if family == "linear":
            b = reduced.solve(b, lam)
        else:
            b = _logistic_prox_newton(Xs, y, b, idx_pen, idx_free, lam)
        names = active_names(b)
        if names not in cache:
            try:
                cache[names] = _refit_criterion(design.subset(names), y, family)
            except FitError as exc:
                cache[names] = math.inf
                last_error = exc
        criteria[k] = cache[names]
        if k == 0 or criteria[k] < criteria[best]:
            best, best_names = k, names
    if not math.isfinite(criteria[best]):
        raise last_error or FitError("no fittable model on the LASSO path")
    return SelectionResult(best_names, forced_names, float(lambdas[best]), lambdas, criteria)


def _logistic_prox_newton(Xs: np.ndarray, y: np.ndarray, b: np.ndarray, pen: np.ndarray,
                          free: np.ndarray, lam: float, tol: float = 1e-7, max_outer: int = 50) -> np.ndarray:
    n = Xs.shape[0]
    for _ in range(max_outer):
        eta = Xs @ b
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), 1e-5)
        Xw = Xs.T * w
        G = Xw @ Xs / n
        c = (Xw @ eta + Xs.T @ (y - mu)) / n
        new = _Reduced(G, c, pen, free).solve(b, lam)
        shift = np.max(np.abs(new - b) * np.sqrt(np.diag(G)))
        b = new
        if shift < tol:
            break
    return b
