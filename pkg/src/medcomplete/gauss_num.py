"""Normal and bivariate-normal numerics for the complete-mediation tests.

The standardized direct and indirect effects are modelled as
``(Z_DE, Z_IE) ~ BVN(mu1, mu2, 1, 1, rho)``.  CMT1 rejects non-CM on the
event ``|Z_DE| < c, |Z_IE| > c``; CMT3(delta) additionally requires
``|Z_DE| / |Z_IE| < (1 - delta) / delta``.  Every probability here is a
one-dimensional adaptive Gauss-Kronrod integral of a closed-form
conditional-normal probability.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateCorrelationError, DomainError

__all__ = [
    "BvnParams",
    "QuadratureSpec",
    "norm_cdf",
    "inside_prob",
    "adaptive_quad",
    "cm_power",
    "reject_prob_cmt1",
    "reject_prob_cmt3",
    "theorem_scan",
]

RHO_LIMIT = 1.0 - 1e-12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Gauss-Kronrod 7/15 abscissae on [-1, 1] (non-negative half) and weights.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes.
_GAUSS_W = np.zeros(15)
_GAUSS_W[[1, 3, 5]] = _WG[:3]
_GAUSS_W[7] = _WG[3]
_GAUSS_W[[9, 11, 13]] = _WG[2::-1]


@dataclass(frozen=True)
class BvnParams:
    """Means, correlation and critical value of the (Z_DE, Z_IE) model."""

    mu1: float = 0.0
    mu2: float = 0.0
    rho: float = 0.0
    cutoff: float = 2.0

    def __post_init__(self):
        for name in ("mu1", "mu2", "rho", "cutoff"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if abs(self.rho) > 1.0:
            raise DomainError(f"rho={self.rho} outside [-1, 1]")
        if self.cutoff <= 0:
            raise DomainError(f"cutoff must be positive, got {self.cutoff}")


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-8
    max_subdivisions: int = 200
    outer_range: float = 8.0

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")
        if self.outer_range < 6:
            raise DomainError("outer_range must be at least 6")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")


DEFAULT_QUAD = QuadratureSpec()


def norm_cdf(x: float) -> float:
    """Standard normal CDF, accurate to ~1e-16 absolute."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"norm_cdf requires a finite argument, got {x}")
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def inside_prob(u: float, cutoff: float = 2.0) -> float:
    """P(|Z| < cutoff) for Z ~ N(u, 1)."""
    return _interval_prob(np.float64(-cutoff - u), np.float64(cutoff - u)).item()


def _interval_prob(lo, hi):
    # P(lo < Z < hi), evaluated in whichever tail avoids cancellation.
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper = ndtr(-lo) - ndtr(-hi)
    lower = ndtr(hi) - ndtr(lo)
    return np.clip(np.where(lo > 0, upper, lower), 0.0, 1.0)


def _gk15(f: Callable[[np.ndarray], np.ndarray], a: float, b: float) -> tuple[float, float]:
    half = 0.5 * (b - a)
    vals = f(0.5 * (a + b) + half * _NODES)
    kronrod = half * float(_KRONROD_W @ vals)
    gauss = half * float(_GAUSS_W @ vals)
    return kronrod, abs(kronrod - gauss)


def adaptive_quad(
    f: Callable[[np.ndarray], np.ndarray],
    breakpoints: Sequence[float],
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> tuple[float, float]:
    """Globally adaptive G7/K15 quadrature of a vectorized integrand.

    ``breakpoints`` is a sorted sequence whose consecutive pairs define the
    initial panels; kinks of the integrand belong there.  The panel with the
    largest error estimate is bisected until the summed estimate drops below
    ``quad.abs_tol`` or the panel count reaches ``quad.max_subdivisions``.
    Returns ``(value, error_estimate)``.
    """
    pts = [float(p) for p in breakpoints]
    heap = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            val, err = _gk15(f, a, b)
            heapq.heappush(heap, (-err, a, b, val))
    if not heap:
        return 0.0, 0.0
    total_err = sum(-h[0] for h in heap)
    while total_err > quad.abs_tol and len(heap) < quad.max_subdivisions:
        neg_err, a, b, _ = heapq.heappop(heap)
        mid = 0.5 * (a + b)
        v1, e1 = _gk15(f, a, mid)
        v2, e2 = _gk15(f, mid, b)
        heapq.heappush(heap, (-e1, a, mid, v1))
        heapq.heappush(heap, (-e2, mid, b, v2))
        total_err += e1 + e2 + neg_err
    value = math.fsum(h[3] for h in heap)
    return value, sum(-h[0] for h in heap)


def _cond_sd(rho: float) -> float:
    if abs(rho) > RHO_LIMIT:
        raise DegenerateCorrelationError(f"|rho|={abs(rho)} too close to 1 for integration")
    return math.sqrt((1.0 - rho) * (1.0 + rho))


def reject_prob_cmt1(params: BvnParams, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """P(|Z1| < c, |Z2| > c) under BVN(mu1, mu2, 1, 1, rho).

    Integrates over z1 in (-c, c) the conditional probability
    ``P(|Z2| > c | Z1 = z1)`` with ``Z2 | z1 ~ N(mu2 + rho (z1 - mu1), 1 - rho^2)``.
    """
    mu1, mu2, rho, c = params.mu1, params.mu2, params.rho, params.cutoff
    s = _cond_sd(rho)

    def integrand(z1):
        m = mu2 + rho * (z1 - mu1)
        outside = 1.0 - _interval_prob((-c - m) / s, (c - m) / s)
        return np.exp(-0.5 * (z1 - mu1) ** 2) * _INV_SQRT_2PI * outside

    value, _ = adaptive_quad(integrand, [-c, c], quad)
    return min(max(value, 0.0), 1.0)


def cm_power(params: BvnParams, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Power of CMT1 when complete mediation holds (``mu1 == 0``)."""
    if params.mu1 != 0:
        raise DomainError(f"cm_power is defined for mu1 = 0, got mu1={params.mu1}")
    return reject_prob_cmt1(params, quad)


def reject_prob_cmt3(params: BvnParams, delta: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """P(|Z1| < c, |Z2| > c, |Z1|/|Z2| < (1-delta)/delta).

    The outer integral runs over z2 with ``|z2| > c`` (truncated at
    ``mu2 +- outer_range``); the inner probability over z1 is the
    conditional-normal mass of ``|z1| < min(c, r |z2|)``.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    mu1, mu2, rho, c = params.mu1, params.mu2, params.rho, params.cutoff
    s = _cond_sd(rho)
    r = (1.0 - delta) / delta
    kink = c / r

    def integrand(z2):
        m = mu1 + rho * (z2 - mu2)
        half_width = np.minimum(c, r * np.abs(z2))
        inner = _interval_prob((-half_width - m) / s, (half_width - m) / s)
        return np.exp(-0.5 * (z2 - mu2) ** 2) * _INV_SQRT_2PI * inner

    lo, hi = mu2 - quad.outer_range, mu2 + quad.outer_range
    total = 0.0
    for a, b in ((lo, -c), (c, hi)):
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            continue
        pts = [a] + [k for k in (-kink, kink) if a < k < b] + [b]
        value, _ = adaptive_quad(integrand, pts, quad)
        total += value
    return min(max(total, 0.0), 1.0)


def theorem_scan(
    rho_grid: Sequence[float],
    u_grid: Sequence[float],
    cutoff: float = 2.0,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> tuple[tuple[float, float], float]:
    """Grid maximizer of the CMT1 rejection probability with ``mu1 = mu2 = u``.

    Returns ``((rho, u), value)``; ties keep the first grid point visited
    (``rho`` outer loop, ``u`` inner loop).
    """
    rho_grid = [float(r) for r in rho_grid]
    u_grid = [float(u) for u in u_grid]
    if not rho_grid or not u_grid:
        raise DomainError("theorem_scan needs non-empty grids")
    if any(not -1.0 < r < 1.0 for r in rho_grid):
        raise DomainError("rho grid must lie in (-1, 1)")
    if any(not 0.0 <= u <= 6.0 for u in u_grid):
        raise DomainError("u grid must lie in [0, 6]")
    best, best_at = -1.0, (math.nan, math.nan)
    for rho in rho_grid:
        for u in u_grid:
            p = reject_prob_cmt1(BvnParams(u, u, rho, cutoff), quad)
            if p > best:
                best, best_at = p, (rho, u)
    return best_at, best
