"""Proportion-mediated statistics and the CMT1 / CMT2(delta) / CMT3(delta) verdicts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Literal, Sequence

from .errors import DomainError
from .mediation import MediationEstimate

__all__ = [
    "METHODS",
    "ProportionStats",
    "CmtDecision",
    "critical_value",
    "proportions",
    "decide",
    "decision_curve",
]

Method = Literal["CMT1", "CMT2", "CMT3"]
METHODS: tuple[Method, ...] = ("CMT1", "CMT2", "CMT3")


@dataclass(frozen=True)
class ProportionStats:
    pm: float
    apm: float
    sapm: float
    psse: float
    defined: bool


@dataclass(frozen=True)
class CmtDecision:
    method: Method
    delta: float | None
    alpha: float
    crit_i: bool
    crit_ii: bool
    crit_iii: bool
    verdict: bool

    @property
    def label(self) -> str:
        return self.method if self.delta is None else f"{self.method}({self.delta:g})"


def critical_value(alpha: float) -> float:
    """Two-sided standard normal critical value ``z_{alpha/2}``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def proportions(est: MediationEstimate) -> ProportionStats:
    """PM, APM, SAPM and PSSE of one estimate.

    ``defined`` is False when ``|ie| + |de|`` or ``|z_ie| + |z_de|`` is zero;
    the affected statistics are NaN.
    """
    nan = math.nan
    ie, de, zi, zd = est.ie, est.de, est.z_ie, est.z_de
    abs_sum = abs(ie) + abs(de)
    z_sum = abs(zi) + abs(zd)
    defined = abs_sum > 0 and z_sum > 0 and math.isfinite(z_sum)
    total = ie + de
    pm = ie / total if total != 0 else nan
    apm = abs(ie) / abs_sum if abs_sum > 0 else nan
    if z_sum > 0 and math.isfinite(z_sum):
        sapm = abs(zi) / z_sum
        # z^2 / (z^2 + w^2) from the ratio keeps PSSE exactly consistent with SAPM
        psse = sapm**2 / (sapm**2 + (1.0 - sapm) ** 2)
    else:
        sapm = psse = nan
    return ProportionStats(pm=pm, apm=apm, sapm=sapm, psse=psse, defined=defined)


def _check_method(method: str, delta: float | None) -> None:
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}")
    if method == "CMT1":
        if delta is not None:
            raise DomainError("CMT1 takes no delta")
    elif delta is None or not 0.0 < delta < 1.0:
        raise DomainError(f"{method} needs delta in (0, 1), got {delta}")


def decide(est: MediationEstimate, method: Method, delta: float | None = None, alpha: float = 0.05,
           cutoff: float | None = None, props: ProportionStats | None = None) -> CmtDecision:
    """Apply the complete-mediation criteria to one estimate.

    (i) ``|z_ie| > z_{alpha/2}``; (ii) ``|z_de| < z_{alpha/2}``; (iii)
    ``apm > delta`` for CMT2 or ``sapm > delta`` for CMT3.  All comparisons
    are strict.  ``cutoff`` replaces the normal quantile when given.
    """
    _check_method(method, delta)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    c = critical_value(alpha) if cutoff is None else float(cutoff)
    crit_i = abs(est.z_ie) > c
    crit_ii = abs(est.z_de) < c
    if method == "CMT1":
        crit_iii = True
    else:
        props = props or proportions(est)
        stat = props.apm if method == "CMT2" else props.sapm
        crit_iii = props.defined and stat > delta
    return CmtDecision(method, delta, alpha, crit_i, crit_ii, crit_iii, crit_i and crit_ii and crit_iii)


def decision_curve(est: MediationEstimate, method: Method, delta_grid: Sequence[float],
                   alpha: float = 0.05, cutoff: float | None = None) -> list[CmtDecision]:
    """Decisions along a strictly increasing grid of thresholds."""
    grid = [float(d) for d in delta_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("delta grid must be strictly increasing")
    props = proportions(est)
    return [decide(est, method, d, alpha, cutoff, props) for d in grid]
