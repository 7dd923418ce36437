"""Simulation study: data generation, per-replicate pipeline, and ROC metrics.

Each study pairs one complete-mediation arm (``tau' = 0``) with one or more
non-CM arms (``tau' != 0``).  Every dataset draws from its own counter-based
Philox stream keyed by ``(master seed, arm, replicate id)``, so results do
not depend on execution order or on the number of worker processes.
"""
from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.special import expit

from .cmt_criteria import METHODS, ProportionStats, critical_value, decide, proportions
from .errors import DomainError, FitError, StudyAbort
from .mediation import SELECTION_SCOPES, MediationEstimate, estimate_binary, estimate_continuous

__all__ = [
    "CONTINUOUS_DELTAS",
    "BINARY_DELTAS",
    "SimConfig",
    "Dataset",
    "ReplicateResult",
    "MetricsRow",
    "RocCurve",
    "StudyResult",
    "replicate_rng",
    "gen_continuous",
    "gen_binary",
    "generate",
    "run_replicate",
    "run_study",
    "evaluate",
    "roc",
    "ScreeningCohort",
    "gen_screening_cohort",
]

log = logging.getLogger(__name__)

CONTINUOUS_DELTAS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85)
BINARY_DELTAS = (0.6, 0.65, 0.7, 0.75, 0.8)
COVARIATES = ("C1", "C2", "C3", "C4")

OutcomeKind = Literal["continuous", "binary"]


@dataclass(frozen=True)
class SimConfig:
    """One simulation scenario.

    ``tau_primes`` lists the direct effects of the non-CM arms; the CM arm
    (``tau' = 0``) is shared by all of them.  ``replicates`` is the number of
    datasets per arm.  ``coef_sd`` and ``outcome_noise_sd`` are the standard
    deviations of the random confounder coefficients and of ``e3``; ``coef_sd``
    defaults to 4 for continuous and 1 for binary scenarios, since larger
    logit-scale coefficients separate most binary datasets.
    """

    outcome_kind: OutcomeKind = "continuous"
    alpha_path: float = 0.5
    beta_path: float = 0.5
    tau_primes: tuple[float, ...] = (0.2, 0.3)
    n: int = 1000
    replicates: int = 1000
    seed: int = 0
    selection: bool = True
    test_alpha: float = 0.05
    cutoff: float | None = None
    delta_grid: tuple[float, ...] | None = None
    methods: tuple[str, ...] = METHODS
    coef_sd: float | None = None
    outcome_noise_sd: float = 4.0
    pinned_coefficients: float | None = None
    effect_scale: Literal["conditional", "marginal"] = "conditional"
    selection_scope: str = "union"
    max_fail_rate: float = 0.05

    def __post_init__(self):
        if self.outcome_kind not in ("continuous", "binary"):
            raise DomainError(f"unknown outcome_kind {self.outcome_kind!r}")
        if self.coef_sd is None:
            object.__setattr__(self, "coef_sd", 4.0 if self.outcome_kind == "continuous" else 1.0)
        if not self.coef_sd >= 0 or not self.outcome_noise_sd > 0:
            raise DomainError("coef_sd must be >= 0 and outcome_noise_sd > 0")
        if self.n < 50:
            raise DomainError("n must be at least 50")
        if self.replicates < 1:
            raise DomainError("replicates must be at least 1")
        if not (math.isfinite(self.alpha_path) and math.isfinite(self.beta_path)):
            raise DomainError("alpha_path and beta_path must be finite")
        taus = tuple(float(t) for t in self.tau_primes)
        if not taus or any(t == 0 for t in taus) or len(set(taus)) != len(taus):
            raise DomainError("tau_primes must be distinct and non-zero")
        object.__setattr__(self, "tau_primes", taus)
        grid = self.delta_grid
        if grid is None:
            grid = CONTINUOUS_DELTAS if self.outcome_kind == "continuous" else BINARY_DELTAS
        grid = tuple(sorted(float(d) for d in grid))
        if not grid or any(not 0.0 < d < 1.0 for d in grid) or len(set(grid)) != len(grid):
            raise DomainError("delta_grid must hold distinct values in (0, 1)")
        object.__setattr__(self, "delta_grid", grid)
        methods = tuple(self.methods)
        if not methods or any(m not in METHODS for m in methods):
            raise DomainError(f"methods must be a subset of {METHODS}")
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in methods))
        critical_value(self.test_alpha)
        if self.selection_scope not in SELECTION_SCOPES:
            raise DomainError(f"selection_scope must be one of {SELECTION_SCOPES}")
        if self.effect_scale not in ("conditional", "marginal"):
            raise DomainError("effect_scale must be 'conditional' or 'marginal'")
        if self.cutoff is not None and not self.cutoff > 0:
            raise DomainError("cutoff must be positive")

    @property
    def decision_keys(self) -> list[tuple[str, float | None]]:
        """(method, delta) pairs in report order: CMT1 then descending delta."""
        keys: list[tuple[str, float | None]] = []
        for method in self.methods:
            if method == "CMT1":
                keys.append((method, None))
            else:
                keys.extend((method, d) for d in sorted(self.delta_grid, reverse=True))
        return keys


@dataclass(frozen=True)
class Dataset:
    a: np.ndarray
    m: np.ndarray
    y: np.ndarray
    covariates: dict[str, np.ndarray]
    tau_prime: float
    replicate_id: int

    @property
    def arm(self) -> str:
        return "CM" if self.tau_prime == 0 else "nonCM"


@dataclass(frozen=True)
class ReplicateResult:
    replicate_id: int
    tau_prime: float
    estimate: MediationEstimate | None
    proportions: ProportionStats | None
    decisions: dict[tuple[str, float | None], bool] | None
    fit_failed: bool
    error: str = ""

    @property
    def arm(self) -> str:
        return "CM" if self.tau_prime == 0 else "nonCM"


@dataclass(frozen=True)
class MetricsRow:
    tau_prime: float
    method: str
    delta: float | None
    sensitivity: float
    specificity: float
    youden: float
    n_cm: int
    n_noncm: int
    failed_cm: int
    failed_noncm: int

    @property
    def label(self) -> str:
        return self.method if self.delta is None else f"{self.method}({self.delta:g})"


@dataclass(frozen=True)
class RocCurve:
    method: str
    tau_prime: float
    deltas: tuple[float, ...]
    points: tuple[tuple[float, float], ...]
    youden: tuple[float, ...]
    optimal_delta: float
    best_youden: float
    cmt1_point: tuple[float, float] | None = None


@dataclass
class StudyResult:
    config: SimConfig
    results: list[ReplicateResult]
    metrics: list[MetricsRow]
    rocs: list[RocCurve] = field(default_factory=list)


def _arm_label(tau_prime: float) -> str:
    return "CM" if tau_prime == 0 else f"nonCM:{tau_prime:.10g}"


def replicate_rng(seed: int, tau_prime: float, replicate_id: int) -> np.random.Generator:
    """Independent counter-based stream for one (arm, replicate)."""
    key = zlib.crc32(_arm_label(tau_prime).encode())
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(replicate_id)))
    return np.random.Generator(np.random.Philox(ss))


def _covariates(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    c1 = rng.binomial(1, 0.6, n).astype(float)
    c2 = rng.binomial(1, expit(1.0 + 0.5 * c1)).astype(float)
    c3 = rng.binomial(1, 0.3, n).astype(float)
    c4 = rng.standard_normal(n)
    return {"C1": c1, "C2": c2, "C3": c3, "C4": c4}


def _coefficients(rng: np.random.Generator, config: SimConfig) -> np.ndarray:
    """Rows: gamma (exposure), theta (mediator), phi (outcome); columns C1..C3."""
    if config.pinned_coefficients is not None:
        return np.full((3, 3), float(config.pinned_coefficients))
    return rng.normal(0.0, config.coef_sd, size=(3, 3))


def gen_continuous(config: SimConfig, replicate_id: int, tau_prime: float = 0.0) -> Dataset:
    """Linear structural model with confounders C1..C3 and noise covariate C4."""
    if config.outcome_kind != "continuous":
        raise DomainError("gen_continuous needs outcome_kind='continuous'")
    rng = replicate_rng(config.seed, tau_prime, replicate_id)
    n = config.n
    cov = _covariates(rng, n)
    C = np.column_stack([cov["C1"], cov["C2"], cov["C3"]])
    gamma, theta, phi = _coefficients(rng, config)
    a = C @ gamma + rng.standard_normal(n)
    m = config.alpha_path * a + C @ theta + rng.standard_normal(n)
    y = tau_prime * a + config.beta_path * m + C @ phi + rng.normal(0.0, config.outcome_noise_sd, n)
    return Dataset(a, m, y, cov, float(tau_prime), int(replicate_id))


def gen_binary(config: SimConfig, replicate_id: int, tau_prime: float = 0.0) -> Dataset:
    """Three nested Bernoulli-expit layers for exposure, mediator and outcome."""
    if config.outcome_kind != "binary":
        raise DomainError("gen_binary needs outcome_kind='binary'")
    rng = replicate_rng(config.seed, tau_prime, replicate_id)
    n = config.n
    cov = _covariates(rng, n)
    C = np.column_stack([cov["C1"], cov["C2"], cov["C3"]])
    gamma, theta, phi = _coefficients(rng, config)
    a = rng.binomial(1, expit(C @ gamma)).astype(float)
    m = rng.binomial(1, expit(config.alpha_path * a + C @ theta)).astype(float)
    y = rng.binomial(1, expit(tau_prime * a + config.beta_path * m + C @ phi)).astype(float)
    return Dataset(a, m, y, cov, float(tau_prime), int(replicate_id))


def generate(config: SimConfig, replicate_id: int, tau_prime: float = 0.0) -> Dataset:
    gen = gen_continuous if config.outcome_kind == "continuous" else gen_binary
    return gen(config, replicate_id, tau_prime)


def run_replicate(dataset: Dataset, config: SimConfig) -> ReplicateResult:
    """Selection, mediation estimate, proportions and every configured decision.

    Fit failures (singular designs, separation, single-class responses) are
    recorded rather than raised.
    """
    try:
        if config.outcome_kind == "continuous":
            est = estimate_continuous(dataset.a, dataset.m, dataset.y, dataset.covariates,
                                      selection=config.selection, seed=config.seed,
                                      selection_scope=config.selection_scope)
        else:
            est = estimate_binary(dataset.a, dataset.m, dataset.y, dataset.covariates,
                                  selection=config.selection, seed=config.seed,
                                  effect_scale=config.effect_scale,
                                  selection_scope=config.selection_scope)
    except (FitError, DomainError, np.linalg.LinAlgError) as exc:
        return ReplicateResult(dataset.replicate_id, dataset.tau_prime, None, None, None, True,
                               f"{type(exc).__name__}: {exc}")
    props = proportions(est)
    decisions = {
        (method, delta): decide(est, method, delta, config.test_alpha, config.cutoff, props).verdict
        for method, delta in config.decision_keys
    }
    return ReplicateResult(dataset.replicate_id, dataset.tau_prime, est, props, decisions, False)


def _run_task(task: tuple[SimConfig, float, int]) -> ReplicateResult:
    config, tau_prime, rid = task
    return run_replicate(generate(config, rid, tau_prime), config)


def _tasks(config: SimConfig) -> list[tuple[SimConfig, float, int]]:
    arms = (0.0,) + config.tau_primes
    return [(config, tau, rid) for tau in arms for rid in range(config.replicates)]


def run_study(config: SimConfig, workers: int = 1) -> StudyResult:
    """Generate, analyse and evaluate every replicate of every arm.

    Raises StudyAbort when any arm's fit-failure rate exceeds
    ``config.max_fail_rate``.
    """
    if config.alpha_path == 0 or config.beta_path == 0:
        raise DomainError("a study needs a non-zero indirect effect (alpha_path and beta_path)")
    tasks = _tasks(config)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [_run_task(t) for t in tasks]
    for tau in (0.0,) + config.tau_primes:
        arm = [r for r in results if r.tau_prime == tau]
        failed = sum(r.fit_failed for r in arm)
        if failed > config.max_fail_rate * len(arm):
            examples = "; ".join(r.error for r in arm if r.fit_failed)[:500]
            raise StudyAbort(
                f"arm {_arm_label(tau)}: {failed}/{len(arm)} fits failed "
                f"(limit {config.max_fail_rate:.0%}); e.g. {examples}"
            )
        if failed:
            log.info("arm %s: %d/%d replicates fit-failed", _arm_label(tau), failed, len(arm))
    metrics = evaluate(results, config)
    rocs = [roc(metrics, method, tau) for tau in config.tau_primes
            for method in config.methods if method != "CMT1"
            if sum(1 for r in metrics if r.method == method and r.tau_prime == tau) >= 2]
    return StudyResult(config, results, metrics, rocs)


def evaluate(results: Sequence[ReplicateResult], config: SimConfig) -> list[MetricsRow]:
    """Sensitivity, specificity and Youden index per (tau', method, delta)."""
    cm = [r for r in results if r.tau_prime == 0]
    cm_ok = [r for r in cm if not r.fit_failed]
    if not cm_ok:
        raise DomainError("no usable complete-mediation replicates")
    rows = []
    for tau in config.tau_primes:
        non = [r for r in results if r.tau_prime == tau]
        non_ok = [r for r in non if not r.fit_failed]
        if not non_ok:
            raise DomainError(f"no usable non-CM replicates for tau'={tau}")
        for key in config.decision_keys:
            sens = sum(r.decisions[key] for r in cm_ok) / len(cm_ok)
            spec = 1.0 - sum(r.decisions[key] for r in non_ok) / len(non_ok)
            rows.append(MetricsRow(tau, key[0], key[1], sens, spec, sens + spec - 1.0,
                                   len(cm_ok), len(non_ok), len(cm) - len(cm_ok), len(non) - len(non_ok)))
    return rows


def roc(metrics: Iterable[MetricsRow], method: str = "CMT3", tau_prime: float | None = None) -> RocCurve:
    """ROC points over delta for one method; Youden ties go to the smaller delta."""
    metrics = list(metrics)
    if tau_prime is None:
        taus = {r.tau_prime for r in metrics}
        if len(taus) != 1:
            raise DomainError("metrics span several tau' values; pass tau_prime")
        tau_prime = taus.pop()
    rows = sorted((r for r in metrics if r.method == method and r.tau_prime == tau_prime and r.delta is not None),
                  key=lambda r: r.delta)
    if len(rows) < 2:
        raise DomainError(f"ROC for {method} needs at least 2 delta rows, got {len(rows)}")
    best = rows[0]
    for r in rows[1:]:
        if r.youden > best.youden:
            best = r
    ref = next((r for r in metrics if r.method == "CMT1" and r.tau_prime == tau_prime), None)
    return RocCurve(
        method=method,
        tau_prime=tau_prime,
        deltas=tuple(r.delta for r in rows),
        points=tuple((1.0 - r.specificity, r.sensitivity) for r in rows),
        youden=tuple(r.youden for r in rows),
        optimal_delta=best.delta,
        best_youden=best.youden,
        cmt1_point=None if ref is None else (1.0 - ref.specificity, ref.sensitivity),
    )


@dataclass(frozen=True)
class ScreeningCohort:
    """Genotypes, a binary exposure and a binary outcome with known pleiotropy labels."""

    columns: dict[str, np.ndarray]
    variants: tuple[str, ...]
    pleiotropic: frozenset[str]
    exposure: str = "X"
    outcome: str = "Y"
    covariates: tuple[str, ...] = COVARIATES


def gen_screening_cohort(seed: int, n: int = 5000, n_valid: int = 5, n_pleiotropic: int = 1,
                         tau_prime: float = 0.3, alpha_path: float = 0.8, beta_path: float = 0.8,
                         maf: float = 0.3, coef_sd: float = 1.0) -> ScreeningCohort:
    """Mendelian-randomization cohort built from the binary structural model.

    Each variant ``G1..Gk`` is an additive 0/1/2 genotype with allele frequency
    ``maf`` that raises the log-odds of the exposure by ``alpha_path`` per
    allele.  The outcome depends on the exposure through ``beta_path`` and, for
    the last ``n_pleiotropic`` variants only, directly through ``tau_prime``.
    C1..C3 confound exposure and outcome exactly as in ``gen_binary``.
    """
    if n_valid < 0 or n_pleiotropic < 0 or n_valid + n_pleiotropic == 0:
        raise DomainError("need at least one variant")
    if not 0.0 < maf < 1.0:
        raise DomainError("maf must lie in (0, 1)")
    if n < 50:
        raise DomainError("n must be at least 50")
    k = n_valid + n_pleiotropic
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(b"screen"), k))
    rng = np.random.Generator(np.random.Philox(ss))
    cov = _covariates(rng, n)
    C = np.column_stack([cov["C1"], cov["C2"], cov["C3"]])
    theta, phi = rng.normal(0.0, coef_sd, size=(2, 3))
    geno = rng.binomial(2, maf, size=(n, k)).astype(float)
    direct = np.r_[np.zeros(n_valid), np.full(n_pleiotropic, float(tau_prime))]
    x = rng.binomial(1, expit(alpha_path * geno.sum(axis=1) - 2 * alpha_path * maf * k + C @ theta)).astype(float)
    y = rng.binomial(1, expit(beta_path * x + geno @ direct + C @ phi)).astype(float)
    names = tuple(f"G{j + 1}" for j in range(k))
    columns = {name: geno[:, j] for j, name in enumerate(names)}
    columns.update(cov)
    columns["X"] = x
    columns["Y"] = y
    return ScreeningCohort(columns, names, frozenset(names[n_valid:]))
