"""File formats, reports and the ``medcomplete`` command line.

Subcommands::

    medcomplete power    --mu2 0:5:0.25 --rho 0,0.3,0.5 --cutoff 2 --out run/power
    medcomplete type1    --mu 1,1 --mu 1,2 --rho 0:0.9:0.1 --delta 0.67,0.8 --out run/type1
    medcomplete simulate --config sim.cfg --replicates 200 --out run/table1
    medcomplete screen   --data cohort.csv --exposure X --outcome Y --variants G1,G2 --out run/mr

Exit codes: 0 success, 1 runtime or statistical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cmt_criteria import METHODS, CmtDecision, ProportionStats, decide, proportions
from .errors import DomainError, FitError, MedCompleteError, ParseError
from .gauss_num import BvnParams, cm_power, reject_prob_cmt1, reject_prob_cmt3
from .mediation import MediationEstimate, estimate_ternary_variant
from .sim_harness import SimConfig, StudyResult, run_study

__all__ = [
    "ColumnSchema",
    "TabularData",
    "VariantRecord",
    "RunManifest",
    "parse_grid",
    "parse_dataset_csv",
    "write_dataset_csv",
    "read_config_file",
    "format_number",
    "screen_variants",
    "evaluate_variant",
    "screen_report_rows",
    "screen_summary_rows",
    "metrics_rows",
    "roc_rows",
    "main",
]

SEED_ENV = "MEDCOMPLETE_SEED"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
DEFAULT_SCREEN_DELTAS = (0.65, 0.7)


class UsageError(MedCompleteError):
    """Bad command-line input; maps to exit code 2."""


# --------------------------------------------------------------------- values

def format_number(x: float) -> str:
    """Locale-free shortest round-trip text for a number.

    Integral values print without a decimal point so that 0/1/2 codes survive
    a parse/write cycle unchanged.
    """
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise UsageError("empty grid")
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise UsageError(f"grid {text!r} must look like start:stop:step")
            start, stop, step = parts
            if not step > 0 or stop < start:
                raise UsageError(f"grid {text!r} needs step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = tuple(round(start + i * step, 12) for i in range(count))
        else:
            values = tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise UsageError(f"invalid grid {text!r}: {exc}") from None
    if not all(math.isfinite(v) for v in values):
        raise UsageError(f"grid {text!r} has non-finite values")
    return values


def _names(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(s.strip() for s in text.split(",") if s.strip())


# --------------------------------------------------------------------- datasets

@dataclass(frozen=True)
class ColumnSchema:
    """Column roles.  ``kinds`` maps a column to binary, genotype or continuous."""

    exposure: str | None = None
    mediator: str | None = None
    outcome: str | None = None
    covariates: tuple[str, ...] = ()
    variants: tuple[str, ...] = ()
    kinds: Mapping[str, str] = field(default_factory=dict)

    def columns(self) -> tuple[str, ...]:
        named = [self.exposure, self.mediator, self.outcome, *self.covariates, *self.variants]
        out: list[str] = []
        for name in named:
            if name is not None and name not in out:
                out.append(name)
        return tuple(out)

    def kind_of(self, name: str) -> str:
        if name in self.kinds:
            return self.kinds[name]
        if name in self.variants:
            return "genotype"
        return "continuous"


_ALLOWED = {"binary": (0.0, 1.0), "genotype": (0.0, 1.0, 2.0)}


@dataclass(frozen=True)
class TabularData:
    """Role columns of a parsed CSV as float arrays, in header order."""

    columns: dict[str, np.ndarray]
    n_rows: int

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]


def parse_dataset_csv(path: str | os.PathLike, schema: ColumnSchema) -> TabularData:
    """Read a UTF-8 CSV with a header row, keeping and validating role columns.

    Row numbers in errors count data rows from 1 (the header is row 0).
    """
    wanted = schema.columns()
    if not wanted:
        raise ParseError("schema names no columns")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", row=0) from None
        header = [h.strip() for h in header]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise ParseError("missing column", row=0, column=missing[0])
        keep = [c for c in header if c in wanted]
        idx = {c: header.index(c) for c in keep}
        cells: dict[str, list[float]] = {c: [] for c in keep}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=row_no)
            for c in keep:
                raw = row[idx[c]].strip()
                try:
                    value = float(raw)
                except ValueError:
                    raise ParseError(f"non-numeric cell {raw!r}", row=row_no, column=c) from None
                if not math.isfinite(value):
                    raise ParseError(f"non-finite cell {raw!r}", row=row_no, column=c)
                allowed = _ALLOWED.get(schema.kind_of(c))
                if allowed is not None and value not in allowed:
                    raise ParseError(
                        f"value {raw!r} outside {schema.kind_of(c)} domain {{{', '.join(format_number(a) for a in allowed)}}}",
                        row=row_no, column=c)
                cells[c].append(value)
    n_rows = len(next(iter(cells.values())))
    return TabularData({c: np.asarray(v, dtype=float) for c, v in cells.items()}, n_rows)


def write_dataset_csv(path: str | os.PathLike, columns: Mapping[str, Sequence[float]]) -> None:
    """Write columns with a header row; inverse of :func:`parse_dataset_csv`."""
    names = list(columns)
    arrays = [np.asarray(columns[c], dtype=float) for c in names]
    if len({a.shape for a in arrays}) > 1:
        raise DomainError("columns differ in length")
    _write_csv(path, names, zip(*[[format_number(v) for v in a] for a in arrays]))


def _write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


# --------------------------------------------------------------------- config files

def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", row=line_no)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("empty key", row=line_no)
        out[key.replace("-", "_")] = value
    return out


# --------------------------------------------------------------------- manifest

def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _sha256(path: str | os.PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict[str, object]
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = field(default_factory=_version)

    def render(self) -> str:
        # SOURCE_DATE_EPOCH pins the timestamp for reproducible builds.
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        stamp = time.gmtime(int(epoch)) if epoch and epoch.isdigit() else time.gmtime()
        lines = [
            f"tool = medcomplete {self.version}",
            f"command = {self.command}",
            f"seed = {'' if self.seed is None else self.seed}",
            f"timestamp = {time.strftime('%Y-%m-%dT%H:%M:%SZ', stamp)}",
        ]
        lines += [f"config.{k} = {_render_value(v)}" for k, v in sorted(self.config.items())]
        lines += [f"input.{Path(k).name} = sha256:{v}" for k, v in sorted(self.inputs.items())]
        lines += [f"output.{Path(k).name} = sha256:{v}" for k, v in sorted(self.outputs.items())]
        return "\n".join(lines) + "\n"

    def write(self, prefix: str) -> Path:
        path = Path(f"{prefix}_manifest.txt")
        path.write_text(self.render(), encoding="utf-8", newline="")
        return path


def _render_value(v: object) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(_render_value(x) for x in v)
    if isinstance(v, float):
        return format_number(v)
    return "" if v is None else str(v)


# --------------------------------------------------------------------- plots

def _line_svg(path: Path, series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
              xlabel: str, ylabel: str, title: str, diagonal: bool = False,
              markers: Mapping[str, tuple[float, float]] | None = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "medcomplete", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for label, (xs, ys) in series.items():
            ax.plot(xs, ys, marker="o", markersize=3, label=label)
        for label, (x, y) in (markers or {}).items():
            ax.plot([x], [y], marker="*", markersize=12, linestyle="none", label=label)
        if diagonal:
            ax.plot([0, 1], [0, 1], color="grey", linestyle=":", linewidth=1)
            ax.set_xlim(0, 1)
            ax.set_ylim(0, 1)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


# --------------------------------------------------------------------- screening

@dataclass(frozen=True)
class VariantRecord:
    """Screening outcome for one genotype column.

    ``estimate`` is None when the variant is untestable (``reason`` says why).
    """

    variant_id: str
    column: str
    estimate: MediationEstimate | None
    proportions: ProportionStats | None
    decisions: tuple[CmtDecision, ...]
    reason: str = ""

    @property
    def testable(self) -> bool:
        return self.estimate is not None

    def verdict(self, label: str) -> bool | None:
        for d in self.decisions:
            if d.label == label:
                return d.verdict
        return None


def _method_keys(methods: Sequence[str], deltas: Sequence[float]) -> list[tuple[str, float | None]]:
    keys: list[tuple[str, float | None]] = []
    for m in METHODS:
        if m not in methods:
            continue
        if m == "CMT1":
            keys.append((m, None))
        else:
            keys.extend((m, float(d)) for d in deltas)
    return keys


def evaluate_variant(variant_id: str, estimate: MediationEstimate, alpha: float,
                     methods: Sequence[str] = METHODS, deltas: Sequence[float] = DEFAULT_SCREEN_DELTAS,
                     column: str | None = None) -> VariantRecord:
    """Apply every requested test to one variant's estimate."""
    props = proportions(estimate)
    decisions = tuple(decide(estimate, m, d, alpha, props=props) for m, d in _method_keys(methods, deltas))
    return VariantRecord(variant_id, column or variant_id, estimate, props, decisions)


def screen_variants(data: Mapping[str, np.ndarray], variants: Sequence[str], exposure: str, outcome: str,
                    covariates: Sequence[str] = (), alpha: float = 0.05, methods: Sequence[str] = METHODS,
                    deltas: Sequence[float] = DEFAULT_SCREEN_DELTAS, selection: bool = False,
                    seed: int | None = None) -> list[VariantRecord]:
    """Per-variant complete-mediation screen along variant -> exposure -> outcome.

    Each variant is the 0/1/2 "treatment", the exposure plays the mediator.
    Monomorphic variants and variants whose fits fail are reported as
    untestable instead of aborting the screen.
    """
    if not variants:
        raise UsageError("at least one variant column is required")
    if len(set(variants)) != len(variants):
        raise UsageError("variant ids must be unique")
    cov = {c: np.asarray(data[c], dtype=float) for c in covariates}
    records = []
    for v in variants:
        g = np.asarray(data[v], dtype=float)
        if np.unique(g).size < 2:
            records.append(VariantRecord(v, v, None, None, (), "untestable: monomorphic"))
            continue
        try:
            est = estimate_ternary_variant(g, data[exposure], data[outcome], cov or None,
                                           selection=selection, seed=seed)
        except (FitError, DomainError) as exc:
            records.append(VariantRecord(v, v, None, None, (), f"untestable: {exc}"))
            continue
        records.append(evaluate_variant(v, est, alpha, methods, deltas, column=v))
    return records


def _p_two_sided(z: float) -> float:
    from .gauss_num import norm_cdf

    return 2.0 * norm_cdf(-abs(z)) if math.isfinite(z) else 0.0


SCREEN_HEADER_BASE = ["variant", "row", "estimate", "se", "z", "p_value"]


def screen_report_rows(records: Sequence[VariantRecord], methods: Sequence[str] = METHODS,
                       deltas: Sequence[float] = DEFAULT_SCREEN_DELTAS,
                       unicode_marks: bool = False) -> tuple[list[str], list[list[object]]]:
    """Five rows per variant: NIE, NDE, APM %, SAPM %, and the CM verdict."""
    ok, bad = ("○", "✕") if unicode_marks else ("OK", "X")
    keys = _method_keys(methods, deltas)
    labels = [m if d is None else f"{m}({d:g})" for m, d in keys]
    header = SCREEN_HEADER_BASE + labels
    rows: list[list[object]] = []
    for rec in records:
        if not rec.testable:
            rows.append([rec.variant_id, "untestable", "", "", "", ""] + [rec.reason] + [""] * (len(labels) - 1))
            continue
        est, props = rec.estimate, rec.proportions
        by_label = {d.label: d for d in rec.decisions}
        mark = lambda flag: ok if flag else bad  # noqa: E731
        rows.append([rec.variant_id, "(i) NIE", est.ie, est.se_ie, est.z_ie, _p_two_sided(est.z_ie)]
                    + [mark(by_label[l].crit_i) for l in labels])
        rows.append([rec.variant_id, "(ii) NDE", est.de, est.se_de, est.z_de, _p_two_sided(est.z_de)]
                    + [mark(by_label[l].crit_ii) for l in labels])
        rows.append([rec.variant_id, "(iii) APM(%)", 100 * props.apm, "", "", ""]
                    + [mark(by_label[l].crit_iii) if by_label[l].method == "CMT2" else "-" for l in labels])
        rows.append([rec.variant_id, "(iii') SAPM(%)", 100 * props.sapm, "", "", ""]
                    + [mark(by_label[l].crit_iii) if by_label[l].method == "CMT3" else "-" for l in labels])
        rows.append([rec.variant_id, "CM or not", "", "", "", ""]
                    + ["Yes" if by_label[l].verdict else "No" for l in labels])
    return header, rows


def screen_summary_rows(records: Sequence[VariantRecord], methods: Sequence[str] = METHODS,
                        deltas: Sequence[float] = DEFAULT_SCREEN_DELTAS) -> tuple[list[str], list[list[object]]]:
    """Counts of CM / non-CM / untestable per test, plus the CM fraction among testable variants."""
    header = ["test", "cm", "non_cm", "untestable", "cm_fraction"]
    rows: list[list[object]] = []
    untestable = sum(not r.testable for r in records)
    tested = [r for r in records if r.testable]
    for m, d in _method_keys(methods, deltas):
        label = m if d is None else f"{m}({d:g})"
        cm = sum(bool(r.verdict(label)) for r in tested)
        frac = cm / len(tested) if tested else math.nan
        rows.append([label, cm, len(tested) - cm, untestable, frac])
    return header, rows


# --------------------------------------------------------------------- simulation tables

def metrics_rows(study: StudyResult) -> tuple[list[str], list[list[object]]]:
    """Table layout: one row per (tau', test) with an asterisk on the Youden-optimal delta."""
    optimal = {(c.method, c.tau_prime): c.optimal_delta for c in study.rocs}
    header = ["tau_prime", "test", "method", "delta", "sensitivity", "one_minus_specificity",
              "youden", "optimal", "n_cm", "n_noncm", "failed_cm", "failed_noncm"]
    rows = []
    for r in study.metrics:
        star = "*" if r.delta is not None and optimal.get((r.method, r.tau_prime)) == r.delta else ""
        rows.append([r.tau_prime, r.label, r.method, "" if r.delta is None else r.delta, r.sensitivity,
                     1.0 - r.specificity, r.youden, star, r.n_cm, r.n_noncm, r.failed_cm, r.failed_noncm])
    return header, rows


def roc_rows(study: StudyResult) -> tuple[list[str], list[list[object]]]:
    header = ["tau_prime", "method", "delta", "one_minus_specificity", "sensitivity", "youden", "optimal"]
    rows = []
    for c in study.rocs:
        for d, (fpr, tpr), y in zip(c.deltas, c.points, c.youden):
            rows.append([c.tau_prime, c.method, d, fpr, tpr, y, "*" if d == c.optimal_delta else ""])
        if c.cmt1_point is not None:
            rows.append([c.tau_prime, "CMT1", "", c.cmt1_point[0], c.cmt1_point[1],
                         c.cmt1_point[1] - c.cmt1_point[0], ""])
    return header, rows


# --------------------------------------------------------------------- commands

def _prefix(out: str) -> str:
    parent = Path(out).parent
    parent.mkdir(parents=True, exist_ok=True)
    return out


def _finish(prefix: str, manifest: RunManifest, outputs: Sequence[Path]) -> None:
    manifest.outputs = {str(p): _sha256(p) for p in outputs}
    manifest.write(prefix)


def cmd_power(args: argparse.Namespace) -> int:
    mu2s = parse_grid(args.mu2)
    rhos = parse_grid(args.rho)
    _check_rhos(rhos)
    if not args.cutoff > 0:
        raise UsageError("--cutoff must be positive")
    prefix = _prefix(args.out)
    rows = [[mu2, rho, args.cutoff, cm_power(BvnParams(0.0, mu2, rho, args.cutoff))] for rho in rhos for mu2 in mu2s]
    csv_path = Path(f"{prefix}_power.csv")
    _write_csv(csv_path, ["mu2", "rho", "cutoff", "reject_prob"], rows)
    outputs = [csv_path]
    if not args.no_plots:
        svg = Path(f"{prefix}_power.svg")
        series = {f"rho={rho:g}": (mu2s, [r[3] for r in rows if r[1] == rho]) for rho in rhos}
        _line_svg(svg, series, "u2 (mean of Z_NDE)", "P(reject non-CM)", "CMT1 rejection probability, u1 = 0")
        outputs.append(svg)
    _finish(prefix, RunManifest("power", {"mu2": args.mu2, "rho": args.rho, "cutoff": args.cutoff}, None), outputs)
    return EXIT_OK


def _check_rhos(rhos: Sequence[float]) -> None:
    if any(not -1.0 < r < 1.0 for r in rhos):
        raise UsageError("--rho values must lie strictly inside (-1, 1)")


def cmd_type1(args: argparse.Namespace) -> int:
    mus = []
    for text in args.mu or ["1,1"]:
        pair = parse_grid(text)
        if len(pair) != 2 or ":" in text:
            raise UsageError(f"--mu takes a pair 'mu1,mu2', got {text!r}")
        mus.append(pair)
    rhos = parse_grid(args.rho)
    _check_rhos(rhos)
    deltas = parse_grid(args.delta) if args.delta else ()
    if any(not 0 < d < 1 for d in deltas):
        raise UsageError("--delta values must lie in (0, 1)")
    if not args.cutoff > 0:
        raise UsageError("--cutoff must be positive")
    prefix = _prefix(args.out)
    rows = []
    for mu1, mu2 in mus:
        for rho in rhos:
            p = BvnParams(mu1, mu2, rho, args.cutoff)
            if not args.cmt3_only:
                rows.append([mu1, mu2, rho, "CMT1", "", reject_prob_cmt1(p)])
            for d in deltas:
                rows.append([mu1, mu2, rho, f"CMT3({d:g})", d, reject_prob_cmt3(p, d)])
    csv_path = Path(f"{prefix}_type1.csv")
    _write_csv(csv_path, ["mu1", "mu2", "rho", "test", "delta", "reject_prob"], rows)
    outputs = [csv_path]
    if not args.no_plots:
        svg = Path(f"{prefix}_type1.svg")
        series = {}
        for mu1, mu2 in mus:
            for test in dict.fromkeys(r[3] for r in rows):
                pts = [r for r in rows if r[0] == mu1 and r[1] == mu2 and r[3] == test]
                series[f"{test} u=({mu1:g},{mu2:g})"] = ([r[2] for r in pts], [r[5] for r in pts])
        _line_svg(svg, series, "rho", "P(reject non-CM)", "Type I error of complete-mediation tests")
        outputs.append(svg)
    config = {"mu": [f"{a:g};{b:g}" for a, b in mus], "rho": args.rho, "delta": args.delta or "",
              "cutoff": args.cutoff}
    _finish(prefix, RunManifest("type1", config, None), outputs)
    return EXIT_OK


_SIM_FIELDS: dict[str, type] = {
    "outcome_kind": str, "alpha_path": float, "beta_path": float, "tau_primes": tuple, "n": int,
    "replicates": int, "seed": int, "selection": bool, "test_alpha": float, "cutoff": float,
    "delta_grid": tuple, "methods": tuple, "coef_sd": float, "outcome_noise_sd": float,
    "effect_scale": str, "selection_scope": str, "max_fail_rate": float,
}


def _coerce(key: str, value: object) -> object:
    kind = _SIM_FIELDS[key]
    if not isinstance(value, str):
        return value
    text = value.strip()
    if text.lower() in ("", "none"):
        return None
    try:
        if kind is bool:
            if text.lower() in ("on", "true", "yes", "1"):
                return True
            if text.lower() in ("off", "false", "no", "0"):
                return False
            raise ValueError(f"expected on/off, got {text!r}")
        if kind is tuple:
            return parse_grid(text) if key != "methods" else _names(text)
        return kind(text)
    except ValueError as exc:
        raise UsageError(f"{key}: {exc}") from None


def resolve_sim_config(args: argparse.Namespace, env: Mapping[str, str] | None = None) -> SimConfig:
    """Defaults <- config file <- flags; seed falls back to the environment."""
    env = os.environ if env is None else env
    merged: dict[str, object] = {}
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key not in _SIM_FIELDS:
                raise UsageError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
    for key in _SIM_FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = _coerce(key, value)
    if merged.get("seed") is None:
        env_seed = env.get(SEED_ENV)
        if env_seed:
            try:
                merged["seed"] = int(env_seed)
            except ValueError:
                raise UsageError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    merged = {k: v for k, v in merged.items() if v is not None}
    try:
        return SimConfig(**merged)
    except (DomainError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_sim_config(args)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    prefix = _prefix(args.out)
    study = run_study(config, workers=args.workers)
    header, rows = metrics_rows(study)
    metrics_path = Path(f"{prefix}_metrics.csv")
    _write_csv(metrics_path, header, rows)
    header, rows = roc_rows(study)
    roc_path = Path(f"{prefix}_roc.csv")
    _write_csv(roc_path, header, rows)
    outputs = [metrics_path, roc_path]
    if not args.no_plots:
        for tau in config.tau_primes:
            curves = [c for c in study.rocs if c.tau_prime == tau]
            if not curves:
                continue
            series = {c.method: ([p[0] for p in c.points], [p[1] for p in c.points]) for c in curves}
            marks = {"CMT1": curves[0].cmt1_point} if curves[0].cmt1_point else None
            svg = Path(f"{prefix}_roc_tau{format_number(tau)}.svg")
            _line_svg(svg, series, "1 - specificity", "sensitivity",
                      f"ROC over delta, tau' = 0 vs {tau:g}", diagonal=True, markers=marks)
            outputs.append(svg)
    resolved = {k: getattr(config, k) for k in _SIM_FIELDS}
    resolved["workers"] = args.workers
    inputs = {args.config: _sha256(args.config)} if args.config else {}
    _finish(prefix, RunManifest("simulate", resolved, config.seed, inputs), outputs)
    return EXIT_OK


def cmd_screen(args: argparse.Namespace) -> int:
    variants = _names(args.variants)
    if not variants:
        raise UsageError("--variants needs at least one column")
    exposure = args.exposure or args.mediator
    if not exposure or not args.outcome:
        raise UsageError("--exposure and --outcome are required")
    methods = _names(args.method) or METHODS
    if any(m not in METHODS for m in methods):
        raise UsageError(f"--method must be drawn from {','.join(METHODS)}")
    deltas = parse_grid(args.delta) if args.delta else DEFAULT_SCREEN_DELTAS
    if any(not 0 < d < 1 for d in deltas):
        raise UsageError("--delta values must lie in (0, 1)")
    covariates = _names(args.covariates)
    kinds = {exposure: "binary", args.outcome: "binary"}
    schema = ColumnSchema(exposure=exposure, outcome=args.outcome, covariates=covariates,
                          variants=variants, kinds=kinds)
    data = parse_dataset_csv(args.data, schema)
    if args.alpha is not None:
        alpha = args.alpha
    elif args.bonferroni:
        alpha = 0.05 / len(variants)
    else:
        alpha = 0.05
    if not 0 < alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    seed = args.seed if args.seed is not None else _env_seed()
    records = screen_variants(data.columns, variants, exposure, args.outcome, covariates, alpha, methods,
                              deltas, selection=args.selection == "on", seed=seed)
    prefix = _prefix(args.out)
    header, rows = screen_report_rows(records, methods, deltas, args.unicode)
    report = Path(f"{prefix}_screen.csv")
    _write_csv(report, header, rows)
    header, rows = screen_summary_rows(records, methods, deltas)
    summary = Path(f"{prefix}_screen_summary.csv")
    _write_csv(summary, header, rows)
    config = {"exposure": exposure, "outcome": args.outcome, "variants": list(variants),
              "covariates": list(covariates), "alpha": alpha, "method": list(methods), "delta": list(deltas),
              "selection": args.selection, "rows": data.n_rows}
    _finish(prefix, RunManifest("screen", config, seed, {args.data: _sha256(args.data)}), [report, summary])
    return EXIT_OK


def _env_seed() -> int | None:
    text = os.environ.get(SEED_ENV)
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {text!r}") from None


# --------------------------------------------------------------------- argparse

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse's own exit path uses code 2 too
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="medcomplete", description="Complete-mediation testing toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default="medcomplete", help="output path prefix")
        p.add_argument("--no-plots", action="store_true", help="skip SVG output")

    p = sub.add_parser("power", help="CMT1 power curves under complete mediation")
    p.add_argument("--mu2", default="0:5:0.25", help="grid of E[Z_NDE]")
    p.add_argument("--rho", default="0,0.3,0.5", help="grid of correlations")
    p.add_argument("--cutoff", type=float, default=2.0)
    common(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("type1", help="type I error of CMT1 and CMT3(delta)")
    p.add_argument("--mu", action="append", help="mean pair 'mu1,mu2' (repeatable)")
    p.add_argument("--rho", default="0:0.9:0.1")
    p.add_argument("--delta", default="0.67,0.8", help="CMT3 thresholds; empty for CMT1 only")
    p.add_argument("--cutoff", type=float, default=2.0)
    p.add_argument("--cmt3-only", action="store_true", help="omit CMT1 rows")
    common(p)
    p.set_defaults(func=cmd_type1)

    p = sub.add_parser("simulate", help="sensitivity/specificity simulation study")
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--outcome-kind", dest="outcome_kind", choices=("continuous", "binary"))
    p.add_argument("--alpha-path", dest="alpha_path")
    p.add_argument("--beta-path", dest="beta_path")
    p.add_argument("--tau-primes", dest="tau_primes", help="non-CM direct effects, e.g. 0.2,0.3")
    p.add_argument("--n")
    p.add_argument("--replicates")
    p.add_argument("--seed")
    p.add_argument("--selection", choices=("on", "off"))
    p.add_argument("--test-alpha", dest="test_alpha")
    p.add_argument("--cutoff")
    p.add_argument("--delta-grid", dest="delta_grid")
    p.add_argument("--methods")
    p.add_argument("--coef-sd", dest="coef_sd")
    p.add_argument("--outcome-noise-sd", dest="outcome_noise_sd")
    p.add_argument("--effect-scale", dest="effect_scale", choices=("conditional", "marginal"))
    p.add_argument("--selection-scope", dest="selection_scope", choices=("separate", "union", "double"))
    p.add_argument("--max-fail-rate", dest="max_fail_rate")
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("screen", help="per-variant pleiotropy screen")
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--exposure", help="exposure column (the mediator of variant -> outcome)")
    p.add_argument("--mediator", help="alias of --exposure")
    p.add_argument("--outcome", required=True)
    p.add_argument("--variants", required=True, help="comma-separated 0/1/2 genotype columns")
    p.add_argument("--covariates", default="")
    p.add_argument("--alpha", type=float)
    p.add_argument("--bonferroni", action="store_true", help="alpha = 0.05 / number of variants")
    p.add_argument("--delta", help="thresholds for CMT2/CMT3 (default 0.65,0.7)")
    p.add_argument("--method", help="subset of CMT1,CMT2,CMT3")
    p.add_argument("--selection", choices=("on", "off"), default="off")
    p.add_argument("--seed", type=int)
    p.add_argument("--unicode", action="store_true", help="use circle/cross marks")
    common(p)
    p.set_defaults(func=cmd_screen)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"medcomplete: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"medcomplete: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MedCompleteError, OSError) as exc:
        print(f"medcomplete: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
