"""Evaluation harness: sample factuals from a source cluster, generate
counterfactuals, record distances / membership / timing, ingest external
baseline counterfactuals from CSV and emit comparable reports.

Reports serialize to JSON (schema version 1) plus a flat per-factual CSV.
Distance aggregates cover the records with a tolerant target-membership
verdict; timing aggregates cover every record. Solve times come from the
monotonic clock around each solve and exclude model loading and I/O.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import (
    CfRequest,
    CfResult,
    ClusterCfError,
    ClusterModel,
    Mask,
    ValidationError,
    distance_sq,
    score_matrix,
)
from .explain import MEMBERSHIP_TIE_TOL, explain
from .fit import Dataset
from .model_io import DataError, canonical_json

REPORT_SCHEMA_VERSION = 1
RNG_ALGORITHM = "PCG64"
SAMPLING = "without_replacement"


@dataclass(frozen=True, eq=False)
class EvalConfig:
    source: int
    target: int
    n_factuals: int = 50
    seed: int = 0
    epsilon: float = 1e-5
    mask: "Mask | None" = None
    external_baselines: "tuple" = ()  # (name, csv_path) pairs

    def __post_init__(self):
        if self.n_factuals < 1:
            raise ValidationError("n_factuals", "must be >= 1")
        if self.source == self.target:
            raise ValidationError("target", "source and target clusters must differ")
        object.__setattr__(self, "external_baselines", tuple(self.external_baselines))


@dataclass
class FactualRecord:
    factual_id: int
    status: str
    strict_member: bool
    tolerant_member: bool
    distance_sq: "float | None"
    lam: "float | None"
    residual: "float | None"
    elapsed: float
    factual: "list[float]"
    counterfactual: "list[float] | None"


@dataclass
class BaselineRecord:
    factual_id: int
    counterfactual: "list[float]"
    distance_sq: float
    member_strict: bool
    member_tolerant: bool


@dataclass
class EvalReport:
    schema_version: int
    model_kind: str
    d: int
    source: int
    target: int
    epsilon: float
    mask_bits: "list[int]"
    seed: int
    rng_algorithm: str
    sampling: str
    n_requested: int
    n_evaluated: int
    records: "list[FactualRecord]"
    aggregates: dict
    baselines: "dict[str, list[BaselineRecord]]" = field(default_factory=dict)
    comparison: "dict | None" = None


def compute_aggregates(records) -> dict:
    """Summary statistics recomputable exactly from the records."""
    n = len(records)
    strict = sum(1 for r in records if r.strict_member) / n
    tolerant = sum(1 for r in records if r.tolerant_member) / n
    dists = np.asarray([r.distance_sq for r in records if r.tolerant_member], dtype=np.float64)
    distance = None
    if dists.size:
        distance = {
            "min": float(dists.min()),
            "q1": float(np.percentile(dists, 25)),
            "median": float(np.percentile(dists, 50)),
            "q3": float(np.percentile(dists, 75)),
            "max": float(dists.max()),
            "mean": float(dists.mean()),
        }
    elapsed = np.asarray([r.elapsed for r in records], dtype=np.float64)
    return {
        "n": n,
        "success_strict": strict,
        "success_tolerant": tolerant,
        "distance": distance,
        "elapsed": {"mean": float(elapsed.mean()), "median": float(np.percentile(elapsed, 50))},
    }


def _membership(model: ClusterModel, z_internal: np.ndarray, target: int):
    scores = score_matrix(model, z_internal[None, :])[0]
    strict = int(np.argmax(scores)) == target
    tolerant = strict or (float(np.max(scores)) - float(scores[target])) <= MEMBERSHIP_TIE_TOL
    return strict, tolerant


def run_eval(model: ClusterModel, data: Dataset, config: EvalConfig) -> EvalReport:
    """Sample factuals from the source cluster (without replacement, seeded)
    and explain each one toward the target cluster."""
    rows = data.rows
    internal = np.asarray(model.to_internal(rows), dtype=np.float64)
    labels = np.argmax(score_matrix(model, internal), axis=1)
    source_rows = np.flatnonzero(labels == config.source)
    if source_rows.size == 0:
        raise ClusterCfError(f"source cluster {config.source} is empty in this dataset")
    n = min(config.n_factuals, int(source_rows.size))
    if n < config.n_factuals:
        warnings.warn(
            f"source cluster has only {source_rows.size} rows; using all of them",
            stacklevel=2,
        )
    rng = np.random.default_rng(config.seed)
    chosen = np.sort(rng.choice(source_rows, size=n, replace=False))

    mask = config.mask if config.mask is not None else Mask.all_free(model.d)
    records = []
    for row_id in chosen.tolist():
        request = CfRequest(
            factual=rows[row_id],
            target=config.target,
            source=config.source,
            mask=mask,
            epsilon=config.epsilon,
        )
        result = explain(model, request)
        records.append(
            FactualRecord(
                factual_id=int(row_id),
                status=result.status,
                strict_member=bool(result.strict_member),
                tolerant_member=bool(result.tolerant_member),
                distance_sq=result.distance_sq,
                lam=result.lam,
                residual=result.residual,
                elapsed=result.elapsed,
                factual=rows[row_id].tolist(),
                counterfactual=(
                    result.counterfactual_original.tolist()
                    if result.counterfactual_original is not None
                    else None
                ),
            )
        )

    report = EvalReport(
        schema_version=REPORT_SCHEMA_VERSION,
        model_kind=model.kind,
        d=model.d,
        source=config.source,
        target=config.target,
        epsilon=config.epsilon,
        mask_bits=[int(b) for b in mask.bits],
        seed=config.seed,
        rng_algorithm=RNG_ALGORITHM,
        sampling=SAMPLING,
        n_requested=config.n_factuals,
        n_evaluated=n,
        records=records,
        aggregates=compute_aggregates(records),
    )
    if config.external_baselines:
        report = attach_baselines(report, model, config.external_baselines)
    return report


def ingest_baseline(path, name: str, model: ClusterModel, factuals: dict, target: int):
    """Read counterfactuals produced by an external method.

    Expected CSV: a header starting with `factual_id` followed by exactly
    d feature columns, vectors in original units. Membership and distance
    are judged with this package's assignment rule and metric so that all
    methods are compared on identical footing.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [row for row in csv.reader(fh) if any(c.strip() for c in row)]
    except OSError as exc:
        raise DataError(f"cannot read baseline {path}: {exc}") from exc
    if not rows:
        raise DataError(f"baseline {path} is empty")
    header = rows[0]
    if not header or header[0].strip() != "factual_id":
        raise DataError(f"baseline {path}: first header column must be 'factual_id'")
    if len(header) - 1 != model.d:
        raise DataError(
            f"baseline {path}: expected {model.d} feature columns, got {len(header) - 1}"
        )
    records = []
    for r, cells in enumerate(rows[1:], start=2):
        if len(cells) != len(header):
            raise DataError(f"baseline {path}: ragged row {r}")
        try:
            factual_id = int(cells[0])
        except ValueError:
            raise DataError(f"baseline {path}: bad factual_id {cells[0]!r} at row {r}") from None
        if factual_id not in factuals:
            raise DataError(f"baseline {path}: unknown factual_id {factual_id} at row {r}")
        try:
            vec = np.asarray([float(c) for c in cells[1:]], dtype=np.float64)
        except ValueError:
            raise DataError(f"baseline {path}: non-numeric cell at row {r}") from None
        if not np.all(np.isfinite(vec)):
            raise DataError(f"baseline {path}: non-finite cell at row {r}")
        z_internal = np.asarray(model.to_internal(vec), dtype=np.float64)
        y_internal = np.asarray(model.to_internal(np.asarray(factuals[factual_id])), dtype=np.float64)
        strict, tolerant = _membership(model, z_internal, target)
        records.append(
            BaselineRecord(
                factual_id=factual_id,
                counterfactual=vec.tolist(),
                distance_sq=distance_sq(z_internal, y_internal),
                member_strict=strict,
                member_tolerant=tolerant,
            )
        )
    records.sort(key=lambda rec: rec.factual_id)
    return records


def attach_baselines(report: EvalReport, model: ClusterModel, baselines) -> EvalReport:
    """Ingest (name, path) pairs and add the common-success comparison block.

    Only factuals for which our method and every baseline landed in the
    target cluster enter the comparison, so the distance columns are
    paired across methods.
    """
    factuals = {r.factual_id: np.asarray(r.factual) for r in report.records}
    tables = {}
    for name, path in baselines:
        tables[name] = ingest_baseline(path, name, model, factuals, report.target)
    ours_ok = {r.factual_id for r in report.records if r.tolerant_member}
    common = sorted(
        set.intersection(
            ours_ok,
            *({rec.factual_id for rec in recs if rec.member_tolerant} for recs in tables.values()),
        )
    )
    ours_by_id = {r.factual_id: r for r in report.records}
    distances = {"ours": [ours_by_id[i].distance_sq for i in common]}
    for name, recs in tables.items():
        by_id = {rec.factual_id: rec for rec in recs}
        distances[name] = [by_id[i].distance_sq for i in common]
    report.baselines = tables
    report.comparison = {"factual_ids": common, "distances": distances}
    return report


# ---------------------------------------------------------------------------
# Epsilon sweeps


@dataclass
class SweepPoint:
    epsilon: float
    result: CfResult
    deltas: "list[float] | None"


def sweep_epsilon(
    model: ClusterModel,
    y,
    target: int,
    mask: "Mask | None",
    epsilons,
    source: "int | None" = None,
):
    """One counterfactual per plausibility value, with the per-feature
    signed changes `z - y` in original units. Solver failures at one
    epsilon do not stop the sweep."""
    eps_list = [float(e) for e in epsilons]
    if not eps_list:
        raise ValidationError("epsilons", "need at least one value")
    if any(e < 0.0 or not math.isfinite(e) for e in eps_list):
        raise ValidationError("epsilons", "all values must be finite and >= 0")
    if eps_list != sorted(eps_list):
        raise ValidationError("epsilons", "values must be sorted ascending")
    y_arr = np.asarray(y, dtype=np.float64)
    points = []
    for eps in eps_list:
        result = explain(
            model,
            CfRequest(factual=y_arr, target=target, source=source, mask=mask, epsilon=eps),
        )
        deltas = None
        if result.counterfactual_original is not None:
            deltas = (result.counterfactual_original - y_arr).tolist()
        points.append(SweepPoint(epsilon=eps, result=result, deltas=deltas))
    return points


# ---------------------------------------------------------------------------
# Report serialization


def report_to_dict(report: EvalReport) -> dict:
    out = asdict(report)
    return out


def report_from_dict(obj: dict) -> EvalReport:
    if obj.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise DataError(f"unsupported report schema_version {obj.get('schema_version')!r}")
    records = [FactualRecord(**r) for r in obj["records"]]
    baselines = {
        name: [BaselineRecord(**rec) for rec in recs]
        for name, recs in obj.get("baselines", {}).items()
    }
    known = {f for f in EvalReport.__dataclass_fields__}
    extras = set(obj) - known
    if extras:
        raise DataError(f"unknown report fields {sorted(extras)}")
    kwargs = {k: v for k, v in obj.items() if k not in ("records", "baselines")}
    return EvalReport(records=records, baselines=baselines, **kwargs)


def write_report_json(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(report_to_dict(report)))


def read_report_json(path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))


def write_records_csv(report: EvalReport, path) -> None:
    """Flat per-factual table; counterfactual feature columns are empty for
    unsolved records."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        cf_cols = [f"cf_{i}" for i in range(report.d)]
        writer.writerow(
            ["factual_id", "status", "strict_member", "tolerant_member", "distance_sq",
             "lambda", "residual", "elapsed"] + cf_cols
        )
        for r in report.records:
            cf = r.counterfactual if r.counterfactual is not None else [""] * report.d
            writer.writerow(
                [
                    r.factual_id,
                    r.status,
                    int(r.strict_member),
                    int(r.tolerant_member),
                    "" if r.distance_sq is None else repr(r.distance_sq),
                    "" if r.lam is None else repr(r.lam),
                    "" if r.residual is None else repr(r.residual),
                    repr(r.elapsed),
                ]
                + [c if c == "" else repr(c) for c in cf]
            )


def export_baseline_csv(report: EvalReport, path) -> None:
    """Re-export our counterfactuals in the baseline CSV format, which makes
    round-trip checks and cross-tool comparisons possible."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["factual_id"] + [f"f{i}" for i in range(report.d)])
        for r in report.records:
            if r.counterfactual is None:
                continue
            writer.writerow([r.factual_id] + [repr(v) for v in r.counterfactual])
