"""Command line interface: fit models, explain factuals, sweep the
plausibility factor and run evaluation campaigns.

Exit codes: 0 success, 2 usage errors, 3 data errors, 4 fit failures,
5 solver failures. Every command prints a single JSON summary line to
standard output and writes its full results to files, so shell pipelines
can branch on the code and parse the line.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from .core import (
    CfRequest,
    CfResult,
    ClusterCfError,
    DimensionMismatchError,
    KMEANS,
    Mask,
    ValidationError,
)
from .evaluate import (
    EvalConfig,
    run_eval,
    sweep_epsilon,
    write_records_csv,
    write_report_json,
)
from .explain import AllTargetsFailedError, explain, explain_best
from .fit import FitConfig, FitError, fit
from .model_io import DataError, load_dataset, load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FIT = 4
EXIT_SOLVE = 5

_COV_ALIASES = {"full": "full", "diag": "diagonal", "diagonal": "diagonal", "spherical": "spherical"}


class UsageError(Exception):
    pass


def _parse_floats(text: str, what: str) -> list:
    try:
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise UsageError(f"could not parse {what} {text!r} as comma-separated numbers") from None


def _parse_mask(text: str, d: int) -> Mask:
    try:
        mask = Mask.from_string(text)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    if mask.d != d:
        raise UsageError(f"mask has {mask.d} bits but the model has {d} features")
    return mask


def _load_factual(args) -> np.ndarray:
    if args.factual is not None:
        return np.asarray(_parse_floats(args.factual, "--factual"), dtype=np.float64)
    row_text, data_path = args.factual_row
    try:
        row = int(row_text)
    except ValueError:
        raise UsageError(f"--factual-row index {row_text!r} is not an integer") from None
    data = load_dataset(data_path)
    if not (0 <= row < data.n):
        raise UsageError(f"--factual-row {row} out of range for {data.n} rows")
    return data.rows[row]


def _result_dict(result: CfResult, epsilon: float, mask: "Mask | None") -> dict:
    return {
        "status": result.status,
        "source": result.source,
        "target": result.target,
        "epsilon": epsilon,
        "mask": [int(b) for b in mask.bits] if mask is not None else None,
        "counterfactual": (
            None if result.counterfactual_original is None else result.counterfactual_original.tolist()
        ),
        "counterfactual_internal": (
            None if result.counterfactual is None else result.counterfactual.tolist()
        ),
        "distance_sq": result.distance_sq,
        "lambda": result.lam,
        "residual": result.residual,
        "roots_found": result.roots_found,
        "strict_member": result.strict_member,
        "tolerant_member": result.tolerant_member,
        "elapsed": result.elapsed,
        "diagnostics": result.diagnostics,
    }


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Commands


def cmd_fit(args) -> int:
    if args.k < 2:
        raise UsageError("--k must be at least 2 (counterfactuals need a cluster pair)")
    data = load_dataset(args.data, label_column=args.label_col)
    config = FitConfig(
        algorithm=args.algo,
        covariance=_COV_ALIASES[args.cov],
        n_clusters=args.k,
        max_iter=args.max_iter,
        rel_tol=args.rel_tol,
        seed=args.seed,
        restarts=args.restarts,
        standardize=not args.no_standardize,
    )
    model, info = fit(data, config)
    provenance = {
        "algorithm": config.algorithm,
        "covariance": config.covariance,
        "n_clusters": config.n_clusters,
        "seed": config.seed,
        "restarts": config.restarts,
        "standardize": config.standardize,
        "max_iter": config.max_iter,
        "rel_tol": config.rel_tol,
        "dataset": {
            "path": os.path.basename(str(args.data)),
            "sha256": _file_sha256(args.data),
            "rows": data.n,
            "features": data.d,
        },
    }
    save_model(model, args.output, provenance=provenance)
    objective_key = "inertia" if config.algorithm == KMEANS else "log_likelihood"
    print(
        json.dumps(
            {
                "command": "fit",
                "algorithm": config.algorithm,
                objective_key: info.objective,
                "iterations": info.iterations,
                "model": str(args.output),
            }
        )
    )
    return EXIT_OK


def cmd_explain(args) -> int:
    model = load_model(args.model)
    y = _load_factual(args)
    if y.size != model.d:
        raise UsageError(f"factual has {y.size} features but the model expects {model.d}")
    mask = _parse_mask(args.mask, model.d) if args.mask is not None else None

    if args.target == "best":
        try:
            result = explain_best(model, y, mask=mask, epsilon=args.epsilon, source=args.source)
        except AllTargetsFailedError as exc:
            out = {"status": "all_targets_failed", "statuses": exc.statuses}
            _write_json(args.output, out)
            print(json.dumps(out))
            return EXIT_SOLVE
        out = _result_dict(result, args.epsilon, mask)
        out["chosen_target"] = result.target
    else:
        try:
            target = int(args.target)
        except ValueError:
            raise UsageError(f"--target must be an integer or 'best', got {args.target!r}") from None
        try:
            request = CfRequest(
                factual=y, target=target, source=args.source, mask=mask, epsilon=args.epsilon
            )
            result = explain(model, request)
        except (ValidationError, DimensionMismatchError) as exc:
            raise UsageError(str(exc)) from None
        out = _result_dict(result, args.epsilon, mask)
    out["factual"] = y.tolist()
    _write_json(args.output, out)
    print(
        json.dumps(
            {
                "command": "explain",
                "status": out["status"],
                "target": out.get("chosen_target", out["target"]),
                "distance_sq": out["distance_sq"],
                "output": str(args.output),
            }
        )
    )
    return EXIT_OK if result.solved else EXIT_SOLVE


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    y = _load_factual(args)
    if y.size != model.d:
        raise UsageError(f"factual has {y.size} features but the model expects {model.d}")
    mask = _parse_mask(args.mask, model.d) if args.mask is not None else None
    epsilons = _parse_floats(args.epsilons, "--epsilons")
    try:
        points = sweep_epsilon(model, y, args.target, mask, epsilons, source=args.source)
    except (ValidationError, DimensionMismatchError) as exc:
        raise UsageError(str(exc)) from None

    results_path = f"{args.output}.results.json"
    deltas_path = f"{args.output}.deltas.csv"
    out = []
    for p in points:
        entry = _result_dict(p.result, p.epsilon, mask)
        entry["deltas"] = p.deltas
        out.append(entry)
    _write_json(results_path, {"factual": y.tolist(), "points": out})
    with open(deltas_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epsilon", "status", "distance_sq"] + [f"delta_{i}" for i in range(model.d)]
        )
        for p in points:
            deltas = p.deltas if p.deltas is not None else [""] * model.d
            writer.writerow(
                [repr(p.epsilon), p.result.status,
                 "" if p.result.distance_sq is None else repr(p.result.distance_sq)]
                + [d if d == "" else repr(d) for d in deltas]
            )
    n_solved = sum(1 for p in points if p.result.solved)
    print(
        json.dumps(
            {
                "command": "sweep",
                "points": len(points),
                "solved": n_solved,
                "results": results_path,
                "deltas": deltas_path,
            }
        )
    )
    return EXIT_OK if n_solved else EXIT_SOLVE


def cmd_eval(args) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data, label_column=args.label_col)
    mask = _parse_mask(args.mask, model.d) if args.mask is not None else None
    baselines = []
    for spec_text in args.baseline or []:
        name, sep, path = spec_text.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--baseline expects NAME=PATH, got {spec_text!r}")
        baselines.append((name, path))
    try:
        config = EvalConfig(
            source=args.source,
            target=args.target,
            n_factuals=args.n,
            seed=args.seed,
            epsilon=args.epsilon,
            mask=mask,
            external_baselines=tuple(baselines),
        )
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    report = run_eval(model, data, config)

    report_path = f"{args.output}.report.json"
    records_path = f"{args.output}.records.csv"
    write_report_json(report, report_path)
    write_records_csv(report, records_path)
    print(
        json.dumps(
            {
                "command": "eval",
                "n": report.n_evaluated,
                "success_strict": report.aggregates["success_strict"],
                "success_tolerant": report.aggregates["success_tolerant"],
                "report": report_path,
                "records": records_path,
            }
        )
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustercf",
        description="Minimum-distance counterfactual explanations for clustering models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a clustering model and write a model file")
    p_fit.add_argument("--algo", required=True, choices=("kmeans", "gmm"))
    p_fit.add_argument("--cov", default="full", choices=("full", "diag", "spherical"))
    p_fit.add_argument("--k", required=True, type=int, help="number of clusters")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--restarts", type=int, default=4)
    p_fit.add_argument("--max-iter", type=int, default=200)
    p_fit.add_argument("--rel-tol", type=float, default=1e-8)
    p_fit.add_argument("--no-standardize", action="store_true")
    p_fit.add_argument("--label-col", default=None)
    p_fit.add_argument("data", metavar="DATA")
    p_fit.add_argument("-o", "--output", required=True, metavar="MODEL")
    p_fit.set_defaults(handler=cmd_fit)

    p_explain = sub.add_parser("explain", help="compute one counterfactual")
    p_explain.add_argument("--model", required=True)
    group = p_explain.add_mutually_exclusive_group(required=True)
    group.add_argument("--factual-row", nargs=2, metavar=("ROW", "DATA"))
    group.add_argument("--factual", help="comma-separated feature values")
    p_explain.add_argument("--source", type=int, default=None)
    p_explain.add_argument("--target", required=True, help="target cluster id or 'best'")
    p_explain.add_argument("--mask", default=None, help="comma-separated 0/1 bits")
    p_explain.add_argument("--epsilon", type=float, default=1e-5)
    p_explain.add_argument("-o", "--output", required=True, metavar="OUT.json")
    p_explain.set_defaults(handler=cmd_explain)

    p_sweep = sub.add_parser("sweep", help="counterfactuals over a plausibility grid")
    p_sweep.add_argument("--model", required=True)
    group = p_sweep.add_mutually_exclusive_group(required=True)
    group.add_argument("--factual-row", nargs=2, metavar=("ROW", "DATA"))
    group.add_argument("--factual")
    p_sweep.add_argument("--source", type=int, default=None)
    p_sweep.add_argument("--target", required=True, type=int)
    p_sweep.add_argument("--epsilons", required=True, help="comma-separated ascending values")
    p_sweep.add_argument("--mask", default=None)
    p_sweep.add_argument("-o", "--output", required=True, metavar="PREFIX")
    p_sweep.set_defaults(handler=cmd_sweep)

    p_eval = sub.add_parser("eval", help="sample factuals and report distances/success/timing")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--n", type=int, default=50)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--source", required=True, type=int)
    p_eval.add_argument("--target", required=True, type=int)
    p_eval.add_argument("--epsilon", type=float, default=1e-5)
    p_eval.add_argument("--mask", default=None)
    p_eval.add_argument("--label-col", default=None)
    p_eval.add_argument("--baseline", action="append", metavar="NAME=PATH")
    p_eval.add_argument("data", metavar="DATA")
    p_eval.add_argument("-o", "--output", required=True, metavar="PREFIX")
    p_eval.set_defaults(handler=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return EXIT_OK
        return code if isinstance(code, int) else EXIT_USAGE
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (DataError, ValidationError, DimensionMismatchError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ClusterCfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
