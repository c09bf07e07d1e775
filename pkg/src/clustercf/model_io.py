"""Versioned model files (JSON) and dataset / baseline ingestion (CSV).

Model files are written in a canonical form: sorted keys, two-space
indent, shortest round-trip float formatting. Saving a freshly loaded
model therefore reproduces the file byte for byte. Parsing re-derives all
caches and re-validates every model invariant; violations raise
ValidationError with the path of the offending field.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Any

import numpy as np

from .core import (
    COVARIANCE_KINDS,
    DIAGONAL,
    FULL,
    GAUSSIAN,
    KMEANS,
    SPHERICAL,
    ClusterCfError,
    ClusterModel,
    CovarianceSpec,
    GaussianComponent,
    Standardization,
    ValidationError,
)
from .fit import Dataset

SCHEMA_VERSION = 1


class DataError(ClusterCfError):
    pass


def _reject_constant(token: str):
    raise ValidationError("$", f"non-finite JSON number {token!r} is not allowed")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# Model serialization


def _cov_to_dict(cov: CovarianceSpec, d: int) -> dict:
    if cov.kind == FULL:
        return {"kind": FULL, "matrix": cov.data.tolist()}
    if cov.kind == DIAGONAL:
        return {"kind": DIAGONAL, "variances": cov.data.tolist()}
    return {"kind": SPHERICAL, "variance": float(cov.data)}


def model_to_dict(model: ClusterModel, provenance: "dict | None" = None) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "kind": model.kind,
        "d": model.d,
        "n_clusters": model.n_clusters,
        "provenance": provenance if provenance is not None else {},
    }
    if model.kind == KMEANS:
        out["centers"] = model.centers.tolist()
    else:
        out["components"] = [
            {
                "mean": c.mean.tolist(),
                "covariance": _cov_to_dict(c.covariance, model.d),
                "prior": c.prior,
            }
            for c in model.components
        ]
    if model.standardization is None:
        out["standardization"] = None
    else:
        out["standardization"] = {
            "mean": model.standardization.mean.tolist(),
            "std": model.standardization.std.tolist(),
        }
    return out


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ValidationError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _no_extras(obj: dict, allowed, path: str):
    extras = sorted(set(obj) - set(allowed))
    if extras:
        raise ValidationError(path or "$", f"unknown fields {extras}")


def _float_list(values, path: str, length: "int | None" = None) -> list:
    if not isinstance(values, list) or not values:
        raise ValidationError(path, "expected a non-empty array of numbers")
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError(f"{path}[{i}]", f"expected a finite number, got {v!r}")
        out.append(float(v))
    if length is not None and len(out) != length:
        raise ValidationError(path, f"expected length {length}, got {len(out)}")
    return out


def _parse_covariance(obj, d: int, path: str) -> CovarianceSpec:
    if not isinstance(obj, dict):
        raise ValidationError(path, "expected an object")
    kind = _require(obj, "kind", path)
    if kind not in COVARIANCE_KINDS:
        raise ValidationError(f"{path}.kind", f"unknown covariance kind {kind!r}")
    try:
        if kind == FULL:
            _no_extras(obj, ("kind", "matrix"), path)
            rows = _require(obj, "matrix", path)
            if not isinstance(rows, list) or len(rows) != d:
                raise ValidationError(f"{path}.matrix", f"expected {d} rows")
            matrix = [_float_list(r, f"{path}.matrix[{i}]", d) for i, r in enumerate(rows)]
            cov = CovarianceSpec.full(matrix)
        elif kind == DIAGONAL:
            _no_extras(obj, ("kind", "variances"), path)
            cov = CovarianceSpec.diagonal(_float_list(_require(obj, "variances", path), f"{path}.variances", d))
        else:
            _no_extras(obj, ("kind", "variance"), path)
            v = _require(obj, "variance", path)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(f"{path}.variance", "expected a finite number")
            cov = CovarianceSpec.spherical(float(v))
        cov.validate(d, path)
        return cov
    except ValidationError:
        raise
    except ClusterCfError as exc:
        raise ValidationError(path, str(exc)) from exc


def model_from_dict(obj: Any) -> "tuple[ClusterModel, dict]":
    """Parse and validate a model document; returns (model, provenance)."""
    if not isinstance(obj, dict):
        raise ValidationError("$", "model document must be a JSON object")
    _no_extras(
        obj,
        ("schema_version", "kind", "d", "n_clusters", "centers", "components",
         "standardization", "provenance"),
        "$",
    )
    version = _require(obj, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"unsupported version {version!r}")
    kind = _require(obj, "kind", "")
    if kind not in (KMEANS, GAUSSIAN):
        raise ValidationError("kind", f"unknown model kind {kind!r}")
    d = _require(obj, "d", "")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ValidationError("d", "must be a positive integer")
    m = _require(obj, "n_clusters", "")
    if not isinstance(m, int) or isinstance(m, bool) or m < 2:
        raise ValidationError("n_clusters", "must be an integer >= 2")

    standardization = None
    std_obj = obj.get("standardization")
    if std_obj is not None:
        if not isinstance(std_obj, dict):
            raise ValidationError("standardization", "expected an object or null")
        _no_extras(std_obj, ("mean", "std"), "standardization")
        try:
            standardization = Standardization(
                mean=_float_list(_require(std_obj, "mean", "standardization"), "standardization.mean", d),
                std=_float_list(_require(std_obj, "std", "standardization"), "standardization.std", d),
            )
        except ValidationError:
            raise
        except ClusterCfError as exc:
            raise ValidationError("standardization", str(exc)) from exc

    provenance = obj.get("provenance", {})
    if not isinstance(provenance, dict):
        raise ValidationError("provenance", "expected an object")

    try:
        if kind == KMEANS:
            rows = _require(obj, "centers", "")
            if not isinstance(rows, list) or len(rows) != m:
                raise ValidationError("centers", f"expected {m} rows")
            centers = [_float_list(r, f"centers[{i}]", d) for i, r in enumerate(rows)]
            model = ClusterModel(kind=KMEANS, centers=centers, standardization=standardization)
        else:
            comp_objs = _require(obj, "components", "")
            if not isinstance(comp_objs, list) or len(comp_objs) != m:
                raise ValidationError("components", f"expected {m} components")
            total = 0.0
            comps = []
            for i, co in enumerate(comp_objs):
                path = f"components[{i}]"
                if not isinstance(co, dict):
                    raise ValidationError(path, "expected an object")
                _no_extras(co, ("mean", "covariance", "prior"), path)
                mean = _float_list(_require(co, "mean", path), f"{path}.mean", d)
                cov = _parse_covariance(_require(co, "covariance", path), d, f"{path}.covariance")
                prior = _require(co, "prior", path)
                if isinstance(prior, bool) or not isinstance(prior, (int, float)):
                    raise ValidationError(f"{path}.prior", "expected a number")
                total += float(prior)
                try:
                    comps.append(GaussianComponent(mean=mean, covariance=cov, prior=float(prior)))
                except ValidationError as exc:
                    raise ValidationError(f"{path}.{exc.path}", exc.message) from exc
            if abs(total - 1.0) > 1e-9:
                raise ValidationError("components[*].prior", f"priors sum to {total!r}, expected 1")
            model = ClusterModel(
                kind=GAUSSIAN, components=tuple(comps), standardization=standardization
            )
    except ValidationError:
        raise
    except ClusterCfError as exc:
        raise ValidationError("$", str(exc)) from exc
    return model, provenance


def save_model(model: ClusterModel, path, provenance: "dict | None" = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(model_to_dict(model, provenance)))


def load_model(path) -> ClusterModel:
    model, _ = load_model_with_provenance(path)
    return model


def load_model_with_provenance(path) -> "tuple[ClusterModel, dict]":
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(obj)


# ---------------------------------------------------------------------------
# Dataset CSV


def _parse_cell(token: str, row: int, col: int) -> float:
    text = token.strip()
    if text == "":
        raise DataError(f"empty cell at row {row}, column {col}")
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric cell {token!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite cell {token!r} at row {row}, column {col}")
    return value


def _looks_numeric(cells) -> bool:
    # Non-finite tokens still count as numeric here so that a NaN in the
    # first row is reported as a bad cell, not mistaken for a header.
    for cell in cells:
        text = cell.strip()
        if text == "":
            return False
        try:
            float(text)
        except ValueError:
            return False
    return True


def load_dataset(path, label_column: "str | None" = None) -> Dataset:
    """CSV rows of finite doubles with an optional header line.

    A header is assumed whenever the first line has any non-numeric cell.
    `label_column` names a header column to drop from the features and
    keep as string metadata; rows are 1-based in error messages.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            raw = [row for row in csv.reader(fh)]
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    raw = [row for row in raw if any(cell.strip() != "" for cell in row)]
    if not raw:
        raise DataError(f"dataset {path} is empty")

    header = None
    if not _looks_numeric(raw[0]):
        header = [cell.strip() for cell in raw[0]]
        raw = raw[1:]
        if not raw:
            raise DataError(f"dataset {path} has a header but no data rows")

    label_idx = None
    if label_column is not None:
        if header is None:
            raise DataError("label column requested but the file has no header")
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not found in header {header}")
        label_idx = header.index(label_column)

    width = len(raw[0])
    labels = [] if label_idx is not None else None
    rows = []
    for r, cells in enumerate(raw, start=1):
        if len(cells) != width:
            raise DataError(f"ragged row {r}: expected {width} cells, got {len(cells)}")
        values = []
        for c, cell in enumerate(cells, start=1):
            if label_idx is not None and c - 1 == label_idx:
                labels.append(cell.strip())
                continue
            values.append(_parse_cell(cell, r, c))
        rows.append(values)

    feature_names = None
    if header is not None:
        feature_names = tuple(n for i, n in enumerate(header) if i != label_idx)
    try:
        return Dataset(
            rows=np.asarray(rows, dtype=np.float64),
            feature_names=feature_names,
            labels=tuple(labels) if labels is not None else None,
        )
    except ValidationError as exc:
        raise DataError(f"dataset {path}: {exc}") from exc
