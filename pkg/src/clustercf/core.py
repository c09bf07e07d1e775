"""Shared types and numeric primitives for cluster counterfactual search.

Vectors are 1-D float64 numpy arrays. All solver math runs in the model's
internal feature space: the standardized space when the model carries
standardization parameters, the raw feature space otherwise. Densities are
evaluated in log space throughout so that high-dimensional models (64
features and beyond) do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)

# Result statuses shared by every solver.
STATUS_OK = "ok"
STATUS_DEGENERATE_IDENTITY = "degenerate_identity"
STATUS_NO_FEASIBLE_SOLUTION = "no_feasible_solution"
STATUS_NO_ROOT_FOUND = "no_root_found"

FULL = "full"
DIAGONAL = "diagonal"
SPHERICAL = "spherical"
COVARIANCE_KINDS = (FULL, DIAGONAL, SPHERICAL)

KMEANS = "kmeans"
GAUSSIAN = "gaussian"
MODEL_KINDS = (KMEANS, GAUSSIAN)

# Two cluster centers closer than this (squared) are considered identical.
MIN_CENTER_SEPARATION_SQ = 1e-20
PRIOR_SUM_TOL = 1e-9


class ClusterCfError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(ClusterCfError):
    pass


class ValidationError(ClusterCfError):
    """Invalid model, request or file content; `path` names the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def as_vector(values, *, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array (read-only)."""
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(name, "must be a non-empty 1-D array of reals")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(name, "contains NaN or infinite entries")
    return _readonly(arr)


def check_same_dim(a: np.ndarray, b: np.ndarray, what: str = "vectors") -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(
            f"{what} have mismatched dimensions {a.shape[-1]} and {b.shape[-1]}"
        )


# ---------------------------------------------------------------------------
# Covariances and Gaussian components


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Covariance of one cluster: full matrix, per-feature variances, or a
    single shared variance."""

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ValidationError("covariance.kind", f"unknown kind {self.kind!r}")
        arr = np.array(self.data, dtype=np.float64, copy=True)
        object.__setattr__(self, "data", _readonly(arr))

    @staticmethod
    def full(matrix) -> "CovarianceSpec":
        return CovarianceSpec(FULL, np.asarray(matrix, dtype=np.float64))

    @staticmethod
    def diagonal(variances) -> "CovarianceSpec":
        return CovarianceSpec(DIAGONAL, np.asarray(variances, dtype=np.float64))

    @staticmethod
    def spherical(variance: float) -> "CovarianceSpec":
        return CovarianceSpec(SPHERICAL, np.asarray(float(variance), dtype=np.float64))

    def validate(self, d: int, path: str = "covariance") -> None:
        a = self.data
        if not np.all(np.isfinite(a)):
            raise ValidationError(path, "contains NaN or infinite entries")
        if self.kind == FULL:
            if a.shape != (d, d):
                raise ValidationError(path, f"expected a {d}x{d} matrix, got shape {a.shape}")
            scale = 1.0 + float(np.max(np.abs(a)))
            if float(np.max(np.abs(a - a.T))) > 1e-12 * scale:
                raise ValidationError(path, "matrix is not symmetric")
            try:
                np.linalg.cholesky((a + a.T) / 2.0)
            except np.linalg.LinAlgError:
                raise ValidationError(path, "matrix is not positive definite") from None
        elif self.kind == DIAGONAL:
            if a.shape != (d,):
                raise ValidationError(path, f"expected {d} variances, got shape {a.shape}")
            if not np.all(a > 0.0):
                raise ValidationError(path, "variances must all be positive")
        else:
            if a.shape != ():
                raise ValidationError(path, "spherical variance must be a scalar")
            if not float(a) > 0.0:
                raise ValidationError(path, "variance must be positive")

    def variances(self, d: int) -> np.ndarray:
        """Per-feature variance vector; full matrices have no such view."""
        if self.kind == DIAGONAL:
            return self.data
        if self.kind == SPHERICAL:
            return np.full(d, float(self.data))
        raise ValueError("full covariance has no per-feature variance vector")

    def matrix(self, d: int) -> np.ndarray:
        if self.kind == FULL:
            return self.data
        return np.diag(self.variances(d))


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One Gaussian cluster with cached log-determinant and precision."""

    mean: np.ndarray
    covariance: CovarianceSpec
    prior: float
    log_det: float = field(init=False)
    _chol: "np.ndarray | None" = field(init=False, repr=False)
    _precision: "np.ndarray | None" = field(init=False, repr=False)

    def __post_init__(self):
        mean = as_vector(self.mean, name="mean")
        object.__setattr__(self, "mean", mean)
        prior = float(self.prior)
        if not math.isfinite(prior) or not (0.0 < prior <= 1.0):
            raise ValidationError("prior", f"must lie in (0, 1], got {self.prior!r}")
        object.__setattr__(self, "prior", prior)
        d = mean.size
        self.covariance.validate(d)
        if self.covariance.kind == FULL:
            sym = (self.covariance.data + self.covariance.data.T) / 2.0
            chol = np.linalg.cholesky(sym)
            log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
            inv_chol = np.linalg.solve(chol, np.eye(d))
            precision = inv_chol.T @ inv_chol
            precision = _readonly((precision + precision.T) / 2.0)
            object.__setattr__(self, "_chol", _readonly(chol))
            object.__setattr__(self, "_precision", precision)
        else:
            variances = self.covariance.variances(d)
            log_det = float(np.sum(np.log(variances)))
            object.__setattr__(self, "_chol", None)
            object.__setattr__(self, "_precision", None)
        object.__setattr__(self, "log_det", log_det)

    @property
    def d(self) -> int:
        return self.mean.size

    def precision_matrix(self) -> np.ndarray:
        """Inverse covariance as a dense d x d matrix."""
        if self._precision is not None:
            return self._precision
        return np.diag(1.0 / self.covariance.variances(self.d))


def mahalanobis_sq(component: GaussianComponent, x: np.ndarray) -> float:
    """(x - m)' S^-1 (x - m) for one vector."""
    diff = np.asarray(x, dtype=np.float64) - component.mean
    if component.covariance.kind == FULL:
        a = np.linalg.solve(component._chol, diff)
        return float(a @ a)
    var = component.covariance.variances(component.d)
    return float(np.sum(diff * diff / var))


def _mahalanobis_sq_rows(component: GaussianComponent, rows: np.ndarray) -> np.ndarray:
    diff = rows - component.mean
    if component.covariance.kind == FULL:
        a = np.linalg.solve(component._chol, diff.T)
        return np.sum(a * a, axis=0)
    var = component.covariance.variances(component.d)
    return np.sum(diff * diff / var, axis=1)


def log_density(component: GaussianComponent, x: np.ndarray) -> float:
    """Gaussian log density at x. Diagonal and spherical covariances use
    exact component-wise sums, full covariances a Cholesky solve."""
    x = np.asarray(x, dtype=np.float64)
    check_same_dim(component.mean, x)
    quad = mahalanobis_sq(component, x)
    return -0.5 * (quad + component.log_det + component.d * LOG_2PI)


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True, eq=False)
class Standardization:
    """Per-feature z-score parameters applied once at ingestion."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean, name="standardization.mean")
        std = as_vector(self.std, name="standardization.std")
        check_same_dim(mean, std, "standardization vectors")
        if not np.all(std > 0.0):
            raise ValidationError("standardization.std", "must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_internal(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def to_original(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """A fitted clustering: centroid list (kmeans) or Gaussian components."""

    kind: str
    centers: "np.ndarray | None" = None
    components: "tuple[GaussianComponent, ...]" = ()
    standardization: "Standardization | None" = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValidationError("kind", f"unknown model kind {self.kind!r}")
        if self.kind == KMEANS:
            if self.centers is None:
                raise ValidationError("centers", "kmeans model requires centers")
            arr = np.array(self.centers, dtype=np.float64, copy=True)
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
                raise ValidationError("centers", "expected an M x d matrix with M >= 1")
            if not np.all(np.isfinite(arr)):
                raise ValidationError("centers", "contains NaN or infinite entries")
            object.__setattr__(self, "centers", _readonly(arr))
            object.__setattr__(self, "components", ())
        else:
            comps = tuple(self.components)
            if not comps:
                raise ValidationError("components", "gaussian model requires components")
            d = comps[0].d
            for i, c in enumerate(comps):
                if c.d != d:
                    raise ValidationError(f"components[{i}].mean", "dimension mismatch")
            total = sum(c.prior for c in comps)
            if abs(total - 1.0) > PRIOR_SUM_TOL:
                raise ValidationError("components[*].prior", f"priors sum to {total!r}, expected 1")
            object.__setattr__(self, "components", comps)
            object.__setattr__(self, "centers", None)
        means = self.means()
        for i in range(means.shape[0]):
            for j in range(i + 1, means.shape[0]):
                gap = float(np.sum((means[i] - means[j]) ** 2))
                if gap <= MIN_CENTER_SEPARATION_SQ:
                    raise ValidationError(
                        "centers" if self.kind == KMEANS else "components",
                        f"clusters {i} and {j} have identical centers",
                    )
        if self.standardization is not None:
            check_same_dim(self.standardization.mean, means[0], "standardization")

    @property
    def d(self) -> int:
        if self.kind == KMEANS:
            return self.centers.shape[1]
        return self.components[0].d

    @property
    def n_clusters(self) -> int:
        if self.kind == KMEANS:
            return self.centers.shape[0]
        return len(self.components)

    def means(self) -> np.ndarray:
        if self.kind == KMEANS:
            return self.centers
        return np.stack([c.mean for c in self.components])

    def to_internal(self, x: np.ndarray) -> np.ndarray:
        if self.standardization is None:
            return np.asarray(x, dtype=np.float64)
        return self.standardization.to_internal(x)

    def to_original(self, x: np.ndarray) -> np.ndarray:
        if self.standardization is None:
            return np.asarray(x, dtype=np.float64)
        return self.standardization.to_original(x)


def score_matrix(model: ClusterModel, rows: np.ndarray) -> np.ndarray:
    """Assignment scores for each row and cluster, higher is better.

    Gaussian models score log(prior * density); kmeans models score the
    negated squared distance to each center. Both reduce cluster
    assignment to an argmax.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != model.d:
        raise DimensionMismatchError(
            f"rows have dimension {rows.shape[1]}, model expects {model.d}"
        )
    if model.kind == KMEANS:
        diff = rows[:, None, :] - model.centers[None, :, :]
        return -np.sum(diff * diff, axis=2)
    out = np.empty((rows.shape[0], model.n_clusters))
    for k, comp in enumerate(model.components):
        quad = _mahalanobis_sq_rows(comp, rows)
        out[:, k] = math.log(comp.prior) - 0.5 * (quad + comp.log_det + comp.d * LOG_2PI)
    return out


def assign_cluster(model: ClusterModel, x: np.ndarray) -> int:
    """Cluster of x under the assignment rule; exact ties go to the lowest id."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("x", "expected a single vector")
    if not np.all(np.isfinite(x)):
        raise ValidationError("x", "contains NaN or infinite entries")
    scores = score_matrix(model, x[None, :])[0]
    return int(np.argmax(scores))


def distance_sq(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_dim(a, b)
    diff = a - b
    return float(diff @ diff)


def preference(a: np.ndarray, b: np.ndarray) -> float:
    """exp(-squared distance): 1 at identity, decreasing with distance."""
    return math.exp(-distance_sq(a, b))


# ---------------------------------------------------------------------------
# Requests and results


@dataclass(frozen=True, eq=False)
class Mask:
    """Actionability mask: True entries may change, False entries are frozen."""

    bits: np.ndarray
    free: np.ndarray = field(init=False, repr=False)
    fixed: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool, copy=True)
        if bits.ndim != 1 or bits.size == 0:
            raise ValidationError("mask", "must be a non-empty 1-D boolean array")
        object.__setattr__(self, "bits", _readonly(bits))
        object.__setattr__(self, "free", _readonly(np.flatnonzero(bits)))
        object.__setattr__(self, "fixed", _readonly(np.flatnonzero(~bits)))

    @staticmethod
    def all_free(d: int) -> "Mask":
        return Mask(np.ones(d, dtype=bool))

    @staticmethod
    def from_bits(bits: Iterable[int]) -> "Mask":
        return Mask(np.asarray(list(bits), dtype=bool))

    @staticmethod
    def from_string(text: str) -> "Mask":
        parts = [p.strip() for p in text.split(",") if p.strip() != ""]
        if not parts or any(p not in ("0", "1") for p in parts):
            raise ValidationError("mask", f"expected comma-separated 0/1 bits, got {text!r}")
        return Mask(np.asarray([p == "1" for p in parts], dtype=bool))

    @property
    def d(self) -> int:
        return self.bits.size

    @property
    def n_free(self) -> int:
        return self.free.size


@dataclass(frozen=True, eq=False)
class CfRequest:
    """One counterfactual query: factual in original units, target cluster,
    actionability mask and plausibility factor."""

    factual: np.ndarray
    target: int
    source: "int | None" = None
    mask: "Mask | None" = None
    epsilon: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "factual", as_vector(self.factual, name="factual"))
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps < 0.0:
            raise ValidationError("epsilon", f"must be finite and >= 0, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "target", int(self.target))
        if self.source is not None:
            object.__setattr__(self, "source", int(self.source))

    def resolved_mask(self, d: int) -> Mask:
        if self.mask is None:
            return Mask.all_free(d)
        if self.mask.d != d:
            raise ValidationError("mask", f"length {self.mask.d} does not match dimension {d}")
        return self.mask

    def validate_against(self, model: ClusterModel) -> None:
        if self.factual.size != model.d:
            raise DimensionMismatchError(
                f"factual has dimension {self.factual.size}, model expects {model.d}"
            )
        m = model.n_clusters
        if not (0 <= self.target < m):
            raise ValidationError("target", f"cluster id {self.target} out of range [0, {m})")
        if self.source is not None and not (0 <= self.source < m):
            raise ValidationError("source", f"cluster id {self.source} out of range [0, {m})")
        if self.source is not None and self.source == self.target:
            raise ValidationError("target", "source and target clusters must differ")
        self.resolved_mask(model.d)


@dataclass(frozen=True, eq=False)
class CfResult:
    """Outcome of one counterfactual solve.

    `counterfactual` lives in the space the solver ran in (the model's
    internal space); `counterfactual_original` is the same point mapped
    back to original units, with frozen features copied bit-exact from the
    factual. `lam` is the scalar multiplier for Gaussian solves and None
    for the closed-form centroid case.
    """

    status: str
    counterfactual: "np.ndarray | None"
    distance_sq: "float | None"
    lam: "float | None" = None
    residual: "float | None" = None
    roots_found: int = 0
    elapsed: float = 0.0
    source: "int | None" = None
    target: "int | None" = None
    strict_member: "bool | None" = None
    tolerant_member: "bool | None" = None
    counterfactual_original: "np.ndarray | None" = None
    diagnostics: "dict | None" = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @property
    def solved(self) -> bool:
        return self.status in (STATUS_OK, STATUS_DEGENERATE_IDENTITY)
