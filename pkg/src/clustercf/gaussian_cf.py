"""Counterfactual generation for Gaussian cluster pairs.

For a source component (m_s, S_s, pi_s) and target component (m_t, S_t,
pi_t), a counterfactual z with plausibility factor eps must satisfy

    g(z) = (z - m_t)' St^-1 (z - m_t) - (z - m_s)' Ss^-1 (z - m_s) + c_a = 0
    c_a  = log|S_t| - log|S_s| - 2 log(pi_t / pi_s) + 2 log(1 + eps)

which states that the target's weighted density exceeds the source's by
the factor (1 + eps); eps = 0 is the assignment boundary of the pair.
Minimizing the squared distance to the factual y over the free
coordinates F subject to g(z) = 0 yields a one-parameter family of
stationary candidates

    z_F(lam) = (I - lam * D)^-1 (y_F - lam * b),     z_G = y_G,

where D is the difference of the free-block precisions and b collects
mean and fixed-block terms. In the eigenbasis of D both the map and the
constraint become component-wise,

    t_i(lam) = (u_i - lam * w_i) / (1 - lam * e_i),
    g(lam)   = sum_i e_i t_i^2 - 2 w_i t_i + C0,

so one g evaluation costs O(|F|). The solver samples g densely over the
real line (split at the poles lam = 1/e_i), brackets every sign change,
refines each bracket by bisection and returns the root whose
counterfactual lies closest to the factual.

Diagonal and spherical covariances feed the same scan with e, u, w taken
directly per coordinate (no eigendecomposition). When the two precisions
agree on the free block (D vanishes) the constraint is affine in z_F and
is solved by direct projection instead of a scan.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import (
    FULL,
    STATUS_DEGENERATE_IDENTITY,
    STATUS_NO_FEASIBLE_SOLUTION,
    STATUS_NO_ROOT_FOUND,
    STATUS_OK,
    CfResult,
    GaussianComponent,
    Mask,
    ValidationError,
    as_vector,
    check_same_dim,
    mahalanobis_sq,
)

UNIQUE = "unique"
INDETERMINATE = "indeterminate"

# Acceptance tolerance for a root, in the constraint's natural scale.
RESIDUAL_TOL_FACTOR = 1e-8
# Bisection refinement target (stricter than acceptance).
REFINE_TOL_FACTOR = 1e-10
REFINE_MAX_ITER = 200
# lam values closer than this (relative) to a pole are rejected.
POLE_EXCLUSION = 1e-12
# Below this magnitude an eigenvalue of D contributes no pole; if all
# eigenvalues are below it the constraint is treated as affine.
EIG_ZERO = 1e-12
# Eigenvalue / sign threshold for the uniqueness classification.
SIGN_ZERO = 1e-10
# Scan domain is [-cap, cap] with cap = CAP_FACTOR * (1 + max |pole|).
CAP_FACTOR = 1e6
GRID_UNIFORM = 256
GRID_GEOMETRIC = 128
# Root dedup and distance-tie tolerances.
ROOT_MERGE_TOL = 1e-9
DISTANCE_TIE_TOL = 1e-12


class PoleError(ValidationError):
    """lam is too close to a singularity of the stationarity map."""

    def __init__(self, lam: float, pole: float):
        super().__init__("lam", f"{lam!r} is within the exclusion radius of pole {pole!r}")
        self.lam = lam
        self.pole = pole


@dataclass(frozen=True, eq=False)
class LambdaRoot:
    """One refined root of g(lam) with its counterfactual candidate."""

    lam: float
    z: np.ndarray
    residual: float
    distance_sq: float


class GaussianPairProblem:
    """Precomputed source/target pair data for one factual, mask and eps.

    Instances are immutable after construction and safe to share across
    threads. The public surface is `source`, `target`, `y`, `mask`,
    `epsilon`, `c_alpha`, `poles`, `affine`, plus the `D_free()` and
    `lin_vector()` views of the free-block quadratic and linear terms.
    """

    def __init__(
        self,
        source: GaussianComponent,
        target: GaussianComponent,
        y,
        mask: Mask,
        epsilon: float,
    ):
        y = as_vector(y, name="y")
        check_same_dim(source.mean, target.mean, "component means")
        check_same_dim(source.mean, y, "factual")
        if mask.d != y.size:
            raise ValidationError("mask", f"length {mask.d} does not match dimension {y.size}")
        epsilon = float(epsilon)
        if not math.isfinite(epsilon) or epsilon < 0.0:
            raise ValidationError("epsilon", "must be finite and >= 0")

        self.source = source
        self.target = target
        self.y = y
        self.mask = mask
        self.epsilon = epsilon
        self.c_alpha = (
            target.log_det
            - source.log_det
            - 2.0 * (math.log(target.prior) - math.log(source.prior))
            + 2.0 * math.log1p(epsilon)
        )

        free = mask.free
        fixed = mask.fixed
        d = y.size
        self._componentwise = source.covariance.kind != FULL and target.covariance.kind != FULL

        if self._componentwise:
            var_s = source.covariance.variances(d)
            var_t = target.covariance.variances(d)
            self._inv_s_free = 1.0 / var_s[free]
            self._inv_t_free = 1.0 / var_t[free]
            self._num = (
                target.mean[free] * self._inv_t_free - source.mean[free] * self._inv_s_free
            )
            self._den = self._inv_t_free - self._inv_s_free
            self._basis = None
            scan_e = self._den
            scan_u = y[free].copy()
            scan_w = self._num
        else:
            p_s = source.precision_matrix()
            p_t = target.precision_matrix()
            dmat = p_t[np.ix_(free, free)] - p_s[np.ix_(free, free)]
            self._D = (dmat + dmat.T) / 2.0
            b = (
                p_t[np.ix_(free, free)] @ target.mean[free]
                - p_s[np.ix_(free, free)] @ source.mean[free]
            )
            if fixed.size:
                b = b - (
                    p_t[np.ix_(free, fixed)] @ (y[fixed] - target.mean[fixed])
                    - p_s[np.ix_(free, fixed)] @ (y[fixed] - source.mean[fixed])
                )
            self._num = b
            if free.size:
                evals, evecs = np.linalg.eigh(self._D)
            else:
                evals, evecs = np.empty(0), np.empty((0, 0))
            self._basis = evecs
            scan_e = evals
            scan_u = evecs.T @ y[free]
            scan_w = evecs.T @ b

        # Constraint in scan coordinates: g = sum(e t^2 - 2 w t) + c0 with
        # t(lam) = (u - lam w) / (1 - lam e); c0 anchors it at g(y).
        self._scan_e = scan_e
        self._scan_u = scan_u
        self._scan_w = scan_w
        self._scan_w2 = 2.0 * scan_w
        g_y = (
            mahalanobis_sq(target, y) - mahalanobis_sq(source, y) + self.c_alpha
        )
        self._scan_c0 = g_y - float(np.sum(scan_e * scan_u * scan_u - 2.0 * scan_w * scan_u))
        # Plain-float view of the coefficients for the scalar bisection path.
        self._scan_rows = list(
            zip(scan_u.tolist(), scan_w.tolist(), scan_e.tolist(), (2.0 * scan_w).tolist())
        )

        self.affine = free.size == 0 or float(np.max(np.abs(scan_e), initial=0.0)) <= EIG_ZERO
        self.poles = self._build_poles(scan_e)

    @staticmethod
    def _build_poles(coeffs: np.ndarray) -> tuple:
        live = coeffs[np.abs(coeffs) > EIG_ZERO]
        if live.size == 0:
            return ()
        cand = np.sort(1.0 / live)
        merged = [float(cand[0])]
        for p in cand[1:]:
            if p - merged[-1] > POLE_EXCLUSION * (1.0 + abs(p)):
                merged.append(float(p))
        return tuple(merged)

    @property
    def n_free(self) -> int:
        return self.mask.n_free

    def D_free(self) -> np.ndarray:
        """Free-block precision difference as a dense matrix."""
        if self._componentwise:
            return np.diag(self._den)
        return self._D

    def lin_vector(self) -> np.ndarray:
        """The linear term b of the stationarity map over free coordinates."""
        return np.asarray(self._num, dtype=np.float64).copy()

    # Batched internals used by the scan; lams is a 1-D array.

    def _t_batch(self, lams: np.ndarray) -> np.ndarray:
        num = self._scan_u[:, None] - lams[None, :] * self._scan_w[:, None]
        den = 1.0 - lams[None, :] * self._scan_e[:, None]
        return num / den

    def _z_free_batch(self, lams: np.ndarray) -> np.ndarray:
        t = self._t_batch(np.asarray(lams, dtype=np.float64))
        if self._basis is None:
            return t
        return self._basis @ t

    def _g_batch(self, lams: np.ndarray) -> np.ndarray:
        # Two reused work buffers instead of one temporary per operation;
        # the scan evaluates thousands of lams and allocation dominates
        # otherwise.
        row = lams[None, :]
        t = np.multiply(row, self._scan_w[:, None])
        np.subtract(self._scan_u[:, None], t, out=t)
        den = np.multiply(row, self._scan_e[:, None])
        np.subtract(1.0, den, out=den)
        np.divide(t, den, out=t)
        np.multiply(self._scan_e[:, None], t, out=den)
        np.subtract(den, self._scan_w2[:, None], out=den)
        np.multiply(den, t, out=den)
        return np.sum(den, axis=0) + self._scan_c0

    def _g_scalar(self, lam: float) -> float:
        total = self._scan_c0
        for u, w, e, w2 in self._scan_rows:
            t = (u - lam * w) / (1.0 - lam * e)
            total += t * (e * t - w2)
        return total

    def _embed(self, z_free: np.ndarray) -> np.ndarray:
        z = self.y.copy()
        z[self.mask.free] = z_free
        return z


def build_pair_problem(
    source: GaussianComponent,
    target: GaussianComponent,
    y,
    mask: Mask,
    epsilon: float,
) -> GaussianPairProblem:
    return GaussianPairProblem(source, target, y, mask, epsilon)


def constraint_residual(problem: GaussianPairProblem, z) -> float:
    """g(z): zero exactly on the eps-shifted pair boundary."""
    z = np.asarray(z, dtype=np.float64)
    check_same_dim(problem.y, z, "z")
    return (
        mahalanobis_sq(problem.target, z)
        - mahalanobis_sq(problem.source, z)
        + problem.c_alpha
    )


def z_of_lambda(problem: GaussianPairProblem, lam: float) -> np.ndarray:
    """Stationary candidate at multiplier lam; lam = 0 returns the factual."""
    lam = float(lam)
    for p in problem.poles:
        if abs(lam - p) <= POLE_EXCLUSION * (1.0 + abs(p)):
            raise PoleError(lam, p)
    zf = problem._z_free_batch(np.asarray([lam]))[:, 0]
    return problem._embed(zf)


def uniqueness_class(problem: GaussianPairProblem) -> str:
    """`unique` when the free-block precision difference is definite (or,
    component-wise, when all nonzero coefficients share one sign);
    `indeterminate` otherwise (one, multiple or no solutions possible)."""
    if problem._componentwise:
        vals = problem._inv_s_free - problem._inv_t_free
        live = vals[np.abs(vals) > SIGN_ZERO]
        if live.size == 0 or np.all(live > 0.0) or np.all(live < 0.0):
            return UNIQUE
        return INDETERMINATE
    evals = problem._scan_e
    if evals.size and (np.all(evals > SIGN_ZERO) or np.all(evals < -SIGN_ZERO)):
        return UNIQUE
    return INDETERMINATE


# ---------------------------------------------------------------------------
# Root scan


# Relative positions of the per-interval grid: a uniform sweep plus
# geometric clustering toward both ends (1e-12 of the width up to the
# midpoint), where g changes fastest. Precomputed sorted, so building one
# interval's grid is a single affine map.
_GEO_FRACTIONS = np.logspace(-12.0, math.log10(0.5), GRID_GEOMETRIC)
_GRID_FRACTIONS = np.unique(
    np.concatenate([np.linspace(0.0, 1.0, GRID_UNIFORM), _GEO_FRACTIONS, 1.0 - _GEO_FRACTIONS])
)


def _interval_grid(lo: float, hi: float) -> np.ndarray:
    pts = lo + (hi - lo) * _GRID_FRACTIONS
    if lo < 0.0 < hi:
        pts = np.insert(pts, int(np.searchsorted(pts, 0.0)), 0.0)
    return pts


def _bisect(problem, lo, hi, glo, refine_tol):
    """Scalar bisection on one bracket; stops at the |g| target or when the
    bracket collapses to floating-point resolution."""
    for _ in range(REFINE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = problem._g_scalar(mid)
        if abs(gm) <= refine_tol:
            return mid, gm
        if (gm > 0.0) == (glo > 0.0):
            lo, glo = mid, gm
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    return mid, problem._g_scalar(mid)


def _scan_roots(problem: GaussianPairProblem, refine_tol: float):
    """All bracketed roots of g over the pole-split domain, plus scan stats."""
    poles = problem.poles
    cap = CAP_FACTOR * (1.0 + max(abs(p) for p in poles))
    edges = [-cap] + list(poles) + [cap]

    grids = []
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        if i > 0:
            lo = lo + POLE_EXCLUSION * (1.0 + abs(lo))
        if i < len(edges) - 2:
            hi = hi - POLE_EXCLUSION * (1.0 + abs(hi))
        if lo < hi:
            grids.append(_interval_grid(lo, hi))

    roots = []
    n_brackets = 0
    g_first = None
    g_last = None
    # One evaluation call per interval keeps the work buffers cache-sized.
    for pts in grids:
        g = problem._g_batch(pts)
        finite = np.isfinite(g)
        pts, g = pts[finite], g[finite]
        if pts.size:
            if g_first is None:
                g_first = float(g[0])
            g_last = float(g[-1])
            for j in np.flatnonzero(g == 0.0):
                roots.append((float(pts[j]), 0.0))
            sign = np.sign(g)
            for j in np.flatnonzero(sign[:-1] * sign[1:] < 0.0):
                n_brackets += 1
                roots.append(
                    _bisect(problem, float(pts[j]), float(pts[j + 1]), float(g[j]), refine_tol)
                )

    diagnostics = {
        "brackets": n_brackets,
        "domain": [-cap, cap],
        "g_at_domain_ends": [g_first, g_last],
    }
    return roots, diagnostics


def _dedupe(roots):
    roots = sorted(roots)
    kept = []
    for lam, g in roots:
        if kept and abs(lam - kept[-1][0]) <= ROOT_MERGE_TOL * (1.0 + abs(lam)):
            if abs(g) < abs(kept[-1][1]):
                kept[-1] = (lam, g)
            continue
        kept.append((lam, g))
    return kept


def _solve_affine(problem: GaussianPairProblem, t0: int, g_ok_tol: float) -> CfResult:
    """Equal free-block precisions: the constraint is affine in z_F and the
    minimizer is a plain hyperplane projection, no multiplier scan."""
    y_free = problem.y[problem.mask.free]
    grad = -2.0 * problem._num
    g_y = constraint_residual(problem, problem.y)
    norm_sq = float(grad @ grad)
    if math.sqrt(norm_sq) <= 1e-12:
        status = STATUS_DEGENERATE_IDENTITY if abs(g_y) <= g_ok_tol else STATUS_NO_FEASIBLE_SOLUTION
        return CfResult(
            status=status,
            counterfactual=problem.y.copy() if status == STATUS_DEGENERATE_IDENTITY else None,
            distance_sq=0.0 if status == STATUS_DEGENERATE_IDENTITY else None,
            residual=g_y,
            elapsed=(time.perf_counter_ns() - t0) * 1e-9,
        )
    z_free = y_free.copy()
    g_val = g_y
    # One projection is exact for a truly affine constraint; the extra
    # passes absorb curvature below the EIG_ZERO detection threshold.
    for _ in range(3):
        z_free = z_free - (g_val / norm_sq) * grad
        g_val = constraint_residual(problem, problem._embed(z_free))
        if abs(g_val) <= REFINE_TOL_FACTOR * (1.0 + abs(problem.c_alpha)):
            break
    z = problem._embed(z_free)
    dz = z_free - y_free
    # Stationarity with a vanishing quadratic block reads dz = -lam * b,
    # and grad = -2 b, so lam recovers as 2 (dz . grad) / |grad|^2.
    lam = 2.0 * float(dz @ grad) / norm_sq
    if abs(g_val) > g_ok_tol:
        return CfResult(
            status=STATUS_NO_ROOT_FOUND,
            counterfactual=None,
            distance_sq=None,
            residual=g_val,
            elapsed=(time.perf_counter_ns() - t0) * 1e-9,
            diagnostics={"brackets": 0, "domain": None, "g_at_domain_ends": None},
        )
    return CfResult(
        status=STATUS_OK,
        counterfactual=z,
        distance_sq=float(dz @ dz),
        lam=lam,
        residual=g_val,
        roots_found=1,
        elapsed=(time.perf_counter_ns() - t0) * 1e-9,
    )


def solve_gaussian_cf(problem: GaussianPairProblem) -> CfResult:
    """Scan the multiplier axis, refine all sign changes and return the
    feasible stationary point nearest to the factual.

    Roots are accepted when |g| <= 1e-8 * (1 + |c_alpha|). Among accepted
    roots the minimum squared distance wins; distance ties within 1e-12
    go to the smaller |lam|. With no acceptable root the result carries
    scan diagnostics under `no_root_found`.
    """
    t0 = time.perf_counter_ns()
    if problem.n_free == 0:
        raise ValidationError("mask", "at least one actionable feature is required")
    g_ok_tol = RESIDUAL_TOL_FACTOR * (1.0 + abs(problem.c_alpha))
    if problem.affine:
        return _solve_affine(problem, t0, g_ok_tol)

    refine_tol = REFINE_TOL_FACTOR * (1.0 + abs(problem.c_alpha))
    raw_roots, diagnostics = _scan_roots(problem, refine_tol)
    accepted = _dedupe([(lam, g) for lam, g in raw_roots if abs(g) <= g_ok_tol])
    if accepted:
        # The scan refines a cheap algebraic transcription of g; confirm
        # candidates against the defining residual before reporting them.
        lams = np.asarray([lam for lam, _ in accepted])
        zf = problem._z_free_batch(lams)
        exact = np.asarray(
            [constraint_residual(problem, problem._embed(zf[:, i])) for i in range(lams.size)]
        )
        keep = np.abs(exact) <= g_ok_tol
        accepted = [(float(lams[i]), float(exact[i])) for i in np.flatnonzero(keep)]
        zf = zf[:, keep]

    if not accepted:
        return CfResult(
            status=STATUS_NO_ROOT_FOUND,
            counterfactual=None,
            distance_sq=None,
            residual=None,
            roots_found=0,
            elapsed=(time.perf_counter_ns() - t0) * 1e-9,
            diagnostics=diagnostics,
        )

    lams = np.asarray([lam for lam, _ in accepted])
    y_free = problem.y[problem.mask.free]
    dists = np.sum((zf - y_free[:, None]) ** 2, axis=0)
    best_dist = float(np.min(dists))
    tied = np.flatnonzero(dists <= best_dist + DISTANCE_TIE_TOL)
    pick = int(tied[np.argmin(np.abs(lams[tied]))])

    root = LambdaRoot(
        lam=float(lams[pick]),
        z=problem._embed(zf[:, pick]),
        residual=float(accepted[pick][1]),
        distance_sq=float(dists[pick]),
    )
    return CfResult(
        status=STATUS_OK,
        counterfactual=root.z,
        distance_sq=root.distance_sq,
        lam=root.lam,
        residual=root.residual,
        roots_found=len(accepted),
        elapsed=(time.perf_counter_ns() - t0) * 1e-9,
    )
