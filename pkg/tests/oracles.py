"""Independent reference computations for the test suite.

Everything here deliberately avoids the production code paths: densities
use explicit inverses and slogdet, projections use least squares, and
level sets come from grid scans with sign-change interpolation.
"""

import math

import numpy as np


def loop_distance_sq(a, b):
    total = 0.0
    for ai, bi in zip(a, b):
        total += (ai - bi) ** 2
    return total


def naive_log_density(mean, cov_matrix, x):
    """Direct formula with an explicit matrix inverse and slogdet."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov_matrix, dtype=float)
    x = np.asarray(x, dtype=float)
    d = mean.size
    diff = x - mean
    inv = np.linalg.inv(cov)
    _, log_det = np.linalg.slogdet(cov)
    return -0.5 * (diff @ inv @ diff + log_det + d * math.log(2 * math.pi))


def naive_assignment(means, cov_matrices, priors, x):
    scores = [
        math.log(p) + naive_log_density(m, c, x)
        for m, c, p in zip(means, cov_matrices, priors)
    ]
    return int(np.argmax(scores))


# ---------------------------------------------------------------------------
# Hyperplane projection oracles


def project_onto_plane(point, v, c):
    """Exact projection of `point` onto {x : x . v = c}."""
    v = np.asarray(v, dtype=float)
    point = np.asarray(point, dtype=float)
    return point - ((point @ v - c) / (v @ v)) * v


def lstsq_plane_distance_sq(y_free, v_free, c_free):
    """Minimum-norm correction onto {z : z . v = c} via least squares."""
    a = np.asarray(v_free, dtype=float)[None, :]
    b = np.asarray([c_free - float(a[0] @ y_free)])
    delta, *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(delta @ delta), y_free + delta


def sampled_plane_min_distance_sq(y_free, v_free, c_free, rng, n=200, spread=5.0):
    """Upper bound on the optimum: random points projected exactly onto
    the plane."""
    f = y_free.size
    pts = y_free[None, :] + rng.normal(scale=spread, size=(n, f))
    best = math.inf
    for p in pts:
        proj = project_onto_plane(p, v_free, c_free)
        best = min(best, float(np.sum((proj - y_free) ** 2)))
    return best


# ---------------------------------------------------------------------------
# Gaussian pair residual and level-set scans (2-D)


def pair_residual_fn(m_s, cov_s, pi_s, m_t, cov_t, pi_t, epsilon):
    """Vectorized residual over point columns, built from explicit inverses."""
    inv_s = np.linalg.inv(cov_s)
    inv_t = np.linalg.inv(cov_t)
    _, lds = np.linalg.slogdet(cov_s)
    _, ldt = np.linalg.slogdet(cov_t)
    c_alpha = ldt - lds - 2.0 * (math.log(pi_t) - math.log(pi_s)) + 2.0 * math.log1p(epsilon)

    def res(points):
        pts = np.asarray(points, dtype=float)
        dt = pts - np.asarray(m_t)[:, None]
        ds = pts - np.asarray(m_s)[:, None]
        qt = np.einsum("in,in->n", dt, inv_t @ dt)
        qs = np.einsum("in,in->n", ds, inv_s @ ds)
        return qt - qs + c_alpha

    return res, c_alpha


def level_set_min_distance_2d(res, y, xs, ys):
    """Best squared distance from y to the interpolated zero level set of
    `res` on the xs x ys grid; also returns the number of crossing points."""
    nx, ny = xs.size, ys.size
    grid = np.empty((nx, ny))
    chunk = max(1, int(2_000_000 // ny))
    for i0 in range(0, nx, chunk):
        i1 = min(nx, i0 + chunk)
        xx = np.repeat(xs[i0:i1], ny)
        yy = np.tile(ys, i1 - i0)
        grid[i0:i1] = res(np.stack([xx, yy])).reshape(i1 - i0, ny)

    best = math.inf
    count = 0

    # Crossings along y (within a row).
    a = grid[:, :-1]
    b = grid[:, 1:]
    hmask = np.sign(a) * np.sign(b) < 0
    if hmask.any():
        ii, jj = np.nonzero(hmask)
        t = a[ii, jj] / (a[ii, jj] - b[ii, jj])
        px = xs[ii]
        py = ys[jj] + t * (ys[jj + 1] - ys[jj])
        d2 = (px - y[0]) ** 2 + (py - y[1]) ** 2
        best = min(best, float(d2.min()))
        count += ii.size

    # Crossings along x (between rows).
    a = grid[:-1, :]
    b = grid[1:, :]
    vmask = np.sign(a) * np.sign(b) < 0
    if vmask.any():
        ii, jj = np.nonzero(vmask)
        t = a[ii, jj] / (a[ii, jj] - b[ii, jj])
        px = xs[ii] + t * (xs[ii + 1] - xs[ii])
        py = ys[jj]
        d2 = (px - y[0]) ** 2 + (py - y[1]) ** 2
        best = min(best, float(d2.min()))
        count += ii.size

    exact = np.nonzero(grid == 0.0)
    if exact[0].size:
        d2 = (xs[exact[0]] - y[0]) ** 2 + (ys[exact[1]] - y[1]) ** 2
        best = min(best, float(d2.min()))
        count += exact[0].size
    return best, count


def line_level_set_min_distance(res, y, free_axis, pts):
    """1-D variant for a single actionable coordinate: scan the line through
    y along `free_axis`, interpolate sign changes."""
    n = pts.size
    coords = np.repeat(np.asarray(y, dtype=float)[:, None], n, axis=1)
    coords[free_axis] = pts
    vals = res(coords)
    best = math.inf
    count = 0
    sign = np.sign(vals)
    cross = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    for j in cross:
        t = vals[j] / (vals[j] - vals[j + 1])
        p = pts[j] + t * (pts[j + 1] - pts[j])
        best = min(best, (p - y[free_axis]) ** 2)
        count += 1
    for j in np.nonzero(vals == 0.0)[0]:
        best = min(best, (pts[j] - y[free_axis]) ** 2)
        count += 1
    return best, count


# ---------------------------------------------------------------------------
# Expanded single-parameter equation for full covariances (test-only path)


def expanded_full_lambda_equation(m_s, cov_s, pi_s, m_t, cov_t, pi_t, y, free, fixed, epsilon, lam):
    """The fully expanded scalar equation with its e, c_f, c_g, c_l constants,
    assembled from explicit inverses and block partitions."""
    inv_s = np.linalg.inv(cov_s)
    inv_t = np.linalg.inv(cov_t)
    _, lds = np.linalg.slogdet(cov_s)
    _, ldt = np.linalg.slogdet(cov_t)
    c_alpha = ldt - lds - 2.0 * (math.log(pi_t) - math.log(pi_s)) + 2.0 * math.log1p(epsilon)

    y = np.asarray(y, dtype=float)
    m_s = np.asarray(m_s, dtype=float)
    m_t = np.asarray(m_t, dtype=float)
    ps_ff = inv_s[np.ix_(free, free)]
    pt_ff = inv_t[np.ix_(free, free)]
    ms_f, mt_f = m_s[free], m_t[free]
    y_f = y[free]
    dmat = pt_ff - ps_ff

    d_vec = pt_ff @ mt_f - ps_ff @ ms_f
    c_g = 0.0
    c_l_parts = None
    if fixed.size:
        ps_fg = inv_s[np.ix_(free, fixed)]
        pt_fg = inv_t[np.ix_(free, fixed)]
        ps_gg = inv_s[np.ix_(fixed, fixed)]
        pt_gg = inv_t[np.ix_(fixed, fixed)]
        zg_mt = y[fixed] - m_t[fixed]
        zg_ms = y[fixed] - m_s[fixed]
        d_vec = d_vec - (pt_fg @ zg_mt - ps_fg @ zg_ms)
        c_g = float(zg_mt @ pt_gg @ zg_mt - zg_ms @ ps_gg @ zg_ms)
        c_l_parts = (pt_fg, zg_mt, ps_fg, zg_ms)

    bmat = np.eye(free.size) - lam * dmat
    yld = y_f - lam * d_vec
    z_f = np.linalg.solve(bmat, yld)

    e_vec = pt_ff @ mt_f - ps_ff @ ms_f
    c_f = float(mt_f @ pt_ff @ mt_f - ms_f @ ps_ff @ ms_f)
    c_l = 0.0
    if c_l_parts is not None:
        pt_fg, zg_mt, ps_fg, zg_ms = c_l_parts
        c_l = float(2.0 * (z_f - mt_f) @ pt_fg @ zg_mt - 2.0 * (z_f - ms_f) @ ps_fg @ zg_ms)

    term1 = float(yld @ np.linalg.solve(bmat, dmat @ np.linalg.solve(bmat, yld)))
    term2 = -2.0 * float(yld @ np.linalg.solve(bmat, e_vec))
    return term1 + term2 + c_f + c_l + c_g + c_alpha


# ---------------------------------------------------------------------------
# Data generation


def make_blobs(rng, centers, sigma, n_per):
    """Isotropic Gaussian blobs; returns (rows, true_labels)."""
    centers = np.asarray(centers, dtype=float)
    rows = []
    labels = []
    for k, c in enumerate(centers):
        rows.append(c + rng.normal(scale=sigma, size=(n_per, centers.shape[1])))
        labels.extend([k] * n_per)
    return np.vstack(rows), np.asarray(labels)


def random_spd(rng, d, base=0.5):
    a = rng.normal(size=(d, d))
    return a @ a.T / d + base * np.eye(d)
