import math

import numpy as np
import pytest

import clustercf as cf
from oracles import (
    loop_distance_sq,
    make_blobs,
    naive_assignment,
    naive_log_density,
    random_spd,
)


def test_distance_sq_three_four_five():
    assert cf.distance_sq([0.0, 0.0], [3.0, 4.0]) == 25.0


def test_distance_sq_identity_is_zero():
    x = np.asarray([1.5, -2.25, 7.0])
    assert cf.distance_sq(x, x) == 0.0


def test_distance_sq_matches_loop_oracle():
    rng = np.random.default_rng(11)
    a = rng.normal(size=16)
    b = rng.normal(size=16)
    assert cf.distance_sq(a, b) == pytest.approx(loop_distance_sq(a, b), rel=1e-14)


def test_distance_sq_dimension_mismatch():
    with pytest.raises(cf.DimensionMismatchError):
        cf.distance_sq([1.0, 2.0], [1.0, 2.0, 3.0])


def test_preference_identity_is_one():
    assert cf.preference([1.0, 2.0], [1.0, 2.0]) == 1.0


def test_preference_unit_step():
    assert cf.preference([0.0, 0.0], [1.0, 0.0]) == pytest.approx(math.exp(-1.0))


def test_preference_monotone_in_distance():
    rng = np.random.default_rng(3)
    for _ in range(25):
        a, b, c = rng.normal(size=(3, 4))
        if cf.distance_sq(a, b) < cf.distance_sq(a, c):
            assert cf.preference(a, b) > cf.preference(a, c)


def test_log_density_standard_normal_mode():
    comp = cf.GaussianComponent(
        mean=[0.0, 0.0], covariance=cf.CovarianceSpec.full(np.eye(2)), prior=1.0
    )
    assert cf.log_density(comp, [0.0, 0.0]) == pytest.approx(-math.log(2 * math.pi), abs=1e-14)


def test_log_density_spherical_one_sigma_point():
    comp = cf.GaussianComponent(
        mean=[0.0], covariance=cf.CovarianceSpec.spherical(4.0), prior=1.0
    )
    expected = -0.5 * (1.0 + math.log(4.0) + math.log(2 * math.pi))
    assert cf.log_density(comp, [2.0]) == pytest.approx(expected, abs=1e-14)


def test_log_density_full_matches_reference_formula():
    rng = np.random.default_rng(5)
    cov = random_spd(rng, 3)
    mean = rng.normal(size=3)
    comp = cf.GaussianComponent(mean=mean, covariance=cf.CovarianceSpec.full(cov), prior=1.0)
    for _ in range(10):
        x = rng.normal(size=3)
        assert cf.log_density(comp, x) == pytest.approx(
            naive_log_density(mean, cov, x), rel=1e-12
        )


def test_log_density_diagonal_agrees_with_full_representation():
    rng = np.random.default_rng(6)
    var = rng.uniform(0.5, 3.0, size=4)
    mean = rng.normal(size=4)
    diag_comp = cf.GaussianComponent(
        mean=mean, covariance=cf.CovarianceSpec.diagonal(var), prior=1.0
    )
    full_comp = cf.GaussianComponent(
        mean=mean, covariance=cf.CovarianceSpec.full(np.diag(var)), prior=1.0
    )
    x = rng.normal(size=4)
    assert cf.log_density(diag_comp, x) == pytest.approx(cf.log_density(full_comp, x), rel=1e-12)


# ---------------------------------------------------------------------------
# Assignment rule


def test_assign_kmeans_closer_center():
    model = cf.ClusterModel(kind=cf.KMEANS, centers=[[0.0, 0.0], [2.0, 0.0]])
    assert cf.assign_cluster(model, [0.4, 1.0]) == 0


def test_assign_gaussian_symmetric_reduces_to_nearest_mean():
    comps = tuple(
        cf.GaussianComponent(mean=m, covariance=cf.CovarianceSpec.spherical(1.0), prior=0.5)
        for m in ([0.0, 0.0], [2.0, 0.0])
    )
    model = cf.ClusterModel(kind=cf.GAUSSIAN, components=comps)
    assert cf.assign_cluster(model, [1.5, 0.0]) == 1


def test_assign_ties_break_to_lowest_id():
    model = cf.ClusterModel(kind=cf.KMEANS, centers=[[0.0, 0.0], [2.0, 0.0]])
    assert cf.assign_cluster(model, [1.0, 5.0]) == 0


def test_assign_full_gmm_matches_direct_density_argmax():
    rng = np.random.default_rng(42)
    rows, _ = make_blobs(rng, [[0.0, 0.0], [4.0, 3.0]], sigma=0.9, n_per=120)
    model = cf.fit_gmm(
        cf.Dataset(rows=rows),
        cf.FitConfig(algorithm="gmm", covariance=cf.FULL, n_clusters=2, seed=1, standardize=False),
    )
    means = [c.mean for c in model.components]
    covs = [c.covariance.matrix(2) for c in model.components]
    priors = [c.prior for c in model.components]
    for x in rows[rng.choice(rows.shape[0], size=50, replace=False)]:
        assert cf.assign_cluster(model, x) == naive_assignment(means, covs, priors, x)


@pytest.mark.parametrize("d", [2, 5, 16])
def test_kmeans_rule_equals_unit_spherical_equal_prior_gaussian(d):
    rng = np.random.default_rng(100 + d)
    centers = rng.normal(scale=2.0, size=(3, d))
    km = cf.ClusterModel(kind=cf.KMEANS, centers=centers)
    gm = cf.ClusterModel(
        kind=cf.GAUSSIAN,
        components=tuple(
            cf.GaussianComponent(mean=c, covariance=cf.CovarianceSpec.spherical(1.0), prior=1 / 3)
            for c in centers
        ),
    )
    pts = rng.normal(scale=3.0, size=(1000, d))
    km_labels = np.argmax(cf.score_matrix(km, pts), axis=1)
    gm_labels = np.argmax(cf.score_matrix(gm, pts), axis=1)
    assert np.array_equal(km_labels, gm_labels)


def test_density_integrates_to_one_monte_carlo_2d():
    rng = np.random.default_rng(9)
    cov = random_spd(rng, 2)
    comp = cf.GaussianComponent(
        mean=[0.3, -0.2], covariance=cf.CovarianceSpec.full(cov), prior=1.0
    )
    sigma = math.sqrt(float(np.max(np.diag(cov))))
    half = 6.0 * sigma
    lo = comp.mean - half
    hi = comp.mean + half
    n = 200_000
    pts = rng.uniform(lo, hi, size=(n, 2))
    dens = np.exp([cf.log_density(comp, p) for p in pts])
    volume = float(np.prod(hi - lo))
    integral = volume * float(dens.mean())
    assert abs(integral - 1.0) < 0.05


# ---------------------------------------------------------------------------
# Construction validation


def test_rejects_non_positive_definite_full():
    with pytest.raises(cf.ValidationError):
        cf.GaussianComponent(
            mean=[0.0, 0.0],
            covariance=cf.CovarianceSpec.full([[1.0, 2.0], [2.0, 1.0]]),
            prior=1.0,
        )


def test_rejects_asymmetric_full():
    with pytest.raises(cf.ValidationError):
        cf.GaussianComponent(
            mean=[0.0, 0.0],
            covariance=cf.CovarianceSpec.full([[1.0, 0.5], [0.1, 1.0]]),
            prior=1.0,
        )


@pytest.mark.parametrize(
    "cov",
    [cf.CovarianceSpec.diagonal([1.0, 0.0]), cf.CovarianceSpec.diagonal([1.0, -2.0]),
     cf.CovarianceSpec.spherical(0.0), cf.CovarianceSpec.spherical(-1.0)],
)
def test_rejects_non_positive_variances(cov):
    d = 2 if cov.kind == cf.DIAGONAL else 1
    with pytest.raises(cf.ValidationError):
        cf.GaussianComponent(mean=[0.0] * d, covariance=cov, prior=1.0)


@pytest.mark.parametrize("prior", [0.0, -0.5, 1.5, float("nan")])
def test_rejects_bad_priors(prior):
    with pytest.raises(cf.ValidationError):
        cf.GaussianComponent(
            mean=[0.0], covariance=cf.CovarianceSpec.spherical(1.0), prior=prior
        )


def test_model_rejects_prior_sum_off():
    comps = tuple(
        cf.GaussianComponent(mean=[float(i)], covariance=cf.CovarianceSpec.spherical(1.0), prior=0.45)
        for i in range(2)
    )
    with pytest.raises(cf.ValidationError, match="prior"):
        cf.ClusterModel(kind=cf.GAUSSIAN, components=comps)


def test_model_rejects_duplicate_centers():
    with pytest.raises(cf.ValidationError, match="identical"):
        cf.ClusterModel(kind=cf.KMEANS, centers=[[1.0, 2.0], [1.0, 2.0]])


def test_vector_rejects_nan_and_inf():
    with pytest.raises(cf.ValidationError):
        cf.CfRequest(factual=[1.0, float("nan")], target=1)
    with pytest.raises(cf.ValidationError):
        cf.CfRequest(factual=[1.0, float("inf")], target=1)


def test_component_caches_match_recomputation():
    rng = np.random.default_rng(13)
    cov = random_spd(rng, 4)
    comp = cf.GaussianComponent(
        mean=rng.normal(size=4), covariance=cf.CovarianceSpec.full(cov), prior=1.0
    )
    _, log_det = np.linalg.slogdet(cov)
    assert comp.log_det == pytest.approx(log_det, rel=1e-10)
    assert np.allclose(comp.precision_matrix(), np.linalg.inv(cov), rtol=1e-10, atol=1e-12)


# ---------------------------------------------------------------------------
# Masks and requests


def test_mask_from_string_and_index_sets():
    mask = cf.Mask.from_string("1,0,1,0")
    assert mask.d == 4 and mask.n_free == 2
    assert mask.free.tolist() == [0, 2]
    assert mask.fixed.tolist() == [1, 3]


def test_mask_rejects_garbage():
    with pytest.raises(cf.ValidationError):
        cf.Mask.from_string("1,2,0")


def test_request_rejects_negative_epsilon():
    with pytest.raises(cf.ValidationError):
        cf.CfRequest(factual=[0.0, 0.0], target=1, epsilon=-0.1)


def test_request_validate_against_model():
    model = cf.ClusterModel(kind=cf.KMEANS, centers=[[0.0, 0.0], [2.0, 0.0]])
    with pytest.raises(cf.DimensionMismatchError):
        cf.CfRequest(factual=[0.0, 0.0, 0.0], target=1).validate_against(model)
    with pytest.raises(cf.ValidationError):
        cf.CfRequest(factual=[0.0, 0.0], target=5).validate_against(model)
    with pytest.raises(cf.ValidationError):
        cf.CfRequest(factual=[0.0, 0.0], target=1, source=1).validate_against(model)
    with pytest.raises(cf.ValidationError):
        cf.CfRequest(factual=[0.0, 0.0], target=1, mask=cf.Mask.from_string("1")).validate_against(
            model
        )


def test_standardization_round_trip():
    std = cf.Standardization(mean=[1.0, -2.0], std=[2.0, 0.5])
    x = np.asarray([3.0, 4.0])
    assert np.allclose(std.to_original(std.to_internal(x)), x)
