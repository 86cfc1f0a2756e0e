import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from dalmc import targets
from conftest import fd_gradient, fd_jacobian, rel_err, remark_b6_mixture, target_zoo


# ---------------------------------------------------------------------------
# density


def test_standard_normal_density_at_zero():
    g = targets.Gaussian(0.0, 1.0)
    assert np.isclose(g.density(np.array([0.0])), 1.0 / math.sqrt(2 * math.pi))


def test_student_t_density_normalizer():
    t = targets.StudentT(0.0, 1.0, 4.0)
    # Gamma(2.5) / (Gamma(2) sqrt(4 pi)) = 3/8
    assert np.isclose(t.density(np.array([0.0])), 0.375, rtol=1e-12)
    total, err = quad(lambda x: t.density(np.array([x])), -np.inf, np.inf)
    assert abs(total - 1.0) < 1e-8


def test_smoothed_uniform_normalizes():
    su = targets.SmoothedUniformMixture(10.0)
    assert su.normalization_defect() < 1e-8


def test_dimension_mismatch_raises():
    g = targets.Gaussian([0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        g.density(np.zeros(3))


# ---------------------------------------------------------------------------
# score


def test_gaussian_score_value():
    g = targets.Gaussian(0.0, 1.0)
    assert np.isclose(g.score(np.array([2.0]))[0], -2.0)


def test_remark_b6_score_vanishes_at_shared_mean():
    mix = remark_b6_mixture()
    assert np.allclose(mix.score(np.array([1.0, 0.0])), 0.0, atol=1e-14)


def test_student_t_score_closed_form():
    t = targets.StudentT(0.0, 1.0, 4.0)
    x = np.array([1.0])
    assert np.isclose(t.score(x)[0], -1.0, rtol=1e-12)
    fd = fd_gradient(lambda y: t.log_density(y), x)
    assert rel_err(fd, t.score(x)) < 1e-6


def test_score_zero_density_raises():
    mix = targets.GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[[0.01]], [[0.01]]])
    with pytest.raises(ValueError):
        mix.score(np.array([1e200]))
    su = targets.SmoothedUniformMixture(10.0)
    with pytest.raises(ValueError):
        su.score(np.array([1e6]))


# ---------------------------------------------------------------------------
# hessian


def test_gaussian_hessian_value():
    g = targets.Gaussian([0.0], 4.0)
    assert np.isclose(g.hessian_log_density(np.array([1.3]))[0, 0], -0.25)


def test_student_t_hessian_at_center():
    t = targets.StudentT(0.0, 1.0, 4.0)
    assert np.isclose(t.hessian_log_density(np.array([0.0]))[0, 0], -1.25)
    fd = fd_jacobian(t.score, np.array([0.4]))
    assert rel_err(fd, t.hessian_log_density(np.array([0.4]))) < 1e-4


def test_remark_b6_hessian_closed_form():
    # At (x, 0) the posterior weights are constant and
    # -hess log pi = a P1 + b P2 - a b (x-1)^2 diag(0, 1),
    # a = 1/(1+sqrt2): the quadratic coefficient is a(1-a) = 3 sqrt2 - 4.
    mix = remark_b6_mixture()
    a = 1.0 / (1.0 + math.sqrt(2.0))
    b = 1.0 - a
    p1 = np.array([[2.0, 1.0], [1.0, 2.0]])
    p2 = np.array([[2.0, 0.0], [0.0, 3.0]])
    for xv in (3.0, 7.0, 20.0):
        expected = -(a * p1 + b * p2)
        expected[1, 1] += a * b * (xv - 1.0) ** 2
        h = mix.hessian_log_density(np.array([xv, 0.0]))
        assert np.allclose(h, expected, rtol=1e-10, atol=1e-10)


def test_remark_b6_quadratic_growth_coefficient():
    # Spectral norm of -hess grows like (x-1)^2 with slope a(1-a) = 3 sqrt2 - 4.
    mix = remark_b6_mixture()
    xs = np.linspace(5.0, 50.0, 46)
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    norms = np.linalg.norm(mix.hessian_log_density(pts), ord=2, axis=(1, 2))
    slope = np.polyfit((xs - 1.0) ** 2, norms, 1)[0]
    assert abs(slope / (3.0 * math.sqrt(2.0) - 4.0) - 1.0) < 0.05


# ---------------------------------------------------------------------------
# sampling


def test_gaussian_sample_mean_lln():
    g = targets.Gaussian(0.0, 1.0)
    x = g.sample(10 ** 5, 1)
    assert abs(x.mean()) < 4.0 / math.sqrt(10 ** 5)


def test_student_t_sample_second_moment():
    t = targets.StudentT(0.0, 1.0, 4.0)
    x = t.sample(10 ** 5, 2)
    m2 = float(np.mean(np.sum(x ** 2, axis=1)))
    assert abs(m2 / 2.0 - 1.0) < 0.10  # sigma^2 d alpha / (alpha - 2) = 2


def test_mixture_sample_symmetry():
    mix = targets.GaussianMixture([0.5, 0.5], [[-4.0], [4.0]], [[[1.0]], [[1.0]]])
    x = mix.sample(10 ** 5, 3)
    frac = float(np.mean(x[:, 0] > 0))
    assert abs(frac - 0.5) < 0.01


def test_sampling_is_deterministic_given_seed():
    for t in target_zoo().values():
        a = t.sample(64, 123)
        b = t.sample(64, 123)
        assert np.array_equal(a, b)


def test_sample_moments_within_five_standard_errors():
    for name, t in target_zoo().items():
        n = 10 ** 5
        x = t.sample(n, 11)
        mean_se = np.std(x, axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(x.mean(axis=0) - t.mean()) < 5 * mean_se + 1e-12), name
        sq = np.sum(x ** 2, axis=1)
        m2_se = sq.std(ddof=1) / math.sqrt(n)
        assert abs(sq.mean() - t.second_moment()) < 5 * m2_se, name


# ---------------------------------------------------------------------------
# finite-difference consistency across the zoo


@pytest.mark.parametrize("name", sorted(target_zoo().keys()))
def test_score_matches_fd_gradient(name):
    t = target_zoo()[name]
    pts = t.sample(200, 7)
    for x in pts:
        fd = fd_gradient(t.log_density, x)
        assert rel_err(fd, t.score(x)) < 1e-5, name


@pytest.mark.parametrize("name", sorted(target_zoo().keys()))
def test_hessian_matches_fd_jacobian_and_is_symmetric(name):
    t = target_zoo()[name]
    pts = t.sample(60, 8)
    for x in pts:
        h = t.hessian_log_density(x)
        assert np.allclose(h, h.T, atol=1e-12), name
        fd = fd_jacobian(t.score, x)
        assert rel_err(fd, h, floor=1e-6) < 1e-4, name


# ---------------------------------------------------------------------------
# mixture smoothness analysis


def test_equal_covariance_mixture_is_lipschitz():
    mix = targets.GaussianMixture(
        [0.4, 0.6], [[-1.5, 0.0], [1.5, 0.5]], [[[0.8, 0.2], [0.2, 0.6]]] * 2)
    report = targets.check_mixture_smoothness(mix)
    assert report.lipschitz_ok
    assert report.L_pi_method == "analytic"
    assert math.isfinite(report.L_pi) and report.L_pi > 0


def test_remark_b6_mixture_flagged():
    report = targets.check_mixture_smoothness(remark_b6_mixture())
    assert not report.lipschitz_ok
    assert any(p["pair"] == (0, 1) for p in report.failed_pairs)


def test_1d_different_variances_always_pass():
    mix = targets.GaussianMixture([0.3, 0.7], [[-1.0], [2.0]], [[[0.5]], [[2.0]]])
    report = targets.check_mixture_smoothness(mix)
    assert report.lipschitz_ok


def test_empirical_hessian_sup_below_reported_L_pi():
    for mix in (
        targets.GaussianMixture([0.3, 0.7], [[-1.0], [2.0]], [[[0.5]], [[2.0]]]),
        targets.GaussianMixture(
            [0.4, 0.6], [[-1.5, 0.0], [1.5, 0.5]], [[[0.8, 0.2], [0.2, 0.6]]] * 2),
    ):
        report = targets.check_mixture_smoothness(mix)
        assert report.lipschitz_ok
        pts = mix.sample(10 ** 4, 5)
        sup = np.linalg.norm(mix.hessian_log_density(pts), ord=2, axis=(1, 2)).max()
        assert sup <= report.L_pi + 1e-9


def test_1d_equal_variance_mixture_strongly_convex_outside_ball():
    mix = targets.GaussianMixture([0.5, 0.5], [[-4.0], [4.0]], [[[1.0]], [[1.0]]])
    report = targets.check_mixture_smoothness(mix)
    assert report.strongly_convex_outside_ball
    assert report.M_pi > 0 and math.isfinite(report.r)


def test_2d_equal_covariance_two_modes_not_strongly_convex():
    # Along directions orthogonal to the mean gap the posterior never
    # collapses, so the potential stays non-convex arbitrarily far out.
    mix = targets.GaussianMixture(
        [0.5, 0.5], [[-4.0, 0.0], [4.0, 0.0]], [np.eye(2)] * 2)
    report = targets.check_mixture_smoothness(mix)
    assert report.lipschitz_ok
    assert not report.strongly_convex_outside_ball


# ---------------------------------------------------------------------------
# constants and estimators


def test_lsi_constant_bound_values():
    assert targets.lsi_constant_bound(2.0, 0.0, 0.0) == 1.0
    assert np.isclose(targets.lsi_constant_bound(1.0, 1.0, 1.0), 2.0 * math.exp(16.0))
    assert targets.lsi_constant_bound(2.0, 3.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        targets.lsi_constant_bound(0.0, 1.0, 1.0)


def test_estimate_K_pi_gaussian():
    g = targets.Gaussian(0.0, 1.0)
    k, se = targets.estimate_K_pi(g, 200_000, seed=4)
    assert abs(k - math.sqrt(105.0)) < 4 * se + 0.3


def test_estimate_K_pi_student_t_quadrature_oracle():
    t = targets.StudentT(0.0, 1.0, 10.0)
    expected_sq, _ = quad(
        lambda x: t.score(np.array([x]))[0] ** 8 * t.density(np.array([x])),
        -np.inf, np.inf)
    k, se = targets.estimate_K_pi(t, 200_000, seed=5)
    assert abs(k - math.sqrt(expected_sq)) < 5 * se + 0.05 * math.sqrt(expected_sq)


def test_estimate_K_pi_requires_samples():
    with pytest.raises(ValueError):
        targets.estimate_K_pi(targets.Gaussian(0.0, 1.0), 0)
    with pytest.raises(ValueError):
        targets.SmoothedUniformMixture(10.0, smoothing_width=0.0)


def test_student_t_hessian_decay_envelope():
    t = targets.StudentT([0.5, -0.5], np.diag([1.0, 2.0]), 5.0)
    rng = np.random.default_rng(9)
    dirs = rng.standard_normal((64, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for radius in (3.0, 10.0, 40.0):
        pts = t.loc + radius * dirs
        env = targets.student_t_hessian_decay_envelope(t, pts)
        eig = np.linalg.eigvalsh(-t.hessian_log_density(pts))
        assert np.all(eig >= env[:, None, 0] - 1e-12)
        assert np.all(eig <= env[:, None, 1] + 1e-12)


# ---------------------------------------------------------------------------
# invariants via hypothesis


@st.composite
def small_mixtures(draw):
    m = draw(st.integers(min_value=1, max_value=3))
    d = draw(st.integers(min_value=1, max_value=2))
    raw_w = [draw(st.floats(0.1, 1.0)) for _ in range(m)]
    w = np.array(raw_w) / np.sum(raw_w)
    means = np.array(
        [[draw(st.floats(-3.0, 3.0)) for _ in range(d)] for _ in range(m)])
    var = np.array([draw(st.floats(0.3, 2.0)) for _ in range(m)])
    covs = var[:, None, None] * np.eye(d)
    return targets.GaussianMixture(w, means, covs)


@given(small_mixtures(), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=40, deadline=None)
def test_mixture_score_fd_property(mix, seed):
    x = mix.sample(1, seed)[0]
    fd = fd_gradient(mix.log_density, x)
    assert rel_err(fd, mix.score(x)) < 1e-5


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        targets.GaussianMixture([0.5, 0.4], [[-1.0], [1.0]], [[[1.0]], [[1.0]]])


def test_tiny_weight_component_dropped_with_warning():
    with pytest.warns(UserWarning):
        mix = targets.GaussianMixture(
            [1.0 - 1e-13, 1e-13], [[-1.0], [1.0]], [[[1.0]], [[1.0]]])
    assert mix.n_components == 1


def test_compact_plus_noise_radius_invariant():
    with pytest.raises(ValueError):
        targets.CompactPlusNoise(
            [0.5, 0.5], [[-10.0], [10.0]], targets.Gaussian(0.0, 1.0), R=1.0)
