import numpy as np
import pytest

from funglm.function_space import GridFunction
from funglm.gp import (
    GPModel,
    default_truncation,
    max_norm_tail_check,
    max_quad_tail_check,
    sample_cov_moment_report,
    sample_covariance,
    sample_mean,
    sample_paths,
)


def test_default_truncation():
    assert default_truncation(256) == 128
    assert default_truncation(1024) == 200


def test_power_law_eigenvalues():
    m = GPModel.power_law(2.0, 2.0)
    assert m.J_max == 128
    np.testing.assert_allclose(m.theta[:3], [2.0, 0.5, 2.0 / 9])


def test_spacing_condition_needs_large_enough_R():
    # theta_1 - theta_2 = R(1 - 2^-alpha) must exceed alpha / R, so R >= sqrt(8/3) at alpha = 2
    m = GPModel.power_law(2.0, 2.0)
    np.testing.assert_allclose(m.min_R(), np.sqrt(8.0 / 3.0), rtol=1e-12)
    with pytest.raises(ValueError, match="increase R"):
        GPModel.power_law(2.0, 1.0)
    assert GPModel.power_law(2.0, 1.0, check=False).class_violations()


def test_grid_too_coarse():
    with pytest.raises(ValueError, match="grid too coarse"):
        GPModel.power_law(2.0, 2.0, T=64, J_max=40)


def test_kernel_matrix_reproduces_eigenpairs():
    m = GPModel.power_law(2.0, 2.0, T=64)
    K = m.kernel_matrix() / 64
    for j in range(3):
        phi = m.basis.matrix[j]
        np.testing.assert_allclose(K @ phi, m.theta[j] * phi, atol=1e-12)
    np.testing.assert_allclose(np.trace(K), m.trace(), rtol=1e-12)


def test_scores_are_scaled_normals():
    m = GPModel.power_law(2.0, 2.0, T=64)
    s = sample_paths(m, 10, np.random.default_rng(0))
    np.testing.assert_allclose(s.scores, s.eta * np.sqrt(m.theta), atol=1e-12)


def test_sample_mean_and_covariance_converge():
    mu = GridFunction.constant(GPModel.power_law(2.0, 2.0, T=32).grid, 0.3)
    base = GPModel.power_law(2.0, 2.0, T=32)
    m = GPModel(base.grid, mu, base.theta, base.basis, 2.0, 2.0)
    s = sample_paths(m, 20000, np.random.default_rng(1))
    np.testing.assert_allclose(sample_mean(s).values, 0.3, atol=0.05)
    err = np.linalg.norm(sample_covariance(s) - m.kernel_matrix(), 2) / 32
    assert err < 0.1


def test_sample_covariance_small_exact():
    # direct (n-1)-denominator formula for two curves on a two-point grid
    m = GPModel.power_law(2.0, 2.0, T=2, J_max=1)
    from funglm.gp import SampleSet

    s = SampleSet(m.grid, np.array([[1.0, 2.0], [3.0, 6.0]]))
    np.testing.assert_allclose(sample_covariance(s), [[2.0, 4.0], [4.0, 8.0]])


def test_empirical_kl_variance():
    m = GPModel.power_law(2.0, 2.0, T=64)
    s = sample_paths(m, 40000, np.random.default_rng(2))
    var = s.scores[:, :4].var(axis=0, ddof=1)
    se = m.theta[:4] * np.sqrt(2.0 / 40000)
    assert np.all(np.abs(var - m.theta[:4]) < 4 * se)


def test_quad_tail_check_deterministic_weights():
    # with tau = 0 the maximum is zero and never crosses the threshold
    chk = max_quad_tail_check(np.zeros(3), 10, 0.0, 50, np.random.default_rng(0))
    assert chk.empirical_prob == 0.0
    with pytest.raises(ValueError):
        max_quad_tail_check(-np.ones(3), 10, 0.0, 5, np.random.default_rng(0))


def test_quad_tail_threshold():
    tau = np.array([1.0, 0.5])
    chk = max_quad_tail_check(tau, 20, 1.0, 10, np.random.default_rng(0))
    np.testing.assert_allclose(chk.threshold, 4 * 1.5 * (np.log(20) + 1.0))
    np.testing.assert_allclose(chk.bound, 2 * np.exp(-1.0))


@pytest.mark.slow
def test_quad_tail_bound_holds_for_single_chi_square():
    # one weight: P(max of n chi^2_1 > 4 (log n + x)) is far below 2 e^-x
    chk = max_quad_tail_check(np.array([1.0]), 100, 0.0, 2000, np.random.default_rng(4))
    assert chk.empirical_prob <= chk.bound


def test_max_norm_tail_check():
    m = GPModel.power_law(2.0, 2.0, T=64)
    chk = max_norm_tail_check(m, 50, 1.0, 200, np.random.default_rng(5))
    assert chk.empirical_prob <= chk.bound + 3 * chk.stderr


@pytest.mark.slow
def test_sample_cov_moments_match_exact_values():
    rep = sample_cov_moment_report(20, 40000, np.random.default_rng(6))
    for key, est in rep.items():
        assert abs(est.mean - est.reference) < 4.5 * est.stderr, key


def test_sample_cov_reference_values():
    rep = sample_cov_moment_report(11, 10, np.random.default_rng(0))
    assert rep["sjj_dev2"].reference == pytest.approx(0.2)
    assert rep["sjk2"].reference == pytest.approx(0.1)
    assert rep["sjk2_slk2"].reference == pytest.approx(12 / 1000)
    assert rep["sjk4"].reference == pytest.approx(36 / 1000)
