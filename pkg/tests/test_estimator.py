import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funglm.estimator import (
    ModelTruth,
    TxxnReport,
    estimate_known,
    estimate_unknown,
    minimax_rate,
    schedule,
    simulate_dataset,
    tv_hellinger_chain,
    txxn_diagnostics,
    zeta_window,
)
from funglm.expfam import builtin_family, hellinger_report
from funglm.gp import sample_covariance, sample_paths
from funglm.spectral import delta_norm, eigendecompose


@pytest.fixture(scope="module")
def poisson_truth():
    return ModelTruth.power_law(builtin_family("poisson"), T=64, J_max=32)


def test_schedule_examples():
    assert schedule(4096, 2.0, 3.0, 0.155) == (3, 4)
    assert schedule(1, 2.0, 3.0) == (1, 2)
    np.testing.assert_allclose(zeta_window(2.0, 3.0), (1 / 7, 1 / 6))
    with pytest.raises(ValueError, match="zeta"):
        schedule(1000, 2.0, 3.0, 0.2)
    with pytest.raises(ValueError):
        schedule(1000, 2.0, 2.0)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 10**6), k=st.integers(1, 100))
def test_schedule_monotone(n, k):
    m1, N1 = schedule(n, 2.0, 3.0)
    m2, N2 = schedule(n + k, 2.0, 3.0)
    assert m1 <= m2 and N1 <= N2
    assert 1 <= m1 < N1


def test_minimax_rate():
    np.testing.assert_allclose(minimax_rate(4096, 2.0, 3.0), 2.0**-7.5, rtol=1e-14)


def test_truth_validation():
    fam = builtin_family("gaussian")
    with pytest.raises(ValueError, match="beta must exceed"):
        ModelTruth.power_law(fam, beta=2.4, T=64, J_max=32)
    with pytest.raises(ValueError, match="exceeds R"):
        ModelTruth.power_law(fam, a=3.0, T=64, J_max=32)
    tr = ModelTruth.power_law(fam, T=64, J_max=32)
    b = tr.b.copy()
    b[1] *= 1.5
    with pytest.raises(ValueError, match="b_2"):
        ModelTruth(0.0, b, tr.gp, fam, 2.0, 3.0, 2.0)


def test_alternating_and_mean(poisson_truth):
    tr = ModelTruth.power_law(builtin_family("poisson"), T=64, J_max=32, alternating=True, mu_coef=0.5)
    np.testing.assert_allclose(tr.b[:3], [2.0, -0.25, 2.0 / 27])
    # <mu, beta> = 0.5 b_2
    np.testing.assert_allclose(tr.b0, 0.5 * tr.b[1], rtol=1e-12)
    assert poisson_truth.b0 == 0.0


def test_zero_slope_gives_zero_lambda(poisson_truth):
    tr = ModelTruth(0.0, np.zeros(32), poisson_truth.gp, poisson_truth.family, 2.0, 3.0, 2.0)
    data = simulate_dataset(tr, 50, np.random.default_rng(0))
    np.testing.assert_array_equal(data.lam, 0.0)


def test_lambda_variance(poisson_truth):
    data = simulate_dataset(poisson_truth, 20000, np.random.default_rng(1))
    var = np.sum(poisson_truth.gp.theta * poisson_truth.b**2)
    assert abs(data.lam.var(ddof=1) - var) < 4 * var * np.sqrt(2 / 20000)
    # lambda agrees with the Karhunen-Loeve scores
    np.testing.assert_allclose(data.lam, data.sample.scores @ poisson_truth.b, atol=1e-10)


@pytest.mark.parametrize("family", ["gaussian", "poisson", "bernoulli"])
def test_ise_splits_into_coefficient_error_and_tail(family):
    tr = ModelTruth.power_law(builtin_family(family), T=64, J_max=32)
    data = simulate_dataset(tr, 400, np.random.default_rng(2))
    res = estimate_known(data, tr, 2, 4)
    assert res.fit.converged
    np.testing.assert_allclose(res.ise, res.diagnostics["coef_sq_error"] + res.tail_sq, rtol=1e-10)
    np.testing.assert_allclose(res.tail_sq, np.sum(tr.b[2:] ** 2))


def test_gaussian_known_is_least_squares():
    tr = ModelTruth.power_law(builtin_family("gaussian"), T=64, J_max=32)
    data = simulate_dataset(tr, 300, np.random.default_rng(3))
    res = estimate_known(data, tr, 3, 3)
    Z = tr.gp.basis.coefficients(data.sample.paths)[:, :3]
    X = np.column_stack([np.ones(300), Z])
    ls, *_ = np.linalg.lstsq(X, data.y, rcond=None)
    np.testing.assert_allclose(res.coefs, ls[1:], rtol=1e-8)
    np.testing.assert_allclose(res.beta_hat.values, ls[1:] @ tr.gp.basis.matrix[:3], atol=1e-10)


def test_options_are_checked(poisson_truth):
    data = simulate_dataset(poisson_truth, 100, np.random.default_rng(4))
    with pytest.raises(ValueError, match="unknown fit options"):
        estimate_known(data, poisson_truth, 1, 2, options={"tolerance": 1e-6})
    with pytest.raises(ValueError):
        estimate_known(data, poisson_truth, 3, 2)


def test_unknown_is_sign_invariant(poisson_truth):
    data = simulate_dataset(poisson_truth, 500, np.random.default_rng(5))
    fam = poisson_truth.family
    dec = eigendecompose(sample_covariance(data.sample), data.sample.grid)
    a = estimate_unknown(data, 2, 4, fam, truth=poisson_truth, decomp=dec)
    b = estimate_unknown(data, 2, 4, fam, truth=poisson_truth, decomp=dec.flipped([-1, 1, -1, -1]))
    np.testing.assert_allclose(a.beta_hat.values, b.beta_hat.values, atol=1e-9)
    np.testing.assert_allclose(a.ise, b.ise, rtol=1e-8)
    np.testing.assert_allclose(a.coefs * [-1, 1], b.coefs, atol=1e-9)


def test_unknown_score_gram(poisson_truth):
    data = simulate_dataset(poisson_truth, 300, np.random.default_rng(6))
    res = estimate_unknown(data, 2, 4, poisson_truth.family, truth=poisson_truth)
    assert res.diagnostics["score_gram_error"] < 1e-8
    # centered scores have zero mean, so the intercept is a plain GLM intercept
    np.testing.assert_allclose(res.design.xi[:, 1:].mean(axis=0), 0.0, atol=1e-12)


def test_unknown_close_to_known(poisson_truth):
    data = simulate_dataset(poisson_truth, 4000, np.random.default_rng(7))
    k = estimate_known(data, poisson_truth, 2, 4)
    u = estimate_unknown(data, 2, 4, poisson_truth.family, truth=poisson_truth)
    assert abs(k.ise - u.ise) < 0.05
    assert u.ise < 0.05


def test_unknown_rank_error(poisson_truth):
    data = simulate_dataset(poisson_truth, 5, np.random.default_rng(8))
    with pytest.raises(ValueError, match="rank"):
        estimate_unknown(data, 1, 6, poisson_truth.family)


def test_tv_chain_zero_tail(poisson_truth):
    b = poisson_truth.b.copy()
    b[4:] = 0.0
    tr = ModelTruth(0.0, b, poisson_truth.gp, poisson_truth.family, 2.0, 3.0, 2.0)
    data = simulate_dataset(tr, 100, np.random.default_rng(9))
    assert tuple(tv_hellinger_chain(tr, data.sample, 4)) == (0.0, 0.0)


@pytest.mark.parametrize("family", ["gaussian", "poisson", "bernoulli"])
def test_tv_chain_bounds_exact_hellinger(family):
    tr = ModelTruth.power_law(builtin_family(family), T=64, J_max=32)
    data = simulate_dataset(tr, 200, np.random.default_rng(10))
    chain = tv_hellinger_chain(tr, data.sample, 3)
    z = data.sample.scores
    lamN = z[:, :3] @ tr.b[:3]
    exact = hellinger_report(tr.family, lamN, data.lam - lamN).h2_exact.sum()
    assert 0 < exact <= chain.h2_sum
    np.testing.assert_allclose(chain.tv_bound, np.sqrt(chain.h2_sum))


def test_txxn_fields(poisson_truth):
    data = simulate_dataset(poisson_truth, 300, np.random.default_rng(11))
    rep = txxn_diagnostics(data, poisson_truth, 2, 4)
    assert set(rep.row()) == {"delta_norm", "max_z_sq", "zbar_norm", "proj_m", "proj_N", "max_eta_tilde", "sign_gap"}
    np.testing.assert_allclose(rep.max_z_sq, np.max(np.sum(data.sample.paths**2, axis=1)) / 64)
    assert all(v >= 0 for v in rep)


@pytest.mark.slow
def test_txxn_quantities_shrink(poisson_truth):
    med = {}
    for n in (500, 4000):
        rng = np.random.default_rng([12, n])
        reps = [txxn_diagnostics(simulate_dataset(poisson_truth, n, rng), poisson_truth, 2, 4) for _ in range(20)]
        med[n] = {k: np.median([r.row()[k] for r in reps]) for k in ("delta_norm", "zbar_norm", "proj_m", "proj_N")}
    for k in med[500]:
        assert med[4000][k] < med[500][k], k
    # ||Kt - K|| and ||Xbar - mu|| are root-n quantities
    np.testing.assert_allclose(med[4000]["delta_norm"] / med[500]["delta_norm"], np.sqrt(1 / 8), rtol=0.3)
    np.testing.assert_allclose(med[4000]["zbar_norm"] / med[500]["zbar_norm"], np.sqrt(1 / 8), rtol=0.3)


@pytest.fixture(scope="module")
def gaussian_truth():
    return ModelTruth.power_law(builtin_family("gaussian"))


def test_gaussian_response_mean(gaussian_truth):
    data = simulate_dataset(gaussian_truth, 20, np.random.default_rng(13))
    rng = np.random.default_rng(14)
    ys = np.array([gaussian_truth.family.sample(data.lam, rng) for _ in range(4000)])
    assert np.all(np.abs(ys.mean(axis=0) - data.lam) < 4 / np.sqrt(4000))


@pytest.mark.slow
def test_tv_bound_small_at_4096(gaussian_truth):
    rng = np.random.default_rng(15)
    _, N = schedule(4096, 2.0, 3.0)
    tv = [tv_hellinger_chain(gaussian_truth, simulate_dataset(gaussian_truth, 4096, rng).sample, N).tv_bound for _ in range(50)]
    assert np.mean(np.array(tv) < 0.5) >= 0.9


@pytest.mark.slow
def test_tv_bound_decreases_when_n_doubles(gaussian_truth):
    # the schedule raises N from 3 to 4 between these sizes; with N fixed the bound grows like sqrt(n)
    med = []
    for n in (1024, 2048):
        rng = np.random.default_rng([16, n])
        N = schedule(n, 2.0, 3.0)[1]
        med.append(np.median([tv_hellinger_chain(gaussian_truth, simulate_dataset(gaussian_truth, n, rng).sample, N).tv_bound for _ in range(50)]))
    assert med[1] < med[0]


@pytest.mark.slow
def test_zero_slope_estimates_shrink(gaussian_truth):
    g = gaussian_truth
    zero = ModelTruth(0.0, np.zeros(g.gp.J_max), g.gp, g.family, 2.0, 3.0, 2.0)
    ise, coef = [], []
    for n in (500, 4000):
        rng = np.random.default_rng([17, n])
        m, N = schedule(n, 2.0, 3.0)
        ise.append(np.median([estimate_known(simulate_dataset(zero, n, rng), zero, m, N).ise for _ in range(30)]))
        coef.append(np.median([np.abs(estimate_unknown(simulate_dataset(zero, n, rng), m, N, g.family).coefs).max() for _ in range(30)]))
    assert ise[1] < ise[0]
    assert coef[1] < coef[0]


@pytest.mark.slow
def test_operator_error_halves_when_n_doubles(gaussian_truth):
    gp = gaussian_truth.gp
    K = gp.kernel_matrix()
    med = []
    for n in (1000, 2000):
        rng = np.random.default_rng([18, n])
        med.append(np.median([delta_norm(K, sample_covariance(sample_paths(gp, n, rng)), gp.grid).delta ** 2 for _ in range(200)]))
    np.testing.assert_allclose(med[1] / med[0], 0.5, rtol=0.3)


@pytest.mark.slow
def test_txxn_trends():
    tr = ModelTruth.power_law(builtin_family("poisson"))
    med = {}
    # 2000 and 8000 share (m, N) = (3, 4), so the design dimension is fixed
    for n in (500, 2000, 8000):
        rng = np.random.default_rng([19, n])
        m, N = schedule(n, 2.0, 3.0)
        reps = [txxn_diagnostics(simulate_dataset(tr, n, rng), tr, m, N) for _ in range(30)]
        med[n] = {k: np.median([r.row()[k] for r in reps]) for k in TxxnReport._fields}
    z_log = [med[n]["max_z_sq"] / np.log(n) for n in med]
    assert max(z_log) < 2 * min(z_log)
    proj = [med[n]["proj_m"] / minimax_rate(n, 2.0, 3.0) for n in med]
    assert proj[0] > proj[1] > proj[2]
    assert med[8000]["sign_gap"] < med[2000]["sign_gap"]
