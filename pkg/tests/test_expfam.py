import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funglm.expfam import (
    FAMILY_NAMES,
    FamilyOverflowError,
    builtin_family,
    hellinger_quadrature,
    hellinger_report,
    sampler_moment_check,
    third_cumulant_ratio,
    variance_growth_constant,
)

# squared Hellinger distances from direct summation / integration of (sqrt p - sqrt q)^2
# at 30 significant digits (mpmath)
H2_ORACLE = [
    ("gaussian", 0.0, 1.0, 0.235006194830809194),
    ("poisson", 0.5, 0.7, 0.269561342240314343),
    ("bernoulli", -1.2, 2.5, 0.335605542674004913),
]


@pytest.mark.parametrize("name, lam, delta, expected", H2_ORACLE)
def test_hellinger_matches_direct_summation(name, lam, delta, expected):
    rep = hellinger_report(builtin_family(name), lam, delta)
    np.testing.assert_allclose(rep.h2_exact, expected, rtol=1e-13)


def test_gaussian_example_bounds():
    rep = hellinger_report(builtin_family("gaussian"), 0.0, 1.0)
    np.testing.assert_allclose(rep.h2_psi_bound, 0.25, rtol=1e-15)
    # delta^2 * psi2(0) * (1 + 1) * G(1) with psi2 = G = 1
    np.testing.assert_allclose(rep.h2_model_bound, 2.0, rtol=1e-15)


def test_psi_bound_values():
    np.testing.assert_allclose(
        hellinger_report(builtin_family("poisson"), 0.5, 0.7).h2_psi_bound, 0.289544489584693719, rtol=1e-13
    )
    np.testing.assert_allclose(
        hellinger_report(builtin_family("bernoulli"), -1.2, 2.5).h2_psi_bound, 0.367371625144450806, rtol=1e-13
    )


@pytest.mark.parametrize("lam, delta", [(0.0, 0.3), (-2.0, 1.5), (4.0, -2.5)])
def test_gaussian_quadrature_oracle(lam, delta):
    fam = builtin_family("gaussian")
    np.testing.assert_allclose(
        hellinger_report(fam, lam, delta).h2_exact, hellinger_quadrature(fam, lam, delta), rtol=1e-9, atol=1e-14
    )


def test_quadrature_oracle_rejects_discrete_families():
    with pytest.raises(NotImplementedError):
        hellinger_quadrature(builtin_family("poisson"), 0.0, 1.0)


def test_zero_shift_gives_zero():
    for name in FAMILY_NAMES:
        rep = hellinger_report(builtin_family(name), np.linspace(-5, 5, 11), 0.0)
        np.testing.assert_array_equal(rep.h2_exact, 0.0)
        np.testing.assert_array_equal(rep.h2_model_bound, 0.0)


@pytest.mark.parametrize("name", FAMILY_NAMES)
@settings(max_examples=200, deadline=None)
@given(lam=st.floats(-20, 20), delta=st.floats(-4, 4))
def test_hellinger_ordering_property(name, lam, delta):
    rep = hellinger_report(builtin_family(name), lam, delta)
    assert 0.0 <= rep.h2_exact <= 2.0
    assert rep.h2_exact <= rep.h2_psi_bound + 1e-12 * max(1.0, rep.h2_psi_bound)
    assert rep.h2_psi_bound <= rep.h2_model_bound * (1 + 1e-9) + 1e-12


@pytest.mark.parametrize("name", FAMILY_NAMES)
@settings(max_examples=100, deadline=None)
@given(lam=st.floats(-10, 10), delta=st.floats(-3, 3))
def test_hellinger_symmetric(name, lam, delta):
    fam = builtin_family(name)
    a = hellinger_report(fam, lam, delta).h2_exact
    b = hellinger_report(fam, lam + delta, -delta).h2_exact
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-15)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_third_cumulant_growth_holds(name):
    assert third_cumulant_ratio(builtin_family(name)) <= 1.0 + 1e-12


def test_third_cumulant_ratio_values():
    assert third_cumulant_ratio(builtin_family("gaussian")) == 0.0
    # psi3(lam + h) / (psi2(lam) e^|h|) = e^(h - |h|) <= 1, attained for h >= 0
    np.testing.assert_allclose(third_cumulant_ratio(builtin_family("poisson")), 1.0, rtol=1e-12)


def test_variance_growth_constants():
    assert variance_growth_constant(builtin_family("gaussian"), 0.1) == 1.0
    assert variance_growth_constant(builtin_family("bernoulli"), 0.1) == pytest.approx(0.25)
    # e^lam <= C e^(eps lam^2) is tightest at lam = 1/(2 eps) = 5 for eps = 0.1
    np.testing.assert_allclose(variance_growth_constant(builtin_family("poisson"), 0.1), np.exp(2.5), rtol=1e-12)


@pytest.mark.parametrize("name, lam", [("gaussian", 0.7), ("poisson", 1.3), ("bernoulli", -0.4)])
def test_sampler_moments(name, lam):
    chk = sampler_moment_check(builtin_family(name), lam, 200_000, np.random.default_rng(11))
    assert abs(chk.mean_z) < 4
    assert abs(chk.var_z) < 4


def test_cumulant_derivatives_by_finite_differences():
    lam = np.linspace(-6, 6, 25)
    h = 1e-5
    for name in FAMILY_NAMES:
        f = builtin_family(name)
        np.testing.assert_allclose((f.psi(lam + h) - f.psi(lam - h)) / (2 * h), f.psi1(lam), rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose((f.psi1(lam + h) - f.psi1(lam - h)) / (2 * h), f.psi2(lam), rtol=1e-7, atol=1e-9)
        np.testing.assert_allclose((f.psi2(lam + h) - f.psi2(lam - h)) / (2 * h), f.psi3(lam), rtol=1e-6, atol=1e-9)


def test_overflow_guard_names_offending_index():
    fam = builtin_family("poisson")
    with pytest.raises(FamilyOverflowError, match=r"\[2\]"):
        hellinger_report(fam, np.array([0.0, 1.0, 800.0]), 0.1)
    with pytest.raises(FamilyOverflowError):
        fam.sample(np.array([50.0]), np.random.default_rng(0))


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown family"):
        builtin_family("gamma")


def test_bernoulli_variance_stable_in_tails():
    f = builtin_family("bernoulli")
    # p(1-p) at lam = 40 is about e^-40 and must not cancel to zero
    np.testing.assert_allclose(f.psi2(40.0), np.exp(-40.0), rtol=1e-12)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_stable_gap_matches_direct_formula(name):
    f = builtin_family(name)
    lam, delta = np.meshgrid(np.linspace(-5, 5, 21), np.linspace(-3, 3, 13))
    direct = f.psi(lam) + f.psi(lam + delta) - 2 * f.psi(lam + 0.5 * delta)
    np.testing.assert_allclose(f.gap(lam, delta), direct, rtol=1e-9, atol=1e-12)


def test_stable_gap_small_shift():
    # second-order expansion: gap ~ psi2(lam) delta^2 / 4
    for name in FAMILY_NAMES:
        f = builtin_family(name)
        np.testing.assert_allclose(f.gap(2.0, 1e-6), f.psi2(2.0) * 1e-12 / 4, rtol=1e-5)
