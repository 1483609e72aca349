import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.fft import dct

from funglm.function_space import (
    Grid,
    GridFunction,
    GridMismatchError,
    cosine_basis,
    inner,
    read_functions_csv,
    stack,
    write_functions_csv,
)


def test_midpoint_nodes():
    np.testing.assert_allclose(Grid(4).nodes, [0.125, 0.375, 0.625, 0.875])


@pytest.mark.parametrize("T", [8, 64, 256])
def test_cosine_basis_is_orthonormal(T):
    np.testing.assert_allclose(cosine_basis(T, T).gram(), np.eye(T), atol=1e-12)


def test_cosine_coefficients_match_dct():
    # <f, phi_{j+1}> on the midpoint grid is the orthonormal DCT-II up to the sqrt(T) factor
    T = 32
    f = np.random.default_rng(3).standard_normal(T)
    coefs = cosine_basis(T, T).coefficients(f)
    np.testing.assert_allclose(coefs, dct(f, type=2, norm="ortho") / np.sqrt(T), atol=1e-13)


def test_constant_norm_and_inner():
    g = Grid(10)
    one = GridFunction.constant(g)
    assert one.norm() == pytest.approx(1.0)
    t = GridFunction(g, g.nodes)
    # midpoint rule is exact for linear functions: int_0^1 t dt = 1/2
    assert inner(one, t) == pytest.approx(0.5, abs=1e-15)


def test_arithmetic_and_immutability():
    g = Grid(5)
    f = GridFunction(g, np.arange(5.0))
    h = 2 * f - f + (-f)
    np.testing.assert_array_equal(h.values, 0.0)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        inner(GridFunction.zero(Grid(4)), GridFunction.zero(Grid(5)))
    with pytest.raises(GridMismatchError):
        GridFunction.zero(Grid(4)) + GridFunction.zero(Grid(5))


def test_rejects_bad_values():
    with pytest.raises(ValueError):
        GridFunction(Grid(3), [1.0, np.nan, 2.0])
    with pytest.raises(ValueError):
        GridFunction(Grid(3), [1.0, 2.0])
    with pytest.raises(ValueError):
        Grid(0)
    with pytest.raises(ValueError):
        cosine_basis(8, 9)


@settings(max_examples=50, deadline=None)
@given(coefs=st.lists(st.floats(-10, 10), min_size=1, max_size=16))
def test_parseval(coefs):
    basis = cosine_basis(32, 16)
    f = basis.synthesize(coefs)
    np.testing.assert_allclose(f.norm() ** 2, np.sum(np.square(coefs)), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(basis.coefficients(f)[: len(coefs)], coefs, atol=1e-10)


def test_coefficients_of_a_stack():
    basis = cosine_basis(16, 4)
    X = np.random.default_rng(0).standard_normal((3, 16))
    np.testing.assert_allclose(basis.coefficients(X)[1], basis.coefficients(X[1]))


def test_csv_round_trip_is_exact(tmp_path):
    basis = cosine_basis(64, 3)
    fs = {"phi1": basis[0], "phi3": basis[2]}
    back = read_functions_csv(write_functions_csv(tmp_path / "f.csv", fs))
    for name, f in fs.items():
        np.testing.assert_array_equal(back[name].values, f.values)


def test_stack():
    g = Grid(3)
    S = stack([GridFunction.constant(g, 1.0), GridFunction.constant(g, 2.0)])
    assert S.shape == (2, 3)
