import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from acmonopole.su2 import adjoint_action, bracket, from_matrix, group_element, split_parallel, to_matrix

vec = arrays(np.float64, 3, elements=st.floats(-3, 3))


@given(vec, vec)
def test_bracket_is_matrix_commutator(x, y):
    X, Y = to_matrix(x), to_matrix(y)
    np.testing.assert_allclose(to_matrix(bracket(x, y)), X @ Y - Y @ X, atol=1e-10)


@given(vec, vec, vec)
def test_jacobi(x, y, z):
    s = bracket(x, bracket(y, z)) + bracket(y, bracket(z, x)) + bracket(z, bracket(x, y))
    np.testing.assert_allclose(s, 0.0, atol=1e-9)


@given(vec)
def test_matrix_round_trip(x):
    np.testing.assert_allclose(from_matrix(to_matrix(x)), x, atol=1e-12)


@given(vec)
def test_group_element_matches_expm(x):
    np.testing.assert_allclose(group_element(x), expm(to_matrix(x)), atol=1e-10)


@given(vec, vec)
def test_adjoint_action_is_isometry(g, x):
    y = adjoint_action(group_element(g), x)
    assert abs(np.linalg.norm(y) - np.linalg.norm(x)) < 1e-9


@given(vec, arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda d: np.linalg.norm(d) > 0.1))
def test_split_parallel(x, d):
    d = d / np.linalg.norm(d)
    par, perp = split_parallel(x, d)
    np.testing.assert_allclose(par + perp, x, atol=1e-12)
    assert abs(perp @ d) < 1e-9


def test_norm_is_eigenvalue_modulus():
    x = np.array([0.3, -1.2, 0.7])
    ev = np.linalg.eigvals(to_matrix(x))
    np.testing.assert_allclose(np.abs(ev), np.linalg.norm(x))
