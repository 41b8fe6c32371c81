import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from acmonopole.abelian import (PointCharges, RadialDiracSolver, apply_flat_twist, dirac_connection,
                                end_fit, exterior_derivative_1form, extract_point_constant, flux,
                                loop_holonomy, minimum_higgs_check, solve_dirac_potential, winding)
from acmonopole.geometry import ManifoldModel

FLAT = ManifoldModel()
CONE = ManifoldModel(kind="ConePerturbation", amplitude=0.05, rate=-1.0)


def superposition(x, pts, ks, m):
    return m - sum(k / (2 * np.linalg.norm(x - p, axis=-1)) for p, k in zip(pts, ks))


def test_euclidean_closed_form_matches_superposition():
    pts, ks = [[0, 0, 1.0], [0.5, -1, 0]], [1, 2]
    d = solve_dirac_potential(FLAT, PointCharges(pts, ks, 5.0))
    x = np.random.default_rng(0).uniform(-3, 3, (50, 3))
    np.testing.assert_allclose(d.potential(x), superposition(x, np.array(pts), ks, 5.0), rtol=1e-13)


def test_gradient_is_derivative_of_potential():
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 1.0], [0, 0, -1.0]], [1, 1], 3.0))
    x = np.array([[0.3, 0.2, 0.1], [2.0, -1.0, 0.5]])
    h = 1e-5
    num = np.stack([(d.potential(x + h * e) - d.potential(x - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    np.testing.assert_allclose(d.gradient(x), num, rtol=1e-7)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.floats(0.1, 0.4))
def test_flux_through_small_sphere_is_2pi_k(k, radius):
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 0]], [k], 2.0))
    assert abs(flux(d, [0, 0, 0], radius) - 2 * math.pi * k) < 1e-6


def test_cone_point_constant_matches_quadrature():
    # phi_D = m - 1/(2r) + c with c = -1/2 int_0^inf (f - 1)/s^2 ds for a radial metric
    d = solve_dirac_potential(CONE, PointCharges([[0, 0, 0]], [1], 1.0))
    f = lambda s: float(CONE.radial_factor(np.array(s)))
    oracle = -0.5 * quad(lambda s: (f(s) - 1) / s ** 2, 0, np.inf, limit=400)[0]
    assert abs(d.constants[0] - oracle) < 1e-6
    assert abs(extract_point_constant(d, 0) - oracle) < 1e-6


def test_cone_fluxes_and_end_fit():
    d = solve_dirac_potential(CONE, PointCharges([[0, 0, 0]], [1], 7.0))
    assert abs(flux(d, [0, 0, 0], 0.5) / (2 * math.pi) - 1) < 1e-3
    fit = end_fit(d)
    assert abs(fit["m_fit"] - 7.0) < 1e-3 and fit["k_integer"] == 1


def test_radial_solver_regular_part():
    s = RadialDiracSolver(CONE, 1, 1.0)
    f = lambda t: float(CONE.radial_factor(np.array(t)))
    for r in (0.1, 1.0, 10.0):
        exact = 1 - 0.5 * quad(lambda t: (f(t) - 1) / t ** 2, r, np.inf, limit=400, epsabs=1e-14)[0]
        assert abs(s.regular_part(r) - exact) < 1e-6


def test_with_mass_is_affine():
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 0]], [1], 1.0))
    x = np.array([[1.0, 2.0, 0.0]])
    assert d.with_mass(9.0).potential(x)[0] - d.potential(x)[0] == pytest.approx(8.0)


def test_minimum_higgs_lemma_small_separation_fails_for_small_mass():
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 0.05], [0, 0, -0.05]], [1, 1], 1.0))
    assert not minimum_higgs_check(d, 1.0)["pass"]
    assert minimum_higgs_check(d, 40.0)["pass"]


def test_patches_differ_by_winding():
    # each small circle only encloses the vertical axis through its own point
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 0.0], [1.0, 0, 2.0]], [1, 2], 1.0))
    assert winding(d, 0) == pytest.approx(1.0, abs=1e-9)
    assert winding(d, 1) == pytest.approx(2.0, abs=1e-9)


def test_patch_curvature_is_star_grad_phi():
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 0.0]], [1], 1.0))
    x = np.array([[0.5, 0.3, 0.8], [-0.4, 0.2, 1.1]])
    da = exterior_derivative_1form(lambda p: dirac_connection(d, "north", p), x)
    np.testing.assert_allclose(da, d.curvature(x), atol=1e-6)


def test_flat_twist():
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 0.0]], [1], 1.0))
    exact = lambda p: np.stack([p[..., 1], p[..., 0], np.zeros(p.shape[:-1])], axis=-1)  # d(xy)
    tw = apply_flat_twist(d, exact)
    assert tw.diagnostics["twist_pure_gauge"]
    assert abs(loop_holonomy(exact, [0, 0, 0.3], 1.0)) < 1e-9
    with pytest.raises(ValueError):
        apply_flat_twist(d, lambda p: np.stack([-p[..., 1], p[..., 0], 0 * p[..., 0]], axis=-1))


@pytest.mark.parametrize("bad", [dict(points=[[0, 0, 0]], charges=[0]), dict(points=[[0, 0, 0], [0, 0, 0]], charges=[1, 1]),
                                 dict(points=[[0, 0, 0]], charges=[1, 1])])
def test_invalid_charges(bad):
    with pytest.raises(ValueError):
        PointCharges(mass=1.0, **bad)
