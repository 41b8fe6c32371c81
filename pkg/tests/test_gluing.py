import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acmonopole.abelian import PointCharges, solve_dirac_potential
from acmonopole.gluing import GlueParams, assemble_radial, cutoff_profile, error_term_radial, make_params
from acmonopole.radial import smoothstep, smoothstep_slope


def flat_params(points, m0, constants=None, phases=()):
    pc = PointCharges(points, [1] * len(points), m0)
    return GlueParams(pc, tuple(constants or [0.0] * len(points)), tuple(phases))


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.5, 1.5))
def test_smoothstep_is_monotone_c1(t):
    h = 1e-6
    assert 0.0 <= smoothstep(t) <= 1.0
    assert smoothstep(t + h) >= smoothstep(t)
    num = (smoothstep(t + h) - smoothstep(t - h)) / (2 * h)
    assert abs(num - smoothstep_slope(t)) < 1e-5


def test_radii_follow_local_mass():
    p = flat_params([[0, 0, 0], [0, 0, 3.0]], 25.0, constants=[-1.0, 0.5])
    np.testing.assert_allclose(p.lambdas, [24.0, 25.5])
    np.testing.assert_allclose(p.eps_in, [24.0 ** -0.5, 25.5 ** -0.5])
    np.testing.assert_allclose(p.eps_out, 2 * p.eps_in)


def test_validate_accepts_separated_unit_charges():
    p = flat_params([[0, 0, 0], [0, 0, 3.0]], 25.0, phases=[0.4, -0.4])
    assert all(p.validate().checks().values())


@pytest.mark.parametrize("kwargs, name", [
    (dict(points=[[0, 0, 0], [0, 0, 0.5]], m0=25.0), "separation"),
    (dict(points=[[0, 0, 0]], m0=1.0, constants=[-2.0]), "positive_masses"),
    (dict(points=[[0, 0, 0], [0, 0, 3.0]], m0=25.0, phases=[0.4, 0.4]), "phase_sum"),
])
def test_validate_names_the_broken_invariant(kwargs, name):
    with pytest.raises(ValueError, match=name):
        flat_params(**kwargs).validate()


def test_higher_charge_rejected():
    pc = PointCharges([[0, 0, 0]], [2], 25.0)
    with pytest.raises(ValueError, match="unit_charges"):
        GlueParams(pc, (0.0,)).validate()


def test_phase_count_must_match():
    with pytest.raises(ValueError):
        flat_params([[0, 0, 0], [0, 0, 3.0]], 25.0, phases=[0.1])


def test_mass_above_constants_is_reported_not_enforced():
    p = flat_params([[0, 0, 0]], 4.0, constants=[2.0])
    assert p.validate().checks()["mass_above_constants"] is False


def test_cutoffs_form_partition_of_unity():
    p = flat_params([[0, 0, 0], [0, 0, 3.0]], 16.0)
    d = np.array([[0.1, 2.9], [0.3, 2.7], [0.45, 2.55], [1.5, 1.5]])
    c = cutoff_profile(p, d)
    np.testing.assert_allclose(c["chi_in"].sum(-1) + c["chi_out"], 1.0)
    np.testing.assert_allclose(c["chi_in"][0], [1.0, 0.0])
    np.testing.assert_allclose(c["chi_in"][-1], [0.0, 0.0])
    assert 0 < c["chi_in"][1, 0] < 1
    # quintic step: max slope 15/8 over the annulus width eps_out - eps_in
    assert c["gradient_bound"] == pytest.approx(1.875 / 0.25)


def test_make_params_uses_point_constants(cone_dirac):
    d = cone_dirac.with_mass(20.0)
    p = make_params(d)
    assert p.constants[0] == pytest.approx(d.constants[0], abs=1e-6)
    assert p.m0 == 20.0


def test_radial_assembly_requires_centred_charge(flat):
    d = solve_dirac_potential(flat, PointCharges([[0, 0, 1.0]], [1], 20.0))
    with pytest.raises(ValueError):
        assemble_radial(flat, make_params(d), d)


def test_flat_error_term_vanishes(flat):
    # on flat space the Dirac field is exactly the BPS tail, so only the
    # exponentially small core mismatch remains in the annulus
    d = solve_dirac_potential(flat, PointCharges([[0, 0, 0]], [1], 40.0))
    p = make_params(d)
    rep = error_term_radial(assemble_radial(flat, p, d))
    assert rep["sup"] < 40.0 ** 2 * math.exp(-2 * math.sqrt(40.0)) * 10
    assert rep["sup_outside_eps_out"] < 1e-9


def test_cone_error_term_supported_in_annulus(cone_states):
    for m0, st_ in cone_states.items():
        rep = error_term_radial(st_)
        assert rep["support_radius"] <= st_.meta["eps_out"] * 1.001
        assert st_.meta["eps_in"] * 0.99 <= rep["argmax_radius"] <= st_.meta["eps_out"] * 1.001
