import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acmonopole.bps import BpsField, bps_eval
from acmonopole.geometry import ManifoldModel
from acmonopole.linear import (RadialLinear, WeightedNormSpec, adjointness_defect, bump_section, loglog_slope,
                               q_ratios, sample_source, source_family, unit_higgs, weight_function,
                               weitzenbock_residual)

from conftest import random_ball_points


@pytest.fixture(scope="module")
def lin20(cone_states):
    return RadialLinear(cone_states[20.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.floats(-1.0, 0.0), st.floats(9.0, 200.0), st.floats(1e-3, 10.0))
def test_weight_positive_and_continuous(j, beta, m0, d):
    eps_out = 2 / math.sqrt(m0)
    w = lambda x: weight_function(j, beta, m0, eps_out, 1.0, x, x)
    assert w(d) > 0
    # continuous across the ball boundary and across the end transition
    for edge in (eps_out, 1.0, 2.0):
        assert w(edge * (1 + 1e-9)) == pytest.approx(w(edge * (1 - 1e-9)), rel=1e-6)


def test_weight_regimes():
    m0, eps_out = 100.0, 0.2
    w = lambda j, x, lit=False: weight_function(j, -0.5, m0, eps_out, 1.0, x, x, lit)
    assert w(0, 0.05) == pytest.approx(m0 ** -2)
    assert w(1, 0.05) == pytest.approx(m0 ** -3)
    assert w(1, 0.05, True) == pytest.approx(m0 ** -1)
    # rho^(j - beta - 3/2) on the end
    assert w(1, 7.0) == pytest.approx(7.0 ** 0.0)
    assert w(0, 7.0) == pytest.approx(7.0 ** -1.0)


def test_weight_without_ramp_room():
    # eps_out >= 1 keeps the ball weight on the whole ball
    assert weight_function(0, -0.5, 4.0, 1.0, 1.0, 0.9, 0.9) == pytest.approx(4.0 ** -2)


def test_norm_spec_defaults():
    spec = WeightedNormSpec(n=1, beta=-0.5, m0=25.0, points=((0, 0, 0), (0, 0, 3)))
    assert spec.eps_out == (0.4, 0.4)
    assert spec.weight(0, 0.01, 0.01) == pytest.approx(25.0 ** -2)


def test_adjoint_matches_weighted_transpose(lin20):
    for seed in range(3):
        assert adjointness_defect(lin20, seed) < 1e-10


def test_right_inverse_solves_and_is_minimal(lin20):
    y = sample_source(lin20, source_family(1, seed=3)[0])
    res = lin20.right_inverse(y)
    assert res["relative_residual"] < 1e-8
    u = res["u"]
    # adding a kernel element can only increase the norm
    rng = np.random.default_rng(0)
    z = rng.normal(size=u.size)
    k = z - lin20.right_inverse(lin20.d2 @ z)["u"]
    assert lin20.norm_g(lin20.d2 @ k) < 1e-6 * lin20.norm_g(lin20.d2 @ z)
    assert lin20.norm_u(u + 0.1 * k) >= lin20.norm_u(u)
    # orthogonal to the kernel in the domain inner product
    assert abs(u @ (lin20.mass_u @ k)) < 1e-6 * lin20.norm_u(u) * lin20.norm_u(k)


def test_zero_source_maps_to_zero(lin20):
    res = lin20.right_inverse(np.zeros(lin20.d2.shape[0]))
    assert res["iterations"] == 0 and not np.any(res["u"])


def test_q_ratios_report(lin20):
    rep = q_ratios(lin20, source_family(3, seed=0))
    assert len(rep["ratios"]) == 3 and rep["max_relative_residual"] < 1e-8
    assert rep["max_ratio"] == max(rep["ratios"])


def test_literal_ball_weights_scale_with_mass(cone_states):
    # a core-supported source costs ~ m0 more under the literal weights
    src = (0.05, 0.5, 1.0, 0.0)
    r = {m0: q_ratios(RadialLinear(cone_states[m0], literal_ball_weights=True), [src])["max_ratio"]
         for m0 in (20.0, 80.0)}
    assert loglog_slope([20.0, 80.0], [r[20.0], r[80.0]]) > 0.5


def test_loglog_slope_exact():
    x = np.array([1.0, 2.0, 4.0])
    assert loglog_slope(x, 3 * x ** -1.75) == pytest.approx(-1.75)


def test_bump_section_support_and_projection():
    n = unit_higgs(lambda p: bps_eval(BpsField(mass=1.0), p))
    u = bump_section([0.5, 0, 0], 0.3, np.ones((3, 3)), np.ones(3), perp_to=n)
    pts = random_ball_points(200, 1.0, seed=2, center=(0.5, 0, 0))
    a, psi = u(pts)
    outside = np.linalg.norm(pts - [0.5, 0, 0], axis=1) >= 0.3
    assert np.all(a[outside] == 0) and np.all(psi[outside] == 0)
    nn = n(pts)
    assert np.max(np.abs(np.einsum("mia,ma->mi", a, nn))) < 1e-13
    assert np.max(np.abs(np.einsum("ma,ma->m", psi, nn))) < 1e-13


def test_weitzenbock_on_flat_bps_background():
    field = BpsField(mass=2.0)
    bg = lambda p: bps_eval(field, p)
    sec = bump_section([0.2, 0.1, 0.0], 0.4, np.arange(9.0).reshape(3, 3) / 9, [0.3, -0.2, 0.5])
    pts = random_ball_points(40, 0.35, seed=4, center=(0.2, 0.1, 0.0))
    rep = weitzenbock_residual(ManifoldModel(), bg, sec, pts, h=2e-3, order=6)
    assert rep["relative"] < 1e-5
