import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from acmonopole.bps import (ABELIAN, BpsField, apply_phase, bps_dirac_gap, bps_eval, bps_radius_R,
                            energy_density_profile, higgs_profile, profile_1mw_over_s2, profile_h,
                            profile_h_over_s, profile_w, to_abelian_gauge)
from acmonopole.covariant import Pointwise
from acmonopole.geometry import DomainError, ManifoldModel

from conftest import random_ball_points

mp.mp.dps = 30
S_VALUES = [1e-6, 0.01, 0.0999, 0.1001, 0.5, 1.0, 3.0, 20.0, 300.0]


@pytest.mark.parametrize("s", S_VALUES)
def test_profiles_match_high_precision(s):
    x = mp.mpf(s)
    h = mp.coth(x) - 1 / x
    w = x / mp.sinh(x)
    assert profile_h(s) == pytest.approx(float(h), rel=1e-13, abs=1e-300)
    assert profile_w(s) == pytest.approx(float(w), rel=1e-12, abs=1e-300)
    assert profile_h_over_s(s) == pytest.approx(float(h / x), rel=1e-13)
    assert profile_1mw_over_s2(s) == pytest.approx(float((1 - w) / x ** 2), rel=1e-11)


def test_example_higgs_value():
    assert higgs_profile(0.5, 1.0) == pytest.approx(0.5 * 0.31303528549933130, rel=1e-12)


def test_bps_radius_oracle():
    r = bps_radius_R()
    assert float(mp.coth(r) - 1 / mp.mpf(r)) == pytest.approx(0.5, abs=1e-11)
    assert 1.0 < r < 3.0


@pytest.mark.parametrize("lam", [1.0, 4.0])
def test_energy_is_4pi_lambda(lam):
    e = quad(lambda r: 4 * math.pi * r * r * energy_density_profile(lam, r), 0, np.inf, limit=400)[0]
    assert e == pytest.approx(4 * math.pi * lam, rel=1e-8)


@pytest.mark.parametrize("gauge", ["Hedgehog", ABELIAN])
def test_bogomolny_equation_holds(gauge):
    field = BpsField(mass=2.0, center=(0.3, -0.2, 0.1), gauge=gauge)
    pts = random_ball_points(60, 3.0, seed=1, center=field.center)
    if gauge == ABELIAN:
        rel = pts - np.asarray(field.center)
        pts = pts[np.hypot(rel[:, 0], rel[:, 1]) > 0.2]
    pw = Pointwise(ManifoldModel(), lambda p: bps_eval(field, p), 1e-3, order=6)
    assert np.max(pw.residual_norm(pts)) < 1e-7


def test_abelian_gauge_preserves_invariants():
    field = BpsField(mass=1.5)
    x = np.array([[0.4, 0.1, 0.3], [1.0, -2.0, 0.5], [-0.3, 0.2, -0.9]])
    conn, higgs = bps_eval(field, x)
    a_ab, p_ab = bps_eval(BpsField(mass=1.5, gauge=ABELIAN), x)
    np.testing.assert_allclose(np.linalg.norm(p_ab, axis=-1), np.linalg.norm(higgs, axis=-1), rtol=1e-13)
    # outside the core the Higgs field is combed onto the third axis
    np.testing.assert_allclose(p_ab[:, :2], 0.0, atol=1e-12)
    assert np.all(p_ab[:, 2] > 0)


def test_combing_ray_rejected():
    x = np.array([[0.0, 0.0, -1.0]])
    conn, higgs = bps_eval(BpsField(), x)
    with pytest.raises(DomainError):
        to_abelian_gauge(x, conn, higgs)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_phases_compose_mod_2pi(a, b):
    f = apply_phase(apply_phase(BpsField(), a), b)
    g = apply_phase(BpsField(), a + b)
    d = abs(f.phase - g.phase)
    assert min(d, 2 * math.pi - d) < 1e-9


def test_phase_rotates_abelian_frame_only():
    x = np.array([[0.5, 0.4, 0.2]])
    base = BpsField(mass=1.0, gauge=ABELIAN)
    a0, p0 = bps_eval(base, x)
    a1, p1 = bps_eval(apply_phase(base, 0.7), x)
    np.testing.assert_allclose(p0, p1, atol=1e-13)
    np.testing.assert_allclose(np.linalg.norm(a0, axis=-1), np.linalg.norm(a1, axis=-1), rtol=1e-12)


def test_invalid_fields_rejected():
    with pytest.raises(ValueError):
        BpsField(mass=0.0)
    with pytest.raises(ValueError):
        BpsField(gauge="Coulomb")


def test_gap_to_dirac_decays_exponentially():
    lam = 1.0
    rep = bps_dirac_gap(BpsField(mass=lam), np.linspace(2.0, 5.0, 7))
    # transverse field decays like exp(-2 lam r), the Higgs gap like exp(-4 lam r)
    assert rep["rate_connection"] == pytest.approx(-2 * lam, abs=0.3)
    assert rep["rate_higgs"] == pytest.approx(-4 * lam, abs=0.3)
    with pytest.raises(ValueError):
        bps_dirac_gap(BpsField(mass=lam), [0.5])
