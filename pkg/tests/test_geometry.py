import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acmonopole.geometry import (DomainError, LinkSpec, ManifoldModel, critical_rates, hodge_star,
                                 load_manifold, radius_function, ricci, sample_geometry)

CONE = ManifoldModel(kind="ConePerturbation", amplitude=0.05, rate=-1.0)
ANISO = ManifoldModel(kind="ConePerturbation", amplitude=0.05, rate=-1.0, profile="anisotropic")
pts = arrays(np.float64, (4, 3), elements=st.floats(-20, 20))


@settings(max_examples=30, deadline=None)
@given(pts)
def test_metric_symmetric_positive(p):
    for model in (CONE, ANISO):
        g = model.metric(p)
        np.testing.assert_allclose(g, np.swapaxes(g, 1, 2))
        assert np.all(np.linalg.eigvalsh(g) > 0)


def test_flat_ricci_vanishes():
    x = np.random.default_rng(0).normal(size=(10, 3))
    assert np.max(np.abs(ricci(ManifoldModel(), x))) == 0.0


def test_perturbation_decays_at_rate():
    # |h| ~ a r^nu on the end
    r = np.array([100.0, 200.0, 400.0])
    g = CONE.metric(r[:, None] * np.array([0.0, 0.0, 1.0]))
    h = np.abs(g[:, 2, 2] - 1.0)
    slope = np.polyfit(np.log(r), np.log(h), 1)[0]
    assert abs(slope - CONE.rate) < 0.01


def test_radial_factor_matches_metric():
    r = np.array([0.3, 1.0, 5.0])
    x = r[:, None] * np.array([0.0, 0.6, 0.8])
    g = CONE.metric(x)
    n = x / r[:, None]
    grr = np.einsum("mi,mij,mj->m", n, g, n)
    np.testing.assert_allclose(np.sqrt(grr), CONE.radial_factor(r), rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-5, 5)), arrays(np.float64, 3, elements=st.floats(-1, 1)))
def test_hodge_star_squares_to_identity(x, form):
    two = hodge_star(CONE, x, form, 1)
    back = hodge_star(CONE, x, two, 2)
    np.testing.assert_allclose(back, form, atol=1e-10)


def test_ricci_of_sphere_cone_perturbation_is_small_far_out():
    far = np.array([[50.0, 0.0, 0.0]])
    near = np.array([[1.0, 0.0, 0.0]])
    assert np.abs(ricci(CONE, far)).max() < np.abs(ricci(CONE, near)).max()


def test_sample_geometry_fields():
    s = sample_geometry(CONE, np.array([[1.0, 2.0, 0.5]]))
    np.testing.assert_allclose(s.inverse @ s.metric, np.eye(3)[None], atol=1e-12)
    np.testing.assert_allclose(s.volume, np.sqrt(np.linalg.det(s.metric)))


def test_radius_function():
    r = np.array([0.0, 0.1, 5.0, 10.0])
    rho = radius_function(r, 1.0)
    assert np.all(rho > 0)
    np.testing.assert_allclose(rho[-2:], r[-2:])


def test_critical_rates_round_sphere_oracle():
    # (beta + 1)(beta + 2) = l (l + 1) has roots l - 1 and -l - 2
    oracle = sorted({l - 1 for l in range(10)} | {-l - 2 for l in range(10)})
    got = critical_rates(LinkSpec(), (-6, 4))
    assert got == [b for b in oracle if -6 <= b <= 4]


def test_critical_rates_custom_spectrum():
    link = LinkSpec(name="Custom", volume=1.0, spectrum=(0.0, 2.0))
    rates = critical_rates(link, (-5, 3))
    for b in rates:
        assert any(abs((b + 1) * (b + 2) - mu) < 1e-12 for mu in (0.0, 2.0))
    assert len(rates) == 4


@pytest.mark.parametrize("bad", [dict(kind="Torus"), dict(rate=0.5), dict(b2=1), dict(profile="wavy")])
def test_invalid_models(bad):
    with pytest.raises(ValueError):
        ManifoldModel(**bad)


def test_domain_errors():
    with pytest.raises(DomainError):
        CONE.metric(np.array([[np.nan, 0.0, 0.0]]))
    with pytest.raises(DomainError):
        CONE.metric(np.zeros((2, 2)))
    bounded = ManifoldModel(chart_radius=2.0)
    with pytest.raises(DomainError):
        bounded.metric(np.array([[3.0, 0.0, 0.0]]))


def test_load_manifold():
    m = load_manifold({"kind": "ConePerturbation", "perturbation": {"amplitude": 0.05}})
    assert m.radial and not m.flat
    assert load_manifold({}).flat
    assert math.isclose(m.link.volume, 4 * math.pi)
