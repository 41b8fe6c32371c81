import numpy as np
import pytest

from acmonopole.abelian import PointCharges, solve_dirac_potential
from acmonopole.atlas import AtlasState, assemble_atlas, error_term_3d
from acmonopole.geometry import ManifoldModel
from acmonopole.gluing import make_params

from conftest import random_ball_points

FLAT = ManifoldModel()


@pytest.fixture(scope="module")
def pair():
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, -1.5], [0, 0, 1.5]], [1, 1], 16.0))
    return assemble_atlas(FLAT, make_params(d), d)


@pytest.fixture(scope="module")
def single():
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, 0]], [1], 16.0))
    return assemble_atlas(FLAT, make_params(d), d)


def test_single_chart_is_glued_hedgehog(single):
    ch = single.charts[0]
    pts = random_ball_points(200, 3.0, seed=0)
    r = np.linalg.norm(pts, axis=1)
    mod = single.higgs_modulus(pts)
    out = r > ch.eps_out
    np.testing.assert_allclose(mod[out], 16.0 - 1 / (2 * r[out]), rtol=1e-12)
    inside = r < ch.eps_in
    s = 2 * ch.lam * r[inside]
    np.testing.assert_allclose(mod[inside], ch.lam * (1 / np.tanh(s) - 1 / s), rtol=1e-10)


def test_residual_vanishes_off_annuli(pair):
    pts = random_ball_points(400, 3.0, seed=1)
    d = np.linalg.norm(pts[:, None] - np.array([c.center for c in pair.charts])[None], axis=-1).min(1)
    ch = pair.charts[0]
    keep = (d < 0.8 * ch.eps_in) | (d > 1.2 * ch.eps_out)
    keep &= np.abs(pts[:, 2]) > 0.05  # stencils stay inside one Voronoi cell
    assert np.max(pair.residual_norm(pts[keep], h=1e-3, order=6)) < 1e-6


def test_annulus_error_is_nonzero(pair):
    rep = error_term_3d(pair, per_chart=400)
    ch = pair.charts[0]
    assert rep["sup"] > 1e-3
    # the order-4 stencil with h = 1e-3 reaches 2h past the annulus
    assert rep["support_radius"] <= ch.eps_out + 2e-3


def test_abelian_potential_curl_is_other_charges(pair):
    # curl b_0 equals the field of the other charge, by the homotopy formula
    pts = np.array([[0.3, 0.1, -1.2], [-0.4, 0.2, -1.9], [0.2, -0.5, -0.8]])
    other = np.array([0.0, 0.0, 1.5])
    h = 1e-5
    jac = np.stack([(pair.abelian_potential(0, pts + h * e) - pair.abelian_potential(0, pts - h * e)) / (2 * h)
                    for e in np.eye(3)], axis=1)  # [m, j, k] = d_j b_k
    curl = np.stack([jac[:, 1, 2] - jac[:, 2, 1], jac[:, 2, 0] - jac[:, 0, 2], jac[:, 0, 1] - jac[:, 1, 0]], axis=1)
    y = pts - other
    grad = y / (2 * np.linalg.norm(y, axis=1)[:, None] ** 3)
    np.testing.assert_allclose(curl, grad, atol=1e-7)


def test_chart_index_is_voronoi(pair):
    pts = np.array([[0, 0, -0.1], [0, 0, 0.1], [5.0, 0, -3.0]])
    assert pair.chart_index(pts).tolist() == [0, 1, 0]


def test_curved_multi_charge_rejected(cone):
    d = solve_dirac_potential(FLAT, PointCharges([[0, 0, -1.5], [0, 0, 1.5]], [1, 1], 16.0))
    with pytest.raises(NotImplementedError):
        AtlasState(cone, d, assemble_atlas(FLAT, make_params(d), d).charts)


def test_describe_lists_charts(pair):
    desc = pair.describe()
    assert [c["index"] for c in desc] == [0, 1]
    assert desc[0]["eps_out"] == pytest.approx(2 * desc[0]["eps_in"])
