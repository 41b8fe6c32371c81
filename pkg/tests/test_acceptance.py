"""The eleven acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line; the lines are repeated in the
terminal summary of the pytest run.
"""

import math
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from acmonopole.abelian import PointCharges, end_fit, flux, minimum_higgs_check, solve_dirac_potential
from acmonopole.bps import BpsField, bps_eval
from acmonopole.covariant import Pointwise
from acmonopole.diagnostics import gauge_invariance_check, scaling_test
from acmonopole.geometry import LinkSpec, critical_rates
from acmonopole.gluing import error_term_radial
from acmonopole.io import TOLERANCES
from acmonopole.linear import RadialLinear, bump_section, loglog_slope, q_ratios, source_family
from acmonopole.linear import weitzenbock_residual
from acmonopole.radial import RadialGrid, RadialState, pure_bps_profile
from acmonopole.solver import contract, scalar_contraction_oracle

from conftest import random_ball_points

MASSES = (20.0, 40.0, 80.0)


def grid_samples(half_width: float, h: float, count: int, seed: int = 0) -> np.ndarray:
    """Random subset of the nodes of the cubic grid, always including the centre."""
    n = int(round(2 * half_width / h)) + 1
    idx = np.random.default_rng(seed).integers(0, n, size=(count, 3))
    return np.concatenate([np.zeros((1, 3)), -half_width + h * idx])


def _mp_bps_residual(prof, radii):
    """Reduced residual from mpmath closed forms, and the backend's deviation from them."""
    mpmath.mp.dps = 40
    lam = prof.lam
    phi = lambda r: lam * (mpmath.coth(2 * lam * r) - 1 / (2 * lam * r))
    w = lambda r: 2 * lam * r / mpmath.sinh(2 * lam * r)
    sup, dev = 0.0, 0.0
    bw, bphi, _, bdw, bdphi = prof.evaluate(np.asarray(radii))
    for j, x in enumerate(radii):
        r = mpmath.mpf(x)
        wr, pr, dw, dp = w(r), phi(r), mpmath.diff(w, r), mpmath.diff(phi, r)
        e_r = (1 - wr * wr) / (2 * r * r) - dp
        e_t = -dw / (2 * r) - pr * wr / r
        sup = max(sup, float(mpmath.sqrt(e_r ** 2 + 2 * e_t ** 2)))
        for got, want in ((bw[j], wr), (bphi[j], pr), (bdw[j], dw), (bdphi[j], dp)):
            dev = max(dev, abs(float(got - want)) / max(1.0, abs(float(want))))
    return sup, dev


def _line(record, number, ok, detail):
    record(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    return ok


def test_criterion_01_bps_exactness(record, flat):
    t0 = time.time()
    # radial backend: reduced residual of the closed form, pointwise and at the grid midpoints
    lam = 1.0
    prof = pure_bps_profile(flat, lam)
    r = np.geomspace(1e-6, 60.0, 4000)
    er, et = prof.residual(r)
    radial_sup = float(np.max(np.sqrt(er * er + 2 * et * et)))
    # independent oracle: closed forms and their derivatives in 40-digit arithmetic
    oracle_sup, backend_dev = _mp_bps_residual(prof, np.geomspace(1e-4, 30.0, 60))
    radial_sup = max(radial_sup, oracle_sup)
    st = RadialState.from_profile(RadialGrid(flat, 1e-4, 60.0, 1.01), prof)
    mid = st.residual_mid()
    mid_sup = float(np.max(np.sqrt(mid[0] ** 2 + 2 * mid[1] ** 2)))
    # 3D backend: grid h = 0.05 on [-4, 4]^3; the 4th-order residual is pure stencil
    # truncation, estimated independently as the difference to the 6th-order stencil
    pts = grid_samples(half_width=4.0, h=0.05, count=6000, seed=0)
    ev = lambda p: bps_eval(BpsField(1.0), p)
    e4 = Pointwise(flat, ev, 0.05, 4).residual(pts)
    e6 = Pointwise(flat, ev, 0.05, 6).residual(pts)
    trunc = np.linalg.norm((e4 - e6).reshape(len(pts), -1), axis=1)
    e4n = np.linalg.norm(e4.reshape(len(pts), -1), axis=1)
    ratio = float(np.max(e4n / np.maximum(trunc, 1e-300)))
    elapsed = time.time() - t0
    ok = radial_sup <= 1e-9 and backend_dev <= 1e-9 and mid_sup <= 1e-9 and ratio <= 10.0 and elapsed < 60
    _line(record, 1, ok, f"radial sup {radial_sup:.2e} (profile vs oracle {backend_dev:.1e}), midpoint sup {mid_sup:.2e}, "
                         f"3D residual / truncation <= {ratio:.2f}, {elapsed:.1f}s")
    assert ok


def test_criterion_02_critical_rates(record):
    rates = critical_rates(LinkSpec(), (-5, 3))
    expected = sorted({Fraction(l - 1) for l in range(0, 5)} | {Fraction(-l - 2) for l in range(0, 4)})
    same = len(rates) == len(expected) and all(abs(a - float(b)) <= 1e-12 for a, b in zip(rates, expected))
    gap = [b for b in rates if -2 < b < -1]
    ok = same and not gap
    _line(record, 2, ok, f"rates {rates}, in (-2,-1): {gap}")
    assert ok


def test_criterion_03_dirac_pipeline(record, flat):
    from acmonopole.poisson3d import solve_fem

    d = 10.0 / math.sqrt(8.0)
    ch = PointCharges([[0, 0, d / 2], [0, 0, -d / 2]], [1, 1], 8.0)
    exact = solve_dirac_potential(flat, ch)
    fem = solve_fem(flat, ch)
    x = np.random.default_rng(0).uniform(-10, 10, (4000, 3))
    eps = math.sqrt(10.0 / 64.0)
    x = x[np.min(np.linalg.norm(x[:, None] - ch.array[None], axis=-1), axis=1) > eps]
    sup = float(np.max(np.abs(fem.potential(x) - exact.potential(x))))
    small = [flux(fem, p, 0.3) / (2 * math.pi) for p in ch.array]
    large = flux(fem, [0, 0, 0], 20.0) / (4 * math.pi)
    fit = end_fit(fem)
    ok = (sup <= 1e-6 and all(abs(s - 1) <= 0.01 for s in small) and abs(large - 1) <= 0.01
          and abs(fit["m_fit"] - 8.0) <= 1e-3 and fit["k_integer"] == 2)
    _line(record, 3, ok, f"potential sup diff {sup:.2e}, small fluxes/2pi {np.round(small, 5)}, "
                         f"large flux/4pi {large:.5f}, fit ({fit['m_fit']:.5f}, {fit['k_integer']})")
    assert ok


def test_criterion_04_minimum_higgs(record, cone_dirac, flat):
    two = solve_dirac_potential(flat, PointCharges([[0, 0, 0.8], [0, 0, -0.8]], [1, 1], 1.0))
    rows = []
    for m0 in MASSES:
        for name, d in (("cone k=1", cone_dirac), ("flat k=2", two)):
            rep = minimum_higgs_check(d, m0)
            rows.append((name, m0, rep["min_value"] / m0, rep["pass"]))
    ok = all(r[3] for r in rows)
    _line(record, 4, ok, "min phi_D / m0 = " + ", ".join(f"{n} m0={m:g}: {v:.3f}" for n, m, v, _ in rows))
    assert ok


def test_criterion_05_weitzenbock(record, cone, cone_states):
    st = cone_states[20.0]
    ev = st.evaluator(base_only=True)
    rng = np.random.default_rng(0)
    worst, ratios = 0.0, []
    for k in range(20):
        centre = rng.normal(size=3) * 0.2
        sec = bump_section(centre, 0.3, rng.normal(size=(3, 3)), rng.normal(size=3))
        pts = random_ball_points(24, 0.25, seed=k, center=centre)
        coarse = weitzenbock_residual(cone, ev, sec, pts, 4e-3)
        fine = weitzenbock_residual(cone, ev, sec, pts, 2e-3)
        worst = max(worst, fine["relative"])
        for which in ("DDstar", "DstarD"):
            ratios.append(coarse[which]["sup"] / max(fine[which]["sup"], 1e-300))
    ok = worst <= 1e-5 and min(ratios) >= 8.0
    _line(record, 5, ok, f"20 sections, worst relative residual {worst:.2e} (h=2e-3), "
                         f"min halving ratio {min(ratios):.2f}")
    assert ok


def test_criterion_06_error_term(record, cone_states):
    t0 = time.time()
    reps = {m0: error_term_radial(st) for m0, st in cone_states.items()}
    sups = [reps[m]["sup"] for m in MASSES]
    exponent = loglog_slope(MASSES, sups)
    rescaled = [reps[m]["rescaled_sup"] for m in MASSES]
    # outside eps_out the glued field is the Dirac field, so only the potential solve error remains
    tol = TOLERANCES["stencil_rtol"]
    support_ok = all(reps[m]["sup_outside_eps_out"] <= tol
                     and reps[m]["support_radius"] <= cone_states[m].meta["eps_out"] for m in MASSES)
    ok = support_ok and exponent <= 1.1 and rescaled[0] > rescaled[1] > rescaled[2] and time.time() - t0 < 600
    _line(record, 6, ok, f"sup|e0| {np.round(sups, 6)}, exponent {exponent:.3f}, "
                         f"rescaled {np.array(rescaled)}, supported in eps_out ball: {support_ok}")
    assert ok


def test_criterion_07_right_inverse(record, cone_states):
    family = source_family(10, seed=0)
    maxima, worst_res = [], 0.0
    for m0 in MASSES:
        q = q_ratios(RadialLinear(cone_states[m0]), family)
        maxima.append(q["max_ratio"])
        worst_res = max(worst_res, q["max_relative_residual"])
    slope = loglog_slope(MASSES, maxima)
    ok = worst_res <= 1e-8 and slope <= 0.05
    _line(record, 7, ok, f"max |d2 Qg - g|/|g| {worst_res:.2e}, max |Qg|/|g| {np.round(maxima, 4)}, "
                         f"log-log trend {slope:.3f}")
    assert ok


def test_criterion_08_contraction(record, cone_solves):
    u = contract(0.05, lambda x: x * x, 1.0, rtol=1e-15)["u"]
    oracle = scalar_contraction_oracle(0.05)
    scalar_ok = abs(u - oracle) <= 1e-9 and abs(u - 0.047723) < 5e-7 and abs(u) <= 2 * 0.05
    reports = [rep for _, rep in cone_solves.values()]
    section_ok = all(rep.guard_held and rep.certificate for rep in reports)
    ok = scalar_ok and section_ok
    _line(record, 8, ok, f"scalar u={u:.9f} (oracle {oracle:.9f}), section-level guard and "
                         f"||u|| <= 2||v|| on {len(reports)} solves: {section_ok}")
    assert ok


def test_criterion_09a_end_to_end_cone(record, cone_solves):
    m0 = 40.0
    _, rep = cone_solves[m0]
    reduction = rep.initial_sup / rep.final_sup_offgrid
    e_rel = rep.energy["bulk_with_tail"] / (4 * math.pi * m0) - 1
    fit = rep.fit
    ok = reduction >= 100 and abs(e_rel) <= 0.02 and abs(fit["m_fit"] - m0) <= 1e-3 * m0 and fit["k"] == 1
    _line(record, "9a", ok, f"cone k=1 m0=40: sup residual {rep.initial_sup:.3e} -> {rep.final_sup_offgrid:.3e} "
                            f"(x{reduction:.3g}), energy rel err {e_rel:.2e}, fit ({fit['m_fit']:.4f}, {fit['k']})")
    assert ok


@pytest.mark.slow
def test_criterion_09b_end_to_end_two_charges(record, flat):
    from acmonopole.gluing import make_params
    from acmonopole.solver import ContractionConfig, monopole_solve

    t0 = time.time()
    m0 = 40.0
    d = 10.0 / math.sqrt(m0)
    dirac = solve_dirac_potential(flat, PointCharges([[0, 0, -d / 2], [0, 0, d / 2]], [1, 1], m0))
    params = make_params(dirac, phases=(0.3, -0.3))
    _, rep = monopole_solve(flat, params, dirac, ContractionConfig(override_guard=True))
    reduction = rep.initial_sup / rep.final_sup_offgrid
    e_rel = rep.energy["energy"] / (8 * math.pi * m0) - 1
    elapsed = time.time() - t0
    ok = reduction >= 10 and abs(e_rel) <= 0.05 and rep.fit["k"] == 2 and elapsed < 1800
    _line(record, "9b", ok, f"flat k=2 m0=40: sup residual {rep.initial_sup:.3e} -> {rep.final_sup_offgrid:.3e} "
                            f"(x{reduction:.3g}), energy rel err {e_rel:.2e}, guard held {rep.guard_held}, "
                            f"{elapsed:.0f}s")
    assert ok


def test_criterion_10_convergence_trend(record, cone_solves):
    norms = [cone_solves[m][1].correction_norm for m in MASSES]
    slope = loglog_slope(MASSES, norms)
    ok = slope <= -1.5
    _line(record, 10, ok, f"||Qu|| {np.array(norms)}, log-log slope {slope:.3f} (reference -1.75)")
    assert ok


def test_criterion_11_gauge_and_scaling(record, cone, cone_states, flat):
    ev = cone_states[20.0].evaluator(base_only=True)
    pts = random_ball_points(200, 0.55, seed=0)
    g = gauge_invariance_check(cone, ev, pts, energy_kw=dict(centers=[[0, 0, 0]], outer_radius=30.0))
    approx = scaling_test(cone, ev, 2.0, pts)
    bev = lambda p: bps_eval(BpsField(1.0), p)
    exact = scaling_test(flat, bev, 2.0, pts * 4)
    ok = g["max_relative_change"] <= 1e-6 and approx["identity_error"] <= 1e-6 and exact["zero_preserved"]
    _line(record, 11, ok, f"gauge max relative change {g['max_relative_change']:.2e}, scaling identity error "
                          f"{approx['identity_error']:.2e}, exact residual {exact['original_sup']:.1e} -> "
                          f"{exact['scaled_sup']:.1e}")
    assert ok
