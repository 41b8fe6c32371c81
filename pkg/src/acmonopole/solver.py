"""Nonlinear correction: u + N(Qu, Qu) = -e0 by contraction."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diagnostics import fit_mass_charge
from .linear import RadialLinear
from .radial import EvenSpline, RadialState, energy, nonlinear_vector, residual_norm_mid
from .su2 import bracket


class GuardError(ValueError):
    """Contraction guard ||v|| <= 1/(10 C) violated."""


class DivergenceError(ArithmeticError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ContractionConfig:
    constant: Optional[float] = None
    max_iterations: int = 50
    rtol: float = 1e-12
    beta: float = -0.5
    override_guard: bool = False
    trials: int = 12
    newton: bool = False

    def __post_init__(self):
        if not 0 < self.rtol < 1:
            raise ValueError("rtol must lie in (0, 1)")

    @property
    def threshold(self) -> float:
        if self.constant is None:
            raise ValueError("bilinear constant not measured")
        return 1.0 / (10.0 * self.constant)


@dataclass
class SolveReport:
    iterations: int
    update_norms: list
    initial_error_norm: float
    initial_sup: float
    final_sup: float
    final_sup_offgrid: float
    final_weighted: float
    correction_norm: float
    energy: dict
    fit: dict
    guard_held: bool
    certificate: bool
    constant: float
    q_norm: float
    converged: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


# --- nonlinear term ----------------------------------------------------------

def nonlinear_N(a, psi_a, b, psi_b, ginv=None, sq=None):
    """Pointwise N((a, phi), (b, psi)) = *[a ^ b]/2 - [a, psi]/2 - [b, phi]/2.

    a, b: (M, 3, 3) lower-index 1-forms; psi_*: (M, 3).  Flat metric by default.
    """
    from .geometry import EPS3

    m = a.shape[0]
    if ginv is None:
        ginv = np.broadcast_to(np.eye(3), (m, 3, 3))
        sq = np.ones(m)
    wedge = bracket(a[:, :, None, :], b[:, None, :, :])  # [a_i, b_j]
    sym = 0.5 * (wedge - np.swapaxes(wedge, 1, 2))  # ([a^b])_{ij} = [a_i,b_j] - [a_j,b_i], halved
    up = np.einsum("mip,mjq,mpqa->mija", ginv, ginv, sym)
    star = 0.5 * sq[:, None, None] * np.einsum("ijk,mija->mka", EPS3, up)
    return star - 0.5 * bracket(a, psi_b[:, None, :]) - 0.5 * bracket(b, psi_a[:, None, :])


def radial_trial_sections(lin: RadialLinear, count: int, seed: int = 0):
    """Smooth random corrections: Gaussian bumps in log r for both profiles."""
    g = lin.state.grid
    r = g.nodes
    lam = lin.state.base.lam
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = math.exp(rng.uniform(math.log(0.5 / lam), math.log(2.0)))
        width = rng.uniform(0.3, 1.0)
        bump = np.exp(-0.5 * (np.log(np.maximum(r, 1e-300) / c) / width) ** 2)
        bump[0] = 0.0
        a, b = rng.normal(size=2)
        out.append(g.join(a * bump * (r / c) ** 2 / (1 + (r / c) ** 2), b * bump * r / (c + r)))
    return out


def bilinear_constant(lin: RadialLinear, trials: int = 12, seed: int = 0, extra=()) -> float:
    """Empirical max of ||N(f, g)|| / (||f|| ||g||) over trial pairs."""
    secs = radial_trial_sections(lin, trials, seed) + [x for x in extra if np.any(x)]
    best = 0.0
    for i, f in enumerate(secs):
        for g_ in secs[i:]:
            num = lin.norm_g(nonlinear_vector(lin.state, f, g_))
            den = lin.norm_u(f) * lin.norm_u(g_)
            if den > 0:
                best = max(best, num / den)
    return best


def operator_norm_proxy(lin: RadialLinear, trials: int = 8, seed: int = 1, extra=()) -> float:
    g = lin.state.grid
    rng = np.random.default_rng(seed)
    r = g.mid
    lam = lin.state.base.lam
    best = 0.0
    sources = list(extra)
    for _ in range(trials):
        c = math.exp(rng.uniform(math.log(0.5 / lam), math.log(2.0)))
        bump = np.exp(-0.5 * (np.log(r / c) / rng.uniform(0.3, 1.0)) ** 2)
        a, b = rng.normal(size=2)
        sources.append(np.concatenate([a * bump, b * bump]))
    for y in sources:
        if not np.any(y):
            continue
        u = lin.right_inverse(y)["u"]
        best = max(best, lin.norm_u(u) / lin.norm_g(y))
    return best


# --- contraction ----------------------------------------------------------------

def contract(v, quad: Callable, constant: float, norm: Callable = abs, rtol: float = 1e-12,
             max_iterations: int = 100, override_guard: bool = False) -> dict:
    """Fixed point of u = v - quad(u) starting from u0 = v."""
    nv = float(norm(v))
    threshold = math.inf if constant <= 0 else 1.0 / (10.0 * constant)
    guard = nv <= threshold
    if not guard and not override_guard:
        raise GuardError(f"contraction guard violated: ||v|| = {nv:.3e} > 1/(10C) = {threshold:.3e}")
    u = v
    history = []
    if nv == 0:
        return {"u": u, "iterations": 0, "history": history, "guard": guard, "certificate": True}
    for it in range(1, max_iterations + 1):
        new = v - quad(u)
        step = float(norm(new - u))
        history.append(step)
        u = new
        if not np.isfinite(step) or float(norm(u)) > 2.0 * max(float(norm(v)), 1e-300) * 1e6:
            raise DivergenceError("contraction iteration diverged")
        if len(history) > 2 and history[-1] > 2.0 * history[-2] > 4.0 * history[-3]:
            raise DivergenceError("contraction iteration diverged (update norm doubling)")
        if step <= rtol * max(float(norm(u)), 1e-300):
            break
    else:
        raise DivergenceError("contraction did not converge within the iteration cap")
    nu = float(norm(u))
    return {"u": u, "iterations": it, "history": history, "guard": guard,
            "certificate": bool(guard and nu <= 2.0 * nv + 1e-15)}


def scalar_contraction_oracle(v: float) -> float:
    """Root of u + u^2 = v near 0."""
    return 2.0 * v / (1.0 + math.sqrt(1.0 + 4.0 * v))


# --- radial pipeline ---------------------------------------------------------

def residual_at(state: RadialState, r) -> np.ndarray:
    """|e| at radii r > 0: analytic base plus spline-interpolated correction."""
    from scipy.interpolate import CubicSpline

    g = state.grid
    r = np.asarray(r, dtype=float)
    w, phi, omw2, dw, dphi = state.base.evaluate(r)
    f = g.model.radial_factor(r)
    if np.any(state.dw) or np.any(state.dphi):
        sw, sp_ = EvenSpline(g.nodes, state.dw), CubicSpline(g.nodes, state.dphi)
        rc = np.minimum(r, g.nodes[-1])
        cw, cp, cdw, cdp = sw(rc), sp_(rc), sw(rc, 1), sp_(rc, 1)
    else:
        cw = cp = cdw = cdp = np.zeros_like(r)
    e_r = 0.5 * omw2 - (2 * w * cw + cw * cw) / (2 * r * r) - (dphi + cdp) / f
    e_t = -(dw + cdw) / (2 * r * f) - (phi + cp) * (w + cw) / r
    return residual_norm_mid(e_r, e_t)


def offgrid_residual(state: RadialState, points_per_interval: int = 2) -> np.ndarray:
    """|e| at interior points of every interval."""
    g = state.grid
    frac = (np.arange(points_per_interval) + 1.0) / (points_per_interval + 1.0)
    return residual_at(state, (g.nodes[:-1, None] + g.h[:, None] * frac[None, :]).ravel())


def residual(model, state, points=None, h: float = 1e-3, order: int = 4, beta: float = -0.5) -> dict:
    """Sup and weighted norms of *F - grad Phi.

    For a radial state `points` are radii (default: a dense geometric sample)
    and the weighted H_{0, beta-1} norm of the discrete midpoint residual is
    included.  For a 3D evaluator `points` are required.
    """
    if isinstance(state, RadialState):
        if points is None:
            points = np.geomspace(1e-4 / state.base.lam, state.grid.nodes[-1], 4000)
        mag = residual_at(state, points)
        lin = RadialLinear(state, beta=beta)
        e_mid = np.concatenate(state.residual_mid())
        return {"sup": float(mag.max()), "l2_weighted": lin.norm_g(e_mid),
                "sup_midpoints": float(residual_norm_mid(*state.residual_mid()).max()),
                "points": int(len(mag))}
    from .covariant import Pointwise

    if points is None:
        raise ValueError("3D residual needs sample points")
    pts = np.asarray(points, dtype=float)
    mag = Pointwise(model, state, h, order).residual_norm(pts)
    return {"sup": float(mag.max()), "rms": float(np.sqrt(np.mean(mag * mag))), "points": int(len(mag))}


def radial_asymptotic_fit(state: RadialState, window=(20.0, 80.0), n: int = 24, tol: float = 1e-3) -> dict:
    fields = state.profiles()
    r = np.geomspace(window[0], min(window[1], state.grid.nodes[-1]), n)
    _, phi = fields(r)
    return fit_mass_charge(r, phi, tol)


def monopole_solve_radial(state: RadialState, config: ContractionConfig = ContractionConfig(),
                          seed: int = 0) -> tuple:
    try:
        lin = RadialLinear(state, beta=config.beta)
    except Exception as exc:  # pragma: no cover - propagated with stage name
        raise StageError("linear assembly", exc) from exc
    e0 = state.residual_vector()
    v = -e0
    try:
        q_e0 = lin.right_inverse(v)["u"]
        constant = config.constant
        qn = operator_norm_proxy(lin, extra=[v])
        if constant is None:
            constant = bilinear_constant(lin, config.trials, seed, extra=[q_e0])
    except Exception as exc:
        raise StageError("right inverse", exc) from exc
    k_lip = constant * qn * qn

    def quad(u):
        x = lin.right_inverse(u)["u"]
        return nonlinear_vector(state, x, x)

    try:
        res = contract(v, quad, k_lip, norm=lin.norm_g, rtol=config.rtol,
                       max_iterations=config.max_iterations, override_guard=config.override_guard)
    except GuardError:
        raise
    except Exception as exc:
        raise StageError("contraction", exc) from exc
    x = lin.right_inverse(res["u"])["u"]
    out = state.with_correction(x)
    notes = []
    if config.newton:
        out, extra = newton_refine(out, config.beta)
        notes.append(f"newton refinement: {extra} steps")
    e_fin = out.residual_mid()
    initial_sup = float(residual_norm_mid(*state.residual_mid()).max())
    final_sup = float(residual_norm_mid(*e_fin).max())
    report = SolveReport(
        iterations=res["iterations"],
        update_norms=res["history"],
        initial_error_norm=lin.norm_g(e0),
        initial_sup=initial_sup,
        final_sup=final_sup,
        final_sup_offgrid=float(offgrid_residual(out).max()),
        final_weighted=lin.norm_g(np.concatenate(e_fin)),
        correction_norm=lin.norm_u(x),
        energy=energy(out),
        fit=radial_asymptotic_fit(out),
        guard_held=res["guard"],
        certificate=res["certificate"],
        constant=constant,
        q_norm=qn,
        converged=True,
        notes=notes + ["uniqueness holds only within the ball ||u|| <= 2||v|| of the iteration space"],
    )
    return out, report


def newton_refine(state: RadialState, beta: float = -0.5, steps: int = 3, tol: float = 1e-13) -> tuple:
    """Re-linearise at the corrected state and apply minimal-norm Newton updates."""
    from .radial import jacobian
    import scipy.sparse as sp

    done = 0
    for _ in range(steps):
        e = state.residual_vector()
        if np.max(np.abs(e)) < tol:
            break
        base_lin = RadialLinear(state, beta=beta)
        x_tot = state.correction_vector()
        g = state.grid
        # Jacobian of the full quadratic map at the current correction
        aw, ap = g.split(x_tot)
        mw, mp = g.mid_values(aw, True), g.mid_values(ap)
        avg_e, avg = g.averaging(True)[:, 1:], g.averaging()
        r = g.mid
        dn_r = sp.hstack([sp.diags(-mw / (r * r)) @ avg_e, sp.csr_matrix((g.n, g.n + 1))])
        dn_t = sp.hstack([sp.diags(-mp / r) @ avg_e, sp.diags(-mw / r) @ avg])
        base_lin.d2 = (jacobian(state) + sp.vstack([dn_r, dn_t])).tocsr()
        base_lin._precond = None
        dx = base_lin.right_inverse(-e)["u"]
        state = state.with_correction(dx)
        done += 1
    return state, done


# --- dispatch -----------------------------------------------------------------

def _axial(model, params) -> bool:
    pts = params.charges.array
    return model.flat and len(pts) > 1 and np.allclose(pts[:, :2], 0.0)


def monopole_solve(model, params, dirac, config: ContractionConfig = ContractionConfig(), seed: int = 0,
                   r_max: float = 100.0, ratio: float = 1.01, grid: Optional[dict] = None,
                   energy_quadrature: Optional[dict] = None) -> tuple:
    """Glue and correct; returns (state, SolveReport).

    One charge at the centre of a radial metric uses the radial reduction;
    several charges on a line in flat space use the meridian-plane reduction.
    """
    from .gluing import assemble_radial

    pts = params.charges.array
    if model.radial and len(pts) == 1 and np.allclose(pts[0], 0.0):
        try:
            state = assemble_radial(model, params, dirac, r_max, ratio)
        except Exception as exc:
            raise StageError("gluing", exc) from exc
        return monopole_solve_radial(state, config, seed)
    if not _axial(model, params):
        raise NotImplementedError("the nonlinear solve supports one central charge on a radial metric "
                                  "or collinear charges in flat space")
    return _solve_axial(model, params, dirac, config, seed, grid or {}, energy_quadrature or {})


def _solve_axial(model, params, dirac, config, seed, grid, quad) -> tuple:
    from .atlas import assemble_atlas
    from .diagnostics import asymptotic_fit
    from .meridian import (AxialState, MeridianSystem, axial_energy, meridian_grid, offgrid_check,
                           solve_meridian)

    try:
        atlas = assemble_atlas(model, params, dirac)
        # refine the cutoff annuli along the axis, where the glued error is largest
        grid = {"band": (0.9 * float(np.min(params.eps_in)), 1.1 * float(np.max(params.eps_out)), 0.01), **grid}
        system = MeridianSystem(atlas, meridian_grid(params.charges.array[:, 2], **grid))
    except Exception as exc:
        raise StageError("gluing", exc) from exc
    res = solve_meridian(system, max_iterations=config.max_iterations, rtol=config.rtol,
                         newton_steps=3 if config.newton else 0, override_guard=config.override_guard,
                         trials=config.trials, seed=seed)
    x = res["x"]
    state = AxialState(system, x)
    check = offgrid_check(system, x, seed=seed)
    quad = {"panels": 24, "order": 6, "n_theta": 12, "n_psi": 24, **quad}
    en = axial_energy(system, x, **quad)
    en = {"energy": en["bulk_with_tail"], "glued_energy": en["approximate_with_tail"], **en}
    report = SolveReport(
        iterations=res["iterations"],
        update_norms=res["history"],
        initial_error_norm=res["initial_error_norm"],
        initial_sup=check["initial_sup"],
        final_sup=check["final_sup"],
        final_sup_offgrid=check["final_sup"],
        final_weighted=float(np.sqrt(np.sum(system.volumes * system.norms(x) ** 2))),
        correction_norm=res["correction_norm"],
        energy=en,
        fit=asymptotic_fit(state.higgs_modulus),
        guard_held=res["guard_held"],
        certificate=res["certificate"],
        constant=res["constant"],
        q_norm=res["q_norm"],
        converged=True,
        notes=[f"meridian grid {system.grid.shape}", f"nodal sup {res['initial_sup']:.3e} -> {res['final_sup']:.3e}",
               "residual sups are continuum values at off-grid points"],
    )
    return state, report
