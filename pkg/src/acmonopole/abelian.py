"""Dirac monopoles: harmonic potentials with point sources and their U(1) data.

Convention: phi_D ~ m - k/(2 r) near a charge-k point, so a small sphere
carries flux 2 pi k, and on the end phi_D ~ m - 2 pi k_total / (Vol r).
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .geometry import DomainError, ManifoldModel, hodge_star

_GL4 = np.polynomial.legendre.leggauss(4)


class AccuracyError(ArithmeticError):
    pass


class SolverError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PointCharges:
    points: tuple
    charges: tuple
    mass: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", tuple(map(tuple, pts)))
        object.__setattr__(self, "charges", tuple(int(k) for k in self.charges))
        if len(self.charges) != len(pts):
            raise ValueError("one charge per point required")
        if any(k < 1 for k in self.charges):
            raise ValueError("charges must be positive integers")
        if len(pts) > 1:
            d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
            d[np.diag_indices(len(pts))] = np.inf
            if d.min() <= 0:
                raise ValueError("coincident points are not supported")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(-1, 3)

    @property
    def total(self) -> int:
        return int(sum(self.charges))

    def min_distance(self) -> float:
        pts = self.array
        if len(pts) < 2:
            return math.inf
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d[np.diag_indices(len(pts))] = np.inf
        return float(d.min())


@dataclass(frozen=True)
class DiracData:
    model: ManifoldModel
    charges: PointCharges
    potential: Callable = field(compare=False)
    gradient: Callable = field(compare=False)
    constants: tuple = ()
    method: str = "closed-form"
    twist: Optional[Callable] = field(default=None, compare=False)
    diagnostics: dict = field(default_factory=dict, compare=False)
    radial_profile: Optional[Callable] = field(default=None, compare=False)

    @property
    def mass(self) -> float:
        return self.charges.mass

    def curvature(self, pts) -> np.ndarray:
        """F_D = *d phi_D as antisymmetric (..., 3, 3) components."""
        return hodge_star(self.model, pts, self.gradient(pts), 1)

    def with_mass(self, m: float) -> "DiracData":
        """Same data with the end value shifted to m (phi_D is affine in m)."""
        shift = m - self.mass
        pot = self.potential
        prof = self.radial_profile
        return replace(
            self,
            charges=replace(self.charges, mass=m),
            potential=lambda p: pot(p) + shift,
            radial_profile=None if prof is None else (lambda r: prof(r) + shift),
        )


# --- closed form on flat R^3 ------------------------------------------------

def _euclidean(model: ManifoldModel, charges: PointCharges) -> DiracData:
    pts = charges.array
    ks = np.asarray(charges.charges, dtype=float)
    m = charges.mass

    def potential(x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], m)
        for p, k in zip(pts, ks):
            out = out - k / (2.0 * np.linalg.norm(x - p, axis=-1))
        return out

    def gradient(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for p, k in zip(pts, ks):
            d = x - p
            r = np.linalg.norm(d, axis=-1)[..., None]
            out = out + k * d / (2.0 * r ** 3)
        return out

    consts = []
    for i, p in enumerate(pts):
        c = 0.0
        for j, (q, k) in enumerate(zip(pts, ks)):
            if j != i:
                c -= k / (2.0 * np.linalg.norm(p - q))
        consts.append(c)
    prof = None
    if len(pts) == 1 and np.allclose(pts[0], 0.0):
        prof = lambda r: m - ks[0] / (2.0 * np.asarray(r, dtype=float))
    elif len(pts) == 0:
        prof = lambda r: np.full(np.shape(r), m)
    return DiracData(model, charges, potential, gradient, tuple(consts), "closed-form",
                     radial_profile=prof)


# --- radial variational solve -----------------------------------------------

def _bump(r, eps):
    t = np.clip(r / eps, 0.0, 1.0)
    return (1.0 - t * t) ** 3


def radial_grid(r_first: float, r_out: float, ratio: float) -> np.ndarray:
    n = int(math.ceil(math.log(r_out / r_first) / math.log(ratio)))
    return np.concatenate([[0.0], np.geomspace(r_first, r_out, n + 1)])


class RadialDiracSolver:
    """P1 finite elements for the radial reduction of the Dirac problem.

    Minimizes (Vol/2) int r^2/f phi'^2 dr + 2 pi k int b_eps phi dvol with a
    normalized bump b_eps at the origin and phi(R_out) = m - 2 pi k/(Vol R_out).
    Element stiffness uses the harmonic mean of r^2/f, which makes nodal
    values exact for the source-free radial equation.
    """

    def __init__(self, model: ManifoldModel, charge: int, mass: float,
                 eps_source: float = 1e-3, r_out: float = 400.0, ratio: float = 1.01):
        self.model, self.k, self.m = model, charge, mass
        self.eps = eps_source
        self.r_out = r_out
        vol = model.link.volume
        r = radial_grid(eps_source / 20.0, r_out, ratio)
        self.nodes = r
        x, w = _GL4
        a, b = r[:-1], r[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        q = mid[:, None] + half[:, None] * x[None, :]
        f = model.radial_factor(q)
        stiff = 1.0 / np.sum(w * half[:, None] * f / (vol * q * q), axis=1)
        n = len(r)
        diag = np.zeros(n)
        diag[:-1] += stiff
        diag[1:] += stiff
        off = -stiff
        # load: -2 pi k * normalized bump
        bq = _bump(q, eps_source) * vol * q * q * f
        phi_a = 0.5 * (1 - x)
        phi_b = 0.5 * (1 + x)
        load = np.zeros(n)
        load[:-1] += np.sum(w * half[:, None] * bq * phi_a, axis=1)
        load[1:] += np.sum(w * half[:, None] * bq * phi_b, axis=1)
        load *= -2.0 * math.pi * charge / load.sum()
        bc = mass - 2.0 * math.pi * charge / (vol * r_out)
        rhs = load[:-1].copy()
        rhs[-1] -= off[-1] * bc
        ab = np.zeros((3, n - 1))
        ab[0, 1:] = off[:-1]
        ab[1] = diag[:-1]
        ab[2, :-1] = off[:-1]
        sol = solve_banded((1, 1), ab, rhs)
        self.values = np.concatenate([sol, [bc]])
        full = self.values
        kphi = diag * full
        kphi[:-1] += off * full[1:]
        kphi[1:] += off * full[:-1]
        res = (kphi - load)[:-1]
        outside = r[:-1] > 2 * eps_source
        self.harmonic_residual = float(np.max(np.abs(res[outside]))) if outside.any() else 0.0
        keep = r >= 2.0 * eps_source
        rr = r[keep]
        self._spline = CubicSpline(np.log(rr), self.values[keep] + charge / (2.0 * rr))
        self._r_min = rr[0]

    def regular_part(self, r):
        """phi_D + k/(2r), valid for r >= 2 eps_source."""
        r = np.asarray(r, dtype=float)
        if np.any(r < self._r_min * (1 - 1e-12)):
            raise DomainError("radius inside the smoothed source")
        return self._spline(np.log(np.minimum(r, self.r_out)))

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        return self.regular_part(r) - self.k / (2.0 * r)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return self._spline(np.log(r), 1) / r + self.k / (2.0 * r * r)


def _radial(model: ManifoldModel, charges: PointCharges, **opts) -> DiracData:
    k = charges.charges[0]
    solver = RadialDiracSolver(model, k, charges.mass, **opts)

    def potential(x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return solver.profile(r)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return (solver.derivative(r) / r)[..., None] * x

    diag = {"harmonic_residual": solver.harmonic_residual, "r_out": solver.r_out,
            "eps_source": solver.eps, "nodes": len(solver.nodes)}
    data = DiracData(model, charges, potential, gradient, (), "radial-fem",
                     diagnostics=diag, radial_profile=solver.profile)
    c = _richardson_constant(lambda r: solver.regular_part(r) - charges.mass, 64 * solver.eps)
    return replace(data, constants=(c,))


def solve_dirac_potential(model: ManifoldModel, charges: PointCharges, **opts) -> DiracData:
    if model.b2 != 0:
        raise ValueError("b2(X) must vanish")
    if len(charges.points) == 0:
        m = charges.mass
        return DiracData(model, charges, lambda x: np.full(np.shape(x)[:-1], m),
                         lambda x: np.zeros(np.shape(x)), (), "closed-form",
                         radial_profile=lambda r: np.full(np.shape(r), m))
    if model.flat:
        return _euclidean(model, charges)
    at_origin = len(charges.points) == 1 and np.allclose(charges.array[0], 0.0)
    if model.radial and at_origin:
        return _radial(model, charges, **opts)
    from .poisson3d import solve_fem

    return solve_fem(model, charges, **opts)


# --- constants, fluxes, connections -----------------------------------------

def _richardson_constant(fn: Callable, r0: float, levels: int = 5, tol: float = 1e-6) -> float:
    """Extrapolate fn(r) -> r = 0 from r0, r0/2, ... assuming a power series in r."""
    table = [float(fn(r)) for r in r0 * 2.0 ** -np.arange(levels)]
    last = table[-1]
    for lev in range(1, levels):
        last = table[-1]
        table = [(2 ** lev * table[i + 1] - table[i]) / (2 ** lev - 1) for i in range(len(table) - 1)]
    err = abs(table[-1] - last)
    if err > tol:
        raise AccuracyError(f"Richardson extrapolation residual {err:.2e} above {tol:.1e}")
    return float(table[-1])


def _sphere_nodes(n_theta: int = 24, n_psi: int = 48):
    x, w = np.polynomial.legendre.leggauss(n_theta)
    psi = 2 * math.pi * np.arange(n_psi) / n_psi
    ct, ps = np.meshgrid(x, psi, indexing="ij")
    st = np.sqrt(1 - ct * ct)
    dirs = np.stack([st * np.cos(ps), st * np.sin(ps), ct], axis=-1).reshape(-1, 3)
    wts = (w[:, None] * np.full(n_psi, 2 * math.pi / n_psi)[None, :]).reshape(-1)
    return dirs, wts


def extract_point_constant(dirac: DiracData, i: int, r0: Optional[float] = None,
                           tol: float = 1e-6) -> float:
    """c_i = lim (phi_D + 1/(2r)) - m on shrinking spheres, by Richardson."""
    if dirac.charges.charges[i] != 1:
        raise ValueError("point constants are defined for charge-1 points")
    if dirac.method == "closed-form":
        return float(dirac.constants[i])
    p = dirac.charges.array[i]
    dirs, wts = _sphere_nodes(8, 16)
    if r0 is None:
        r0 = dirac.diagnostics.get("extract_radius", 64 * dirac.diagnostics.get("eps_source", 1e-3))

    def avg(r):
        vals = dirac.potential(p + r * dirs) + 1.0 / (2.0 * r) - dirac.mass
        return np.sum(vals * wts) / (4 * math.pi)

    return _richardson_constant(avg, r0, tol=tol)


def flux(dirac: DiracData, center, radius: float, n_theta: int = 48, n_psi: int = 96) -> float:
    """Surface integral of F_D over a coordinate sphere."""
    center = np.asarray(center, dtype=float)
    d = np.linalg.norm(dirac.charges.array - center, axis=-1) if dirac.charges.points else np.array([])
    if np.any(np.abs(d - radius) < 1e-9 * max(1.0, radius)):
        raise DomainError("sphere passes through a charge")
    dirs, wts = _sphere_nodes(n_theta, n_psi)
    x = center + radius * dirs
    g = dirac.model.metric(x)
    ginv = np.linalg.inv(g)
    sq = np.sqrt(np.linalg.det(g))
    grad_up = np.einsum("mij,mj->mi", ginv, dirac.gradient(x))
    # X_theta x X_psi d theta d psi = r^2 xhat d(cos) d psi
    return float(np.sum(wts * sq * radius * radius * np.sum(grad_up * dirs, axis=-1)))


def _angles(d):
    r = np.linalg.norm(d, axis=-1)
    rho = np.hypot(d[..., 0], d[..., 1])
    return r, rho


def dirac_connection(dirac: DiracData, patch: str, point) -> np.ndarray:
    """Two-patch U(1) potential: sum_i k_i (+-1 - cos theta_i) dpsi_i / 2 (+ twist).

    'north' excludes the rays below each charge, 'south' those above.
    """
    if patch not in ("north", "south"):
        raise ValueError("patch must be 'north' or 'south'")
    if not (dirac.model.flat or (dirac.model.radial and dirac.method == "radial-fem")):
        raise NotImplementedError("closed-form patches need a flat or centred radial model")
    x = np.asarray(point, dtype=float)
    sign = 1.0 if patch == "north" else -1.0
    out = np.zeros(x.shape)
    for p, k in zip(dirac.charges.array, dirac.charges.charges):
        d = x - p
        r, rho = _angles(d)
        bad = (rho <= 1e-12 * np.maximum(r, 1e-300)) & (sign * d[..., 2] <= 0)
        if np.any(bad):
            raise DomainError("point on the excluded ray of this patch")
        cos_t = d[..., 2] / r
        dpsi = np.stack([-d[..., 1], d[..., 0], np.zeros_like(r)], axis=-1) / (rho * rho)[..., None]
        out = out + 0.5 * k * (sign - cos_t)[..., None] * dpsi
    if dirac.twist is not None:
        out = out + dirac.twist(x)
    return out


def winding(dirac: DiracData, i: int, radius: float = 0.1, n: int = 256) -> float:
    """Loop integral of (A^+ - A^-) / 2 pi around a small horizontal circle at p_i."""
    p = dirac.charges.array[i]
    t = 2 * math.pi * np.arange(n) / n
    x = p + radius * np.stack([np.cos(t), np.sin(t), np.zeros(n)], axis=-1)
    tang = radius * np.stack([-np.sin(t), np.cos(t), np.zeros(n)], axis=-1)
    diff = dirac_connection(dirac, "north", x) - dirac_connection(dirac, "south", x)
    return float(np.sum(diff * tang) * (2 * math.pi / n) / (2 * math.pi))


def exterior_derivative_1form(fn: Callable, pts: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """(dA)_ij = d_i A_j - d_j A_i by 4th-order differences."""
    from .covariant import stencil_derivative

    d = stencil_derivative(fn, pts, h)
    return d - np.swapaxes(d, -1, -2)


def apply_flat_twist(dirac: DiracData, twist: Optional[Callable], tol: float = 1e-6,
                     samples: int = 64, seed: int = 0) -> DiracData:
    """Shift the connection by a closed 1-form; phi_D and F_D are unchanged.

    All supported models are simply connected, so an admissible twist is
    exact and the result is gauge equivalent to the input.
    """
    if twist is None:
        return dirac
    rng = np.random.default_rng(seed)
    pts = rng.normal(scale=2.0, size=(samples, 3))
    curl = exterior_derivative_1form(twist, pts)
    scale = max(1.0, float(np.max(np.abs(twist(pts)))))
    if np.max(np.abs(curl)) > tol * scale:
        raise ValueError("twist is not closed")
    prev = dirac.twist
    combined = twist if prev is None else (lambda x: prev(x) + twist(x))
    diag = dict(dirac.diagnostics)
    diag["twist_pure_gauge"] = True
    return replace(dirac, twist=combined, diagnostics=diag)


def loop_holonomy(form: Callable, center, radius: float, n: int = 512) -> float:
    t = 2 * math.pi * np.arange(n) / n
    c = np.asarray(center, dtype=float)
    x = c + radius * np.stack([np.cos(t), np.sin(t), np.zeros(n)], axis=-1)
    tang = radius * np.stack([-np.sin(t), np.cos(t), np.zeros(n)], axis=-1)
    return float(np.sum(form(x) * tang) * (2 * math.pi / n))


def minimum_higgs_check(dirac: DiracData, m0: float, n_random: int = 4000, seed: int = 0) -> dict:
    """Sampled min of phi_D (end value m0) off the eps-balls, eps = sqrt(10/(8 m0))."""
    if not m0 > 0:
        raise ValueError("m0 must be positive")
    eps = math.sqrt(10.0 / (8.0 * m0))
    d = dirac.with_mass(m0)
    pts = dirac.charges.array
    dirs, _ = _sphere_nodes(16, 32)
    samples = [p + eps * dirs for p in pts]
    rng = np.random.default_rng(seed)
    span = 1.0 + (np.max(np.abs(pts)) if len(pts) else 0.0)
    cloud = rng.uniform(-2 * span, 2 * span, size=(n_random, 3))
    if len(pts):
        dist = np.min(np.linalg.norm(cloud[:, None] - pts[None], axis=-1), axis=1)
        cloud = cloud[dist > eps]
    samples.append(cloud)
    samples.append(50.0 * span * dirs)
    x = np.concatenate(samples)
    vals = d.potential(x)
    vmin = float(np.min(vals))
    on_spheres = float(np.min(vals[: len(pts) * len(dirs)])) if len(pts) else vmin
    return {"epsilon": eps, "min_value": vmin, "threshold": 0.5 * m0,
            "min_on_ball_boundaries": on_spheres, "pass": bool(vmin >= 0.5 * m0)}


def end_fit(dirac: DiracData, window=(20.0, 80.0), n: int = 16) -> dict:
    """Least-squares fit of the sphere-averaged phi_D to a + b/r on the end."""
    dirs, wts = _sphere_nodes(8, 16)
    radii = np.geomspace(window[0], window[1], n)
    avg = np.array([np.sum(dirac.potential(r * dirs) * wts) / (4 * math.pi) for r in radii])
    mat = np.stack([np.ones_like(radii), 1.0 / radii], axis=1)
    (a, b), *_ = np.linalg.lstsq(mat, avg, rcond=None)
    vol = dirac.model.link.volume
    k_fit = -b * vol / (2 * math.pi)
    return {"m_fit": float(a), "k_fit": float(k_fit), "k_integer": int(round(k_fit)),
            "k_roundoff": float(abs(k_fit - round(k_fit)))}
