"""Spherically symmetric backend: k = 1 at the origin of a radial metric.

Fields are hedgehogs Phi = -phi(r) xhat, A = (1 - w(r))/(2r) eps xhat on
g = f^2 dr^2 + r^2 g_S2.  In an orthonormal frame the Bogomolny error has
one radial component e_r (algebra along xhat) and two equal transverse ones
e_t:

    e_r = (1 - w^2)/(2 r^2) - phi'/f,   e_t = -w'/(2 r f) - phi w / r,

with |e|^2 = e_r^2 + 2 e_t^2.  A state is an analytic base profile plus a
nodal correction; the discrete residual lives at interval midpoints and is
exactly quadratic in the correction.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline

from .bps import profile_1mw_over_s2, profile_h, profile_w
from .geometry import EPS3, ManifoldModel

_GL = np.polynomial.legendre.leggauss(16)


def geodesic_radius(model: ManifoldModel, r) -> np.ndarray:
    """s(r) = int_0^r f by Gauss-Legendre panels between sorted breakpoints."""
    r = np.asarray(r, dtype=float)
    if model.flat:
        return r.copy()
    flat = r.ravel()
    top = max(float(flat.max(initial=0.0)), 1e-3)
    brk = np.geomspace(1e-3, top, max(2, int(8 * math.log(top / 1e-3)) + 2))
    pts = np.concatenate([[0.0], flat, brk])
    order = np.argsort(pts, kind="stable")
    sp_ = pts[order]
    a, b = sp_[:-1], sp_[1:]
    x, w = _GL
    q = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x
    seg = 0.5 * (b - a) * np.sum(w * (model.radial_factor(q) - 1.0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    excess = np.empty_like(cum)
    excess[order] = cum
    return (flat + excess[1 : 1 + flat.size]).reshape(r.shape)


def smoothstep(t):
    """Quintic C^2 step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def smoothstep_slope(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    return np.where(inside, 30.0 * t * t * (1.0 - t) ** 2, 0.0)


@dataclass(frozen=True)
class RadialProfile:
    """Glued base: chi_in * BPS(lam) in geodesic radius + chi_out * Dirac.

    dirac(r) and dirac_slope(r) give phi_D and phi_D' (end value m0); either
    may be None for a pure BPS profile (eps_in = inf).
    """

    model: ManifoldModel
    lam: float
    eps_in: float
    eps_out: float
    dirac: Optional[Callable] = field(default=None, compare=False)
    dirac_slope: Optional[Callable] = field(default=None, compare=False)

    def _s(self, r):
        return geodesic_radius(self.model, r)

    def _cut(self, s):
        if math.isinf(self.eps_in):
            return np.ones_like(s), np.zeros_like(s)
        width = self.eps_out - self.eps_in
        t = (s - self.eps_in) / width
        return 1.0 - smoothstep(t), -smoothstep_slope(t) / width

    def evaluate(self, r):
        """w, phi, 1 - w^2 over r^2, w', phi' at radii r > 0."""
        r = np.asarray(r, dtype=float)
        s = self._s(r)
        ds = self.model.radial_factor(r)
        chi, dchi = self._cut(s)
        lam = self.lam
        x = 2.0 * lam * s
        q = profile_w(x)
        one_m_q_over = 4.0 * lam * lam * profile_1mw_over_s2(x)  # (1 - q)/s^2
        h = profile_h(x)
        phi_b = lam * h
        # d/ds of q(2 lam s) = -2 lam h q ; of lam h(2 lam s) = 2 lam^2 (1-q^2)/x^2
        dq = -2.0 * lam * h * q
        dphi_b = 0.5 * one_m_q_over * (1.0 + q)
        w = chi * q
        # regular form of (1 - w)(1 + w)/r^2 near the centre, where chi = 1
        safe = np.where(r > 1e-100, r, 1.0)
        s_over_r = np.where(r > 1e-100, s / safe, ds)
        one_m_w2_r2 = ((1.0 - chi) / (safe * safe) + chi * one_m_q_over * s_over_r ** 2) * (1.0 + w)
        dw = (dchi * q + chi * dq) * ds
        if self.dirac is None:
            phi = phi_b
            dphi = dphi_b * ds
        else:
            safe = np.where(chi < 1.0, r, max(self.eps_in, 1e-12) * 1.5)
            pd = np.where(chi < 1.0, self.dirac(safe), 0.0)
            dpd = np.where(chi < 1.0, self.dirac_slope(safe), 0.0)
            phi = chi * phi_b + (1.0 - chi) * pd
            dphi = dchi * ds * (phi_b - pd) + chi * dphi_b * ds + (1.0 - chi) * dpd
        return w, phi, one_m_w2_r2, dw, dphi

    def residual(self, r):
        """(e_r, e_t) of the base profile at r > 0."""
        r = np.asarray(r, dtype=float)
        w, phi, omw2, dw, dphi = self.evaluate(r)
        f = self.model.radial_factor(r)
        return 0.5 * omw2 - dphi / f, -dw / (2.0 * r * f) - phi * w / r

    def fields(self, r):
        w, phi, _, _, _ = self.evaluate(r)
        return w, phi


def pure_bps_profile(model: ManifoldModel, lam: float) -> RadialProfile:
    return RadialProfile(model, lam, math.inf, math.inf)


class EvenSpline:
    """Cubic spline in s = r^2, so interpolants are even in r and smooth at 0."""

    def __init__(self, nodes, values):
        self._sp = CubicSpline(np.asarray(nodes) ** 2, values)

    def __call__(self, r, nu: int = 0):
        r = np.asarray(r, dtype=float)
        if nu == 0:
            return self._sp(r * r)
        if nu == 1:
            return 2.0 * r * self._sp(r * r, 1)
        raise ValueError("only value and first derivative")


class RadialGrid:
    """Nodes r_0 = 0 < r_1 < ... < r_N, geometric from r_1; midpoints carry residuals."""

    def __init__(self, model: ManifoldModel, r_first: float, r_max: float, ratio: float = 1.01):
        n = int(math.ceil(math.log(r_max / r_first) / math.log(ratio)))
        self.model = model
        self.nodes = np.concatenate([[0.0], np.geomspace(r_first, r_max, n + 1)])
        self.h = np.diff(self.nodes)
        self.mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        self.f_mid = model.radial_factor(self.mid)
        self.vol_mid = model.link.volume * self.f_mid * self.mid ** 2 * self.h
        self.n = len(self.nodes) - 1  # number of intervals

    @property
    def unknowns(self) -> int:
        return 2 * self.n + 1

    def split(self, x: np.ndarray):
        """Unknown vector -> nodal (dw, dphi); dw_0 = 0 is imposed."""
        n = self.n
        dw = np.concatenate([[0.0], x[:n]])
        return dw, x[n:]

    def join(self, dw: np.ndarray, dphi: np.ndarray) -> np.ndarray:
        return np.concatenate([dw[1:], dphi])

    def _weights(self, even: bool):
        if not even:
            return np.full(self.n, 0.5)
        a, b = self.nodes[:-1], self.nodes[1:]
        return 0.5 * (self.mid + a) / (b + a)

    def mid_values(self, v: np.ndarray, even: bool = False) -> np.ndarray:
        t = self._weights(even)
        return (1.0 - t) * v[:-1] + t * v[1:]

    def averaging(self, even: bool = False) -> sp.csr_matrix:
        """Midpoint values; linear in r^2 for even profiles (w), in r for odd ones (phi)."""
        n = self.n
        t = self._weights(even)
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        vals = np.stack([1.0 - t, t], axis=1).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))

    def difference(self) -> sp.csr_matrix:
        n = self.n
        rows = np.repeat(np.arange(n), 2)
        cols = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1).ravel()
        vals = np.stack([-1.0 / self.h, 1.0 / self.h], axis=1).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))


@dataclass(frozen=True)
class RadialState:
    """Base profile plus nodal correction (dw, dphi) on a grid."""

    grid: RadialGrid = field(compare=False)
    base: RadialProfile = field(compare=False)
    dw: np.ndarray = field(compare=False)
    dphi: np.ndarray = field(compare=False)
    meta: dict = field(default_factory=dict, compare=False)
    backend: str = "Radial"

    @classmethod
    def from_profile(cls, grid: RadialGrid, base: RadialProfile, meta=None):
        z = np.zeros(grid.n + 1)
        return cls(grid, base, z, z.copy(), dict(meta or {}))

    @property
    def model(self) -> ManifoldModel:
        return self.grid.model

    def with_correction(self, x: np.ndarray) -> "RadialState":
        dw, dphi = self.grid.split(x)
        return replace(self, dw=self.dw + dw, dphi=self.dphi + dphi)

    def correction_vector(self) -> np.ndarray:
        return self.grid.join(self.dw, self.dphi)

    # --- midpoint quantities --------------------------------------------
    def base_mid(self):
        g = self.grid
        w, phi, omw2, dw, dphi = self.base.evaluate(g.mid)
        return w, phi, omw2, dw, dphi

    def _corr_mid(self, dw, dphi):
        g = self.grid
        return g.mid_values(dw, True), g.mid_values(dphi), np.diff(dw) / g.h, np.diff(dphi) / g.h

    def residual_mid(self) -> tuple:
        """(e_r, e_t) at midpoints for base + correction (exact quadratic expansion)."""
        g = self.grid
        w, phi, omw2, dw, dphi = self.base_mid()
        e_r = 0.5 * omw2 - dphi / g.f_mid
        e_t = -dw / (2 * g.mid * g.f_mid) - phi * w / g.mid
        cw, cp, cdw, cdp = self._corr_mid(self.dw, self.dphi)
        lin_r, lin_t = linear_terms(g, w, phi, cw, cp, cdw, cdp)
        q_r, q_t = quadratic_terms(g, cw, cp, cw, cp)
        return e_r + lin_r + q_r, e_t + lin_t + q_t

    def residual_vector(self) -> np.ndarray:
        return np.concatenate(self.residual_mid())

    def nodal_fields(self):
        r = self.grid.nodes
        w = np.empty_like(r)
        phi = np.empty_like(r)
        w[0], phi[0] = 1.0, 0.0
        w[1:], phi[1:] = self.base.fields(r[1:])
        return w + self.dw, phi + self.dphi

    def profiles(self):
        """Callables r -> (w, phi) using base profile plus spline-interpolated correction."""
        nodes = self.grid.nodes
        sw, sp_ = EvenSpline(nodes, self.dw), CubicSpline(nodes, self.dphi)
        base = self.base

        def fields(r):
            r = np.asarray(r, dtype=float)
            safe = np.maximum(r, 1e-300)
            w, phi = base.fields(safe)
            w = np.where(r > 0, w, 1.0)
            phi = np.where(r > 0, phi, 0.0)
            rc = np.minimum(r, nodes[-1])
            return w + sw(rc), phi + sp_(rc)

        return fields

    def evaluator(self, center=(0.0, 0.0, 0.0), base_only: bool = False) -> Callable:
        """3D hedgehog-gauge evaluator pts -> (A, Phi) of this state."""
        fields = self.profiles() if not base_only else hedgehog_profile(self.base)
        c = np.asarray(center, dtype=float)

        def ev(pts):
            x = np.asarray(pts, dtype=float) - c
            r = np.linalg.norm(x, axis=-1)
            w, phi = fields(r)
            safe = np.where(r > 0, r, 1.0)
            higgs = -(phi / safe)[..., None] * x
            conn = ((1.0 - w) / (2.0 * safe * safe))[..., None, None] * np.einsum("aij,...j->...ia", EPS3, x)
            return conn, higgs

        return ev


def hedgehog_profile(base: RadialProfile) -> Callable:
    """r -> (w, phi) of the analytic profile, regular at r = 0."""

    def fields(r):
        r = np.asarray(r, dtype=float)
        w, phi = base.fields(np.maximum(r, 1e-300))
        return np.where(r > 0, w, 1.0), np.where(r > 0, phi, 0.0)

    return fields


def linear_terms(grid: RadialGrid, w, phi, cw, cp, cdw, cdp):
    r, f = grid.mid, grid.f_mid
    lin_r = -w * cw / (r * r) - cdp / f
    lin_t = -cdw / (2 * r * f) - (phi * cw + w * cp) / r
    return lin_r, lin_t


def quadratic_terms(grid: RadialGrid, aw, ap, bw, bp):
    """Symmetrised quadratic part N(a, b) at midpoints."""
    r = grid.mid
    return -aw * bw / (2 * r * r), -(ap * bw + bp * aw) / (2 * r)


def jacobian(state: RadialState) -> sp.csr_matrix:
    """Matrix of the linearisation d_2 at the base profile, unknowns -> residual rows."""
    g = state.grid
    w, phi, _, _, _ = state.base_mid()
    avg, dif = g.averaging(), g.difference()
    r, f = g.mid, g.f_mid
    dg = sp.diags
    # columns for dw exclude node 0
    avg_w, dif_w = g.averaging(True)[:, 1:], dif[:, 1:]
    rr = sp.hstack([dg(-w / (r * r)) @ avg_w, dg(-1.0 / f) @ dif])
    tt = sp.hstack([dg(-1.0 / (2 * r * f)) @ dif_w + dg(-phi / r) @ avg_w, dg(-w / r) @ avg])
    return sp.vstack([rr, tt]).tocsr()


def nonlinear_vector(state: RadialState, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    g = state.grid
    aw, ap = g.split(xa)
    bw, bp = g.split(xb)
    return np.concatenate(quadratic_terms(g, g.mid_values(aw, True), g.mid_values(ap),
                                          g.mid_values(bw, True), g.mid_values(bp)))


def residual_norm_mid(e_r, e_t):
    return np.sqrt(e_r * e_r + 2 * e_t * e_t)


def energy(state: RadialState, tail: bool = True) -> dict:
    """Bulk energy int |F|^2 + |grad Phi|^2 and the flux form 2 <Phi, *F> on the outer sphere."""
    g = state.grid
    w, phi, omw2, dw, dphi = state.base_mid()
    cw, cp, cdw, cdp = state._corr_mid(state.dw, state.dphi)
    r, f = g.mid, g.f_mid
    W, P = w + cw, phi + cp
    dW, dP = dw + cdw, dphi + cdp
    omw2_tot = omw2 - (2 * w * cw + cw * cw) / (r * r)
    dens = (0.5 * omw2_tot) ** 2 + 2 * (dW / (2 * r * f)) ** 2 + (dP / f) ** 2 + 2 * (P * W / r) ** 2
    bulk = float(np.sum(dens * g.vol_mid))
    R = g.nodes[-1]
    wR, pR = state.nodal_fields()
    vol = g.model.link.volume
    flux_form = float(2.0 * vol * R * R * pR[-1] * (1 - wR[-1] ** 2) / (2 * R * R))
    out = {"bulk": bulk, "flux": flux_form, "outer_radius": float(R)}
    if tail:
        # beyond R the field is abelian: E_tail = 2 Vol (m - phi(R)) * (1/2) to leading order
        m_end = state.meta.get("mass")
        if m_end is not None:
            out["bulk_with_tail"] = bulk + vol * (m_end - pR[-1]) * (1 - wR[-1] ** 2)
            out["flux_at_infinity"] = vol * m_end
    return out
