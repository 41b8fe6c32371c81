"""Pointwise covariant calculus for su(2) pairs by central differences.

A field or section is an evaluator: a callable taking points of shape (M, 3)
and returning (a, psi) with a of shape (M, 3, 3) (form index, algebra index;
lower-index coordinate components) and psi of shape (M, 3).
"""

from typing import Callable

import numpy as np

from .geometry import EPS3, ManifoldModel, christoffel, ricci
from .su2 import bracket

Evaluator = Callable[[np.ndarray], tuple]

_STENCILS = {
    2: ((-1, -0.5), (1, 0.5)),
    4: ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12)),
    6: ((-3, -1 / 60), (-2, 9 / 60), (-1, -45 / 60), (1, 45 / 60), (2, -9 / 60), (3, 1 / 60)),
}


def stencil_derivative(fn: Callable, pts: np.ndarray, h, order: int = 4) -> tuple:
    """Coordinate derivatives of every array returned by fn.

    Returns arrays shaped (M, 3, ...) with the derivative index second.  All
    shifted points are evaluated in a single call.
    """
    pts = np.asarray(pts, dtype=float)
    m = len(pts)
    h = np.broadcast_to(np.asarray(h, dtype=float), (m,))
    stencil = _STENCILS[order]
    shifted = []
    for k in range(3):
        for off, _ in stencil:
            p = pts.copy()
            p[:, k] += off * h
            shifted.append(p)
    vals = fn(np.concatenate(shifted))
    single = not isinstance(vals, tuple)
    if single:
        vals = (vals,)
    ns = len(stencil)
    out = []
    for v in vals:
        v = v.reshape((3, ns, m) + v.shape[1:])
        w = np.array([c for _, c in stencil]).reshape((1, ns, 1) + (1,) * (v.ndim - 3))
        d = np.sum(v * w, axis=1) / h.reshape((1, m) + (1,) * (v.ndim - 3))
        out.append(np.moveaxis(d, 0, 1))
    return out[0] if single else tuple(out)


def metric_data(model: ManifoldModel, pts: np.ndarray):
    g = model.metric(pts)
    ginv = np.linalg.inv(g)
    sq = np.sqrt(np.linalg.det(g))
    return g, ginv, sq


def star2(ginv, sq, omega):
    """Hodge star of su(2)-valued 2-forms omega[..., i, j, a] -> (..., k, a)."""
    up = np.einsum("mip,mjq,mpqa->mija", ginv, ginv, omega)
    return 0.5 * sq[:, None, None] * np.einsum("ijk,mija->mka", EPS3, up)


def form_norm2(ginv, a):
    """|a|^2 for su(2)-valued 1-forms a[..., i, a]."""
    return np.einsum("mij,mia,mja->m", ginv, a, a)


class Pointwise:
    """Covariant operations over a fixed background (A, Phi) on a model."""

    def __init__(self, model: ManifoldModel, background: Evaluator, h, order: int = 4):
        self.model = model
        self.bg = background
        self.h = h
        self.order = order

    def _step(self, pts):
        h = self.h(pts) if callable(self.h) else self.h
        return np.broadcast_to(np.asarray(h, dtype=float), (len(pts),))

    def _d(self, fn, pts):
        return stencil_derivative(fn, pts, self._step(pts), self.order)

    # --- background quantities -------------------------------------------
    def curvature(self, pts):
        """F_ij (M,3,3,3) and grad Phi (M,3,3) of the background."""
        conn, higgs = self.bg(pts)
        dconn, dhiggs = self._d(self.bg, pts)
        f = (
            dconn
            - np.swapaxes(dconn, 1, 2)
            + bracket(conn[:, :, None, :], conn[:, None, :, :])
        )
        gphi = dhiggs + bracket(conn, higgs[:, None, :])
        return f, gphi, conn, higgs

    def residual(self, pts):
        """Bogomolny error *F - grad Phi as lower-index components."""
        f, gphi, _, _ = self.curvature(pts)
        _, ginv, sq = metric_data(self.model, pts)
        return star2(ginv, sq, f) - gphi

    def residual_norm(self, pts):
        _, ginv, _ = metric_data(self.model, pts)
        return np.sqrt(np.maximum(form_norm2(ginv, self.residual(pts)), 0.0))

    def energy_density(self, pts):
        f, gphi, _, _ = self.curvature(pts)
        _, ginv, _ = metric_data(self.model, pts)
        f2 = 0.5 * np.einsum("mik,mjl,mija,mkla->m", ginv, ginv, f, f)
        return f2 + form_norm2(ginv, gphi)

    # --- linearized operators on sections ---------------------------------
    def _dA_forms(self, u, pts):
        a, psi = u(pts)
        da, dpsi = self._d(u, pts)
        conn, higgs = self.bg(pts)
        ext = da - np.swapaxes(da, 1, 2) + bracket(conn[:, :, None, :], a[:, None, :, :]) - bracket(
            conn[:, None, :, :], a[:, :, None, :]
        )
        cov_psi = dpsi + bracket(conn, psi[:, None, :])
        return a, psi, ext, cov_psi, conn, higgs

    def d2(self, u: Evaluator) -> Evaluator:
        def out(pts):
            a, psi, ext, cov_psi, conn, higgs = self._dA_forms(u, pts)
            _, ginv, sq = metric_data(self.model, pts)
            v = star2(ginv, sq, ext) - cov_psi - bracket(a, higgs[:, None, :])
            return v, np.zeros_like(psi)

        return out

    def d1(self, xi: Callable) -> Evaluator:
        """d1 xi = (-grad xi, -[Phi, xi]) for an algebra-valued function xi."""

        def out(pts):
            x = xi(pts)
            dx = self._d(xi, pts)
            conn, higgs = self.bg(pts)
            return -(dx + bracket(conn, x[:, None, :])), -bracket(higgs, x)

        return out

    def D(self, u: Evaluator) -> Evaluator:
        """D = d2 + d1^*: (a, psi) -> (d2(a, psi), div_A a + [Phi, psi])."""

        def out(pts):
            a, psi, ext, cov_psi, conn, higgs = self._dA_forms(u, pts)
            _, ginv, sq = metric_data(self.model, pts)
            v = star2(ginv, sq, ext) - cov_psi - bracket(a, higgs[:, None, :])
            s = self.divergence(u, pts, a, conn, ginv, sq) + bracket(higgs, psi)
            return v, s

        return out

    def D_adj(self, u: Evaluator) -> Evaluator:
        """D^* = D - 2 ad_Phi."""

        def out(pts):
            a, psi, ext, cov_psi, conn, higgs = self._dA_forms(u, pts)
            _, ginv, sq = metric_data(self.model, pts)
            v = star2(ginv, sq, ext) - cov_psi + bracket(a, higgs[:, None, :])
            s = self.divergence(u, pts, a, conn, ginv, sq) - bracket(higgs, psi)
            return v, s

        return out

    def divergence(self, u, pts, a, conn, ginv, sq):
        """div_A a = sq^-1 d_i(sq g^ij a_j) + g^ij [A_i, a_j]."""

        def density(p):
            aa, _ = u(p)
            _, gi, s = metric_data(self.model, p)
            return s[:, None, None] * np.einsum("mij,mja->mia", gi, aa)

        dx = self._d(density, pts)
        div = np.einsum("miia->ma", dx) / sq[:, None]
        return div + np.einsum("mij,mija->ma", ginv, bracket(conn[:, :, None, :], a[:, None, :, :]))

    def rough_laplacian(self, u: Evaluator) -> Evaluator:
        model = self.model

        def grad(p):
            a, psi = u(p)
            da, dpsi = self._d(u, p)
            conn, _ = self.bg(p)
            gam = christoffel(model, p)
            ta = da - np.einsum("mlij,mla->mija", gam, a) + bracket(conn[:, :, None, :], a[:, None, :, :])
            tp = dpsi + bracket(conn, psi[:, None, :])
            return ta, tp

        def out(pts):
            ta, tp = grad(pts)
            dta, dtp = self._d(grad, pts)
            conn, _ = self.bg(pts)
            gam = christoffel(model, pts)
            _, ginv, _ = metric_data(model, pts)
            na = (
                dta
                - np.einsum("mlki,mlja->mkija", gam, ta)
                - np.einsum("mlkj,mila->mkija", gam, ta)
                + bracket(conn[:, :, None, None, :], ta[:, None, :, :, :])
            )
            npsi = dtp - np.einsum("mlij,mla->mija", gam, tp) + bracket(conn[:, :, None, :], tp[:, None, :, :])
            return -np.einsum("mij,mijka->mka", ginv, na), -np.einsum("mij,mija->ma", ginv, npsi)

        return out

    def weitzenbock(self, u: Evaluator, pts, which: str = "DDstar"):
        """Both sides of the Weitzenbock identities at pts.

        which = "DDstar": D D^* u = rough(u) - [[u,Phi],Phi] + Ric^W(u) + e^W(u)
        which = "DstarD": D^* D u = D D^* u + 2 (grad Phi)^W(u)
        Returns (lhs, rhs) as pairs of arrays.
        """
        model = self.model
        a, psi = u(pts)
        conn, higgs = self.bg(pts)
        _, ginv, sq = metric_data(model, pts)
        if which == "DDstar":
            lhs = self.D(self.D_adj(u))(pts)
            ra, rp = self.rough_laplacian(u)(pts)
            hh = higgs[:, None, :]
            ra = ra - bracket(bracket(a, hh), hh)
            rp = rp - bracket(bracket(psi, higgs), higgs)
            ric = ricci(model, pts)
            ra = ra + np.einsum("mkl,mlj,mja->mka", ric, ginv, a)
            ba, bp = self.bracket_action(self.residual(pts), a, psi, ginv, sq)
            return lhs, (ra + ba, rp + bp)
        if which == "DstarD":
            lhs = self.D_adj(self.D(u))(pts)
            rhs = self.D(self.D_adj(u))(pts)
            _, gphi, _, _ = self.curvature(pts)
            ba, bp = self.bracket_action(gphi, a, psi, ginv, sq)
            return lhs, (rhs[0] + 2 * ba, rhs[1] + 2 * bp)
        raise ValueError(which)

    @staticmethod
    def bracket_action(b, a, psi, ginv, sq):
        """b^W(a, psi) = (*[a ^ b] - [b, psi], <b, a>) for a 1-form b."""
        a_up = np.einsum("mij,mja->mia", ginv, a)
        b_up = np.einsum("mij,mja->mia", ginv, b)
        first = sq[:, None, None] * np.einsum(
            "ijk,mija->mka", EPS3, bracket(a_up[:, :, None, :], b_up[:, None, :, :])
        ) - bracket(b, psi[:, None, :])
        second = np.einsum("mij,mija->ma", ginv, bracket(b[:, :, None, :], a[:, None, :, :]))
        return first, second
