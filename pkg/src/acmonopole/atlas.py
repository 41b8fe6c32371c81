"""Glued approximate solutions in 3D on an atlas of hedgehog-gauge charts.

Chart i covers the Voronoi cell of the i-th point.  In it the Dirac field is
the charge-one hedgehog with w = 0 (Higgs direction -x_hat about the point)
plus b_i (x) sigma, where b_i is the abelian potential of the remaining flux,

    d b_i = *_g d phi_D - *_flat d(-1/(2 r_i)),

obtained from the radial homotopy formula about the point.  Segments from the
point to anywhere in its cell avoid the other points, so each chart is
smooth on its cell.  Relative framing phases act on the overlaps by parallel
gauge transformations of the reducible field and are invisible to every
gauge-invariant quantity computed here.
"""

from dataclasses import dataclass, field

import numpy as np

from .abelian import DiracData
from .bps import profile_1mw_over_s2, profile_h_over_s
from .covariant import Pointwise, metric_data
from .geometry import EPS3, ManifoldModel
from .radial import geodesic_radius, smoothstep

_GL16 = np.polynomial.legendre.leggauss(16)


def _fold_forms(ginv, sq, grad):
    """2-form *_g grad as antisymmetric components (M, 3, 3)."""
    up = np.einsum("mij,mj->mi", ginv, grad)
    return sq[:, None, None] * np.einsum("ijk,mi->mjk", EPS3, up)


@dataclass
class Chart:
    index: int
    center: np.ndarray
    lam: float
    eps_in: float
    eps_out: float
    phase: float = 0.0

    def describe(self) -> dict:
        return {"index": self.index, "center": self.center.tolist(), "lambda": self.lam,
                "eps_in": self.eps_in, "eps_out": self.eps_out, "phase": self.phase,
                "gauge": "hedgehog", "region": "voronoi"}


@dataclass
class AtlasState:
    model: ManifoldModel
    dirac: DiracData
    charts: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        flat = self.model.flat
        single = len(self.charts) == 1 and np.allclose(self.charts[0].center, 0.0)
        if not flat and not (self.model.radial and single):
            raise NotImplementedError("curved 3D atlas needs one charge at the origin of a radial metric")
        self._centers = np.array([c.center for c in self.charts])

    # --- geometry of the charts ------------------------------------------------
    def chart_index(self, pts) -> np.ndarray:
        d = np.linalg.norm(np.asarray(pts, dtype=float)[:, None, :] - self._centers[None], axis=-1)
        return np.argmin(d, axis=1)

    def _radius(self, r):
        return geodesic_radius(self.model, r) if not self.model.flat else r

    def abelian_potential(self, i: int, pts) -> np.ndarray:
        """b_i at pts (M, 3) by 16-point Gauss-Legendre in the homotopy parameter."""
        c = self.charts[i].center
        y = np.asarray(pts, dtype=float) - c
        m = len(y)
        x, w = _GL16
        t = 0.5 * (x + 1.0)
        wt = 0.5 * w
        q = (c + t[:, None, None] * y[None]).reshape(-1, 3)
        grad = self.dirac.gradient(q)
        _, ginv, sq = metric_data(self.model, q)
        omega = _fold_forms(ginv, sq, grad)
        rq = q - c
        r3 = np.maximum(np.linalg.norm(rq, axis=-1), 1e-300) ** 3
        # flat star of d(-1/(2r)) = star of x/(2 r^3)
        omega -= np.einsum("ijk,mi->mjk", EPS3, rq / (2.0 * r3[:, None]))
        omega = omega.reshape(len(t), m, 3, 3)
        # b_k = int_0^1 t y^j omega_jk(c + t y) dt
        return np.einsum("q,q,qmjk,mj->mk", wt, t, omega, y)

    def chart_evaluator(self, i: int):
        ch = self.charts[i]
        lam, e_in, e_out = ch.lam, ch.eps_in, ch.eps_out
        dirac = self.dirac
        needs_b = len(self.charts) > 1

        def ev(pts):
            pts = np.asarray(pts, dtype=float)
            y = pts - ch.center
            r = np.linalg.norm(y, axis=-1)
            s = self._radius(r)
            ratio = np.where(r > 0, s / np.where(r > 0, r, 1.0), 1.0)
            t = (s - e_in) / (e_out - e_in)
            chi = 1.0 - smoothstep(t)
            x = 2.0 * lam * s
            safe = np.where(r > 0, r, 1.0)
            # (1 - w)/(2 r^2) with w = chi q, regular at the centre
            c_over = (1.0 - chi) / (2.0 * safe * safe) + chi * 2.0 * lam * lam * profile_1mw_over_s2(x) * ratio ** 2
            out = chi < 1.0
            pd = np.zeros_like(r)
            if out.any():
                pd[out] = dirac.potential(pts[out])
            phi_over = chi * 2.0 * lam * lam * profile_h_over_s(x) * ratio + (1.0 - chi) * pd / safe
            higgs = -phi_over[:, None] * y
            conn = c_over[:, None, None] * np.einsum("aij,mj->mia", EPS3, y)
            sel = np.nonzero(out)[0]
            if needs_b and len(sel):
                b = self.abelian_potential(i, pts[sel])
                sigma = -y[sel] / safe[sel, None]
                conn[sel] += (1.0 - chi[sel])[:, None, None] * b[:, :, None] * sigma[:, None, :]
            return conn, higgs

        return ev

    # --- gauge-invariant diagnostics --------------------------------------------
    def _grouped(self, pts, fn):
        pts = np.asarray(pts, dtype=float)
        idx = self.chart_index(pts)
        out = np.empty(len(pts))
        for i in range(len(self.charts)):
            sel = idx == i
            if sel.any():
                out[sel] = fn(i, pts[sel])
        return out

    def residual_norm(self, pts, h=1e-3, order: int = 4) -> np.ndarray:
        return self._grouped(pts, lambda i, p: Pointwise(self.model, self.chart_evaluator(i), h, order).residual_norm(p))

    def energy_density(self, pts, h=1e-3, order: int = 4) -> np.ndarray:
        return self._grouped(pts, lambda i, p: Pointwise(self.model, self.chart_evaluator(i), h, order).energy_density(p))

    def higgs_modulus(self, pts) -> np.ndarray:
        return self._grouped(pts, lambda i, p: np.linalg.norm(self.chart_evaluator(i)(p)[1], axis=-1))

    def evaluator(self):
        """Single evaluator choosing the chart of each point (not for stencils across cells)."""

        def ev(pts):
            pts = np.asarray(pts, dtype=float)
            idx = self.chart_index(pts)
            conn = np.empty((len(pts), 3, 3))
            higgs = np.empty((len(pts), 3))
            for i in range(len(self.charts)):
                sel = idx == i
                if sel.any():
                    conn[sel], higgs[sel] = self.chart_evaluator(i)(pts[sel])
            return conn, higgs

        return ev

    def describe(self) -> list:
        return [c.describe() for c in self.charts]


def assemble_atlas(model: ManifoldModel, params, dirac: DiracData) -> AtlasState:
    d = dirac.with_mass(params.m0)
    charts = [Chart(i, np.asarray(p, dtype=float), float(params.lambdas[i]), float(params.eps_in[i]),
                    float(params.eps_out[i]), float(params.phases[i]))
              for i, p in enumerate(params.charges.array)]
    meta = {"mass": params.m0, "charges": list(params.charges.charges), "backend": "atlas3d"}
    return AtlasState(model, d, charts, meta)


def error_term_3d(state: AtlasState, per_chart: int = 4000, seed: int = 0, h=1e-3, order: int = 4) -> dict:
    """Sup of the base error over random samples in each outer ball and its support."""
    rng = np.random.default_rng(seed)
    sup, arg, support = 0.0, None, 0.0
    for ch in state.charts:
        u = rng.normal(size=(per_chart, 3))
        u /= np.linalg.norm(u, axis=-1)[:, None]
        rad = ch.eps_out * 1.2 * rng.random(per_chart) ** (1.0 / 3.0)
        rad = np.concatenate([rad, np.linspace(ch.eps_in, ch.eps_out, 64)])
        u = np.concatenate([u, np.tile([[0.0, 0.0, 1.0]], (64, 1))])
        pts = ch.center + rad[:, None] * u
        mag = state.residual_norm(pts, h, order)
        j = int(np.argmax(mag))
        if mag[j] > sup:
            sup, arg = float(mag[j]), pts[j].tolist()
        big = mag > 1e-8 * max(mag.max(), 1e-300)
        if big.any():
            support = max(support, float(rad[big].max()))
    m0 = state.meta["mass"]
    return {"sup": sup, "argmax": arg, "support_radius": support, "rescaled_sup": sup / m0 ** 2,
            "mass": m0}
