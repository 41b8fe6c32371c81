"""Linearised Bogomolny operator, weighted norms and the right inverse Q."""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .radial import RadialState, jacobian

DEFAULT_BETA = -0.5


class IllConditionedError(ArithmeticError):
    def __init__(self, msg, probe=None):
        super().__init__(msg)
        self.probe = probe


class IntegrabilityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class WeightedNormSpec:
    n: int
    beta: float
    m0: float
    points: tuple = ((0.0, 0.0, 0.0),)
    eps_out: tuple = ()
    core: float = 1.0
    literal_ball_weights: bool = False

    def __post_init__(self):
        if not self.eps_out:
            object.__setattr__(self, "eps_out", (2.0 / math.sqrt(self.m0),) * len(self.points))

    def weight(self, j: int, dist, rho):
        """W_j from the distance to the nearest point and the radius function."""
        return weight_function(j, self.beta, self.m0, min(self.eps_out), self.core, dist, rho,
                               self.literal_ball_weights)


def weight_function(j: int, beta: float, m0: float, eps_out: float, core: float, dist, rho,
                    literal_ball_weights: bool = False):
    """W_j: a power of m0 on the balls, 1 at unit distance, rho^(j - beta - 3/2) on the end.

    On the balls W_j = m0^(-2-j), the scaling of the 1/m0-rescaled norm (one
    more power per derivative).  literal_ball_weights selects m0^(-2+j).
    """
    dist = np.asarray(dist, dtype=float)
    rho = np.asarray(rho, dtype=float)
    inner = m0 ** (-2.0 + j) if literal_ball_weights else m0 ** (-2.0 - j)
    p = j - beta - 1.5
    # ball regime, log-linear in log(dist) between eps_out and 1
    if eps_out < 1.0:
        t = np.clip(np.log(np.maximum(dist, 1e-300) / eps_out) / math.log(1.0 / eps_out), 0.0, 1.0)
    else:
        # no room for the ramp: the inner weight holds on the whole ball
        t = np.zeros_like(dist)
    ball = np.exp((1.0 - t) * math.log(inner))
    # end regime, log-linear in log(rho) between core and 2 core
    s = np.clip(np.log(np.maximum(rho, 1e-300) / core) / math.log(2.0), 0.0, 1.0)
    end = np.exp(s * p * math.log(2.0 * core)) if core > 0 else rho ** p
    end = np.where(rho >= 2 * core, rho ** p, end)
    return np.where(dist < 1.0, ball, end)


# --- radial backend -------------------------------------------------------

class RadialLinear:
    """d_2 at a radial base state with weighted Gram matrices and the right inverse."""

    def __init__(self, state: RadialState, beta: float = DEFAULT_BETA, rtol: float = 1e-10,
                 literal_ball_weights: bool = False):
        self.state = state
        self.beta = beta
        self.rtol = rtol
        g = state.grid
        self.d2 = jacobian(state)
        m0 = state.meta.get("mass", state.base.lam)
        eps_out = state.meta.get("eps_out", 2.0 / math.sqrt(m0))
        self.m0 = m0
        r = g.mid
        w, phi, _, _, _ = state.base_mid()
        self._w, self._phi = w, phi
        wt = lambda j, b: weight_function(j, b, m0, eps_out, g.model.compact_core_radius, r, r,
                                          literal_ball_weights)
        inside = r < 1.0
        # target H_{0, beta-1}
        w0g = wt(0, beta - 1.0)
        perp_g = np.where(inside, w0g ** 2, 1.0)
        self.mass_g = sp.diags(np.concatenate([g.vol_mid * w0g ** 2, 2.0 * g.vol_mid * perp_g])).tocsc()
        # domain H_{1, beta}
        self.mass_u = self._gram_u(wt(0, beta), wt(1, beta), inside).tocsc()
        self._lu_u = splu(self.mass_u)
        self._precond = None

    def _gram_u(self, w0, w1, inside):
        g = self.state.grid
        r, f, vol = g.mid, g.f_mid, g.vol_mid
        w, phi = self._w, self._phi
        n = g.n
        avg, dif = g.averaging(), g.difference()
        z_w = sp.csr_matrix((n, n + 1))
        aw = sp.hstack([g.averaging(True)[:, 1:], z_w])  # avg dw
        dw_ = sp.hstack([dif[:, 1:], z_w])
        ap = sp.hstack([sp.csr_matrix((n, n)), avg])
        dp = sp.hstack([sp.csr_matrix((n, n)), dif])
        perp0 = np.where(inside, w0 ** 2, 4.0 * phi * phi)
        perp1 = np.where(inside, w1 ** 2, 1.0)
        terms = [
            (aw, vol * perp0 / (2 * r * r)),  # |a|^2 or |ad_Phi a|^2
            (ap, vol * w0 ** 2),  # |psi|^2
            (dp.multiply(1.0 / f[:, None]).tocsr(), vol * w1 ** 2),  # radial part of |grad psi|^2
            (ap, vol * w1 ** 2 * 2 * w * w / (r * r)),
            ((dw_.multiply(1.0 / f[:, None]) - aw.multiply(1.0 / r[:, None])).tocsr(), vol * perp1 / (2 * r * r)),
            (aw, vol * perp1 * (1 + w * w) / (2 * r ** 4)),
        ]
        out = None
        for mat, c in terms:
            piece = mat.T @ sp.diags(c) @ mat
            out = piece if out is None else out + piece
        return out

    # --- norms and adjoint ---------------------------------------------------
    def norm_u(self, x) -> float:
        return float(math.sqrt(max(x @ (self.mass_u @ x), 0.0)))

    def norm_g(self, y) -> float:
        return float(math.sqrt(max(y @ (self.mass_g @ y), 0.0)))

    def apply_d2(self, x):
        return self.d2 @ x

    def apply_d2_adj(self, y):
        """Adjoint in the weighted inner products: M_u^-1 d2^T M_g."""
        return self._lu_u.solve(self.d2.T @ (self.mass_g @ y))

    def _normal(self):
        d2 = self.d2
        lu = self._lu_u
        n = d2.shape[0]
        return LinearOperator((n, n), matvec=lambda v: d2 @ lu.solve(d2.T @ v), dtype=float)

    def _preconditioner(self):
        """Exact inverse of the normal operator via the sparse saddle-point system.

        [[M_u, d2^T], [d2, 0]] (u, -eta) = (0, y) gives eta = (d2 M_u^-1 d2^T)^-1 y.
        """
        if self._precond is None:
            d2, mu = self.d2, self.mass_u
            n_u, n_g = d2.shape[1], d2.shape[0]
            kkt = sp.bmat([[mu, d2.T], [d2, None]]).tocsc()
            lu = splu(kkt)

            def apply(v):
                sol = lu.solve(np.concatenate([np.zeros(n_u), v]))
                return -sol[n_u:]

            self._precond = LinearOperator((n_g, n_g), matvec=apply, dtype=float)
        return self._precond

    def right_inverse(self, y, maxiter: int = 2000) -> dict:
        """Minimal-norm u with d2 u = y (u in the image of the weighted adjoint)."""
        y = np.asarray(y, dtype=float)
        if not np.any(y):
            return {"u": np.zeros(self.d2.shape[1]), "iterations": 0, "relative_residual": 0.0}
        its = [0]

        def count(_):
            its[0] += 1

        eta, info = cg(self._normal(), y, rtol=self.rtol, atol=0.0, maxiter=maxiter,
                       M=self._preconditioner(), callback=count)
        u = self._lu_u.solve(self.d2.T @ eta)
        rel = self.norm_g(self.d2 @ u - y) / self.norm_g(y)
        if info != 0 or not np.isfinite(rel):
            raise IllConditionedError(
                f"CG stagnated after {its[0]} iterations (relative residual {rel:.2e})",
                probe=self.spectrum_probe())
        return {"u": u, "iterations": its[0], "relative_residual": rel}

    def spectrum_probe(self, k: int = 4) -> dict:
        from scipy.sparse.linalg import eigsh

        op = self._normal()
        hi = eigsh(op, k=1, which="LA", return_eigenvectors=False, maxiter=2000)
        return {"largest": float(hi[0])}


# --- Q operator-norm proxies -----------------------------------------------

def source_family(count: int = 10, seed: int = 0, r_range=(0.05, 5.0)) -> list:
    """Fixed smooth radial sources (centre, width in log r, e_r and e_t amplitudes)."""
    rng = np.random.default_rng(seed)
    lo, hi = (math.log(x) for x in r_range)
    return [(math.exp(rng.uniform(lo, hi)), rng.uniform(0.3, 1.0), *rng.normal(size=2)) for _ in range(count)]


def sample_source(lin: RadialLinear, source) -> np.ndarray:
    c, width, a, b = source
    r = lin.state.grid.mid
    bump = np.exp(-0.5 * (np.log(r / c) / width) ** 2)
    return np.concatenate([a * bump, b * bump])


def q_ratios(lin: RadialLinear, sources) -> dict:
    """||Qg||_{H_{1,beta}} / ||g||_{H_{0,beta-1}} and ||d2 Qg - g|| / ||g|| per source."""
    ratios, residuals = [], []
    for src in sources:
        y = sample_source(lin, src) if isinstance(src, tuple) else np.asarray(src)
        res = lin.right_inverse(y)
        ratios.append(lin.norm_u(res["u"]) / lin.norm_g(y))
        residuals.append(res["relative_residual"])
    return {"ratios": ratios, "max_ratio": max(ratios), "max_relative_residual": max(residuals)}


def ball_scale_ratio(lin: RadialLinear) -> float:
    """Worst ratio over sources adapted to the BPS core (width ~ 1/lambda)."""
    lam = lin.state.base.lam
    srcs = [(s / lam, 0.5, a, b) for s in (0.25, 0.5, 1.0, 2.0) for a, b in ((1.0, 0.0), (0.0, 1.0))]
    return q_ratios(lin, srcs)["max_ratio"]


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def adjointness_defect(lin: RadialLinear, seed: int = 0) -> float:
    """|<d2 u, v>_g - <u, d2^* v>_u| relative to ||d2 u|| ||v||."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=lin.d2.shape[1])
    v = rng.normal(size=lin.d2.shape[0])
    lhs = (lin.d2 @ u) @ (lin.mass_g @ v)
    rhs = u @ (lin.mass_u @ lin.apply_d2_adj(v))
    return float(abs(lhs - rhs) / (lin.norm_g(lin.d2 @ u) * lin.norm_g(v)))


# --- 3D pointwise operators ------------------------------------------------

def bump_section(center, radius: float, a_coef, psi_coef, perp_to: Optional[Callable] = None):
    """Compactly supported smooth section b(x) (a_coef, psi_coef).

    With perp_to (pts -> unit algebra vectors) the algebra parts are projected
    orthogonally to that direction.
    """
    c = np.asarray(center, dtype=float)
    a_coef = np.asarray(a_coef, dtype=float)
    psi_coef = np.asarray(psi_coef, dtype=float)

    def u(pts):
        t = np.sum((pts - c) ** 2, axis=-1) / (radius * radius)
        inside = t < 1.0
        b = np.zeros_like(t)
        b[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside]))
        a = b[:, None, None] * a_coef
        psi = b[:, None] * psi_coef
        if perp_to is not None:
            n = perp_to(pts)
            a = a - np.einsum("mia,ma,mb->mib", a, n, n)
            psi = psi - np.einsum("ma,ma,mb->mb", psi, n, n)
        return a, psi

    return u


def random_sections(count: int, seed: int, centre_spread: float, radius: float, perp_to=None) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = rng.normal(size=3) * centre_spread
        out.append(bump_section(c, radius, rng.normal(size=(3, 3)), rng.normal(size=3), perp_to))
    return out


def weitzenbock_residual(model, background: Callable, section: Callable, pts, h: float,
                         order: int = 4) -> dict:
    """Sup, L2 (mean-square over pts) and relative residuals of both identities."""
    from .covariant import Pointwise

    pw = Pointwise(model, background, h, order)
    out = {}
    for which in ("DDstar", "DstarD"):
        (la, lp), (ra, rp) = pw.weitzenbock(section, pts, which)
        diff = np.sqrt(np.sum((la - ra) ** 2, axis=(1, 2)) + np.sum((lp - rp) ** 2, axis=1))
        size = np.sqrt(np.sum(la ** 2, axis=(1, 2)) + np.sum(lp ** 2, axis=1))
        out[which] = {"sup": float(diff.max()), "l2": float(np.sqrt(np.mean(diff ** 2))),
                      "relative": float(diff.max() / max(size.max(), 1e-300))}
    out["relative"] = max(out["DDstar"]["relative"], out["DstarD"]["relative"])
    return out


def unit_higgs(background: Callable) -> Callable:
    def n(pts):
        phi = background(pts)[1]
        return phi / np.linalg.norm(phi, axis=-1, keepdims=True)

    return n


def box_quadrature(center, half_width: float, n: int = 40):
    ax = np.linspace(-half_width, half_width, n)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1) + np.asarray(center, dtype=float)
    return pts, np.full(len(pts), (ax[1] - ax[0]) ** 3)


def weighted_norm(spec: WeightedNormSpec, model, section: Callable, n: int, pts, wts,
                  background: Optional[Callable] = None, h: float = 1e-3) -> float:
    """Quadrature of the H_{n,beta} norm (n = 0, 1) on the given nodes.

    Inside the unit balls every component carries W_j; outside, the parallel
    part carries W_j and the transverse part is weighted by powers of ad_Phi.
    """
    from .covariant import metric_data, stencil_derivative
    from .geometry import christoffel
    from .su2 import bracket

    if n not in (0, 1):
        raise ValueError("weighted norms are implemented for n = 0, 1")
    pts = np.asarray(pts, dtype=float)
    pnts = np.asarray(spec.points, dtype=float)
    dist = np.min(np.linalg.norm(pts[:, None] - pnts[None], axis=-1), axis=1)
    rho = model.rho(pts)
    inside = dist < 1.0
    _, ginv, sq = metric_data(model, pts)
    a, psi = section(pts)
    if background is not None:
        conn, higgs = background(pts)
        nh = higgs / np.linalg.norm(higgs, axis=-1, keepdims=True)
    elif np.any(~inside):
        raise ValueError("a background is needed to split sections outside the unit balls")
    else:
        conn = np.zeros(pts.shape + (3,))
        higgs = nh = np.zeros_like(pts)

    def par_perp(x):
        par = np.einsum("m...a,ma->m...", x, nh)
        perp = x - par[..., None] * nh.reshape((len(nh),) + (1,) * (x.ndim - 2) + (3,))
        return par, perp

    w0 = spec.weight(0, dist, rho)
    ap, aq = par_perp(a)
    pp, pq = par_perp(psi)
    full0 = _contract(ginv, a, 1) + _contract(ginv, psi, 0)
    par0 = np.einsum("mij,mi,mj->m", ginv, ap, ap) + pp * pp
    perp0 = _contract(ginv, aq, 1) + _contract(ginv, pq, 0)
    if n == 0:
        dens = np.where(inside, w0 ** 2 * full0, w0 ** 2 * par0 + perp0)
    else:
        ad_a = bracket(higgs[:, None, :], aq)
        ad_p = bracket(higgs, pq)
        perp_ad = _contract(ginv, ad_a, 1) + _contract(ginv, ad_p, 0)
        da, dpsi = stencil_derivative(section, pts, h, 4)
        gam = christoffel(model, pts)
        cov_a = da - np.einsum("mlij,mla->mija", gam, a) + bracket(conn[:, :, None, :], a[:, None, :, :])
        cov_p = dpsi + bracket(conn, psi[:, None, :])
        w1 = spec.weight(1, dist, rho)
        g_full = _contract(ginv, cov_a, 2) + _contract(ginv, cov_p, 1)
        cap, caq = par_perp(cov_a)
        cpp, cpq = par_perp(cov_p)
        g_par = np.einsum("mik,mjl,mij,mkl->m", ginv, ginv, cap, cap) + np.einsum("mij,mi,mj->m", ginv, cpp, cpp)
        g_perp = _contract(ginv, caq, 2) + _contract(ginv, cpq, 1)
        dens = np.where(inside, w0 ** 2 * full0 + w1 ** 2 * g_full,
                        w0 ** 2 * par0 + perp_ad + w1 ** 2 * g_par + g_perp)
    total = float(np.sum(wts * sq * dens))
    if not np.isfinite(total):
        from .diagnostics import IntegrabilityError

        raise IntegrabilityError("weighted norm quadrature diverged")
    return math.sqrt(total)


def _contract(ginv, x, forms: int):
    """Pointwise |x|^2 of an algebra-valued tensor with `forms` lower indices."""
    if forms == 0:
        return np.einsum("ma,ma->m", x, x)
    if forms == 1:
        return np.einsum("mij,mia,mja->m", ginv, x, x)
    return np.einsum("mik,mjl,mija,mkla->m", ginv, ginv, x, x)


def coercivity_probe(model, background: Callable, m0: float, points, alpha: float = -1.5,
                     trials: int = 6, seed: int = 0, h: float = 1e-3, support: float = 0.25,
                     nodes: int = 36) -> dict:
    """Integration-by-parts identity and Rayleigh quotients of d2^* on sections supported in U.

    The background must be reducible (Dirac) on the supports.  Transverse
    trials check ||d2^* f||^2 = ||grad f||^2 + ||[f, Phi]||^2 + <f, Ric f>;
    parallel trials give the weighted quotient ||d2^* f||_{alpha-1} / ||f||_alpha.
    """
    from .covariant import Pointwise, metric_data
    from .geometry import christoffel, ricci
    from .su2 import bracket

    rng = np.random.default_rng(seed)
    pnts = np.atleast_2d(np.asarray(points, dtype=float))
    pw = Pointwise(model, background, h, 4)
    nh = unit_higgs(background)
    spec = WeightedNormSpec(0, alpha, m0, tuple(map(tuple, pnts)))
    spec_lo = WeightedNormSpec(0, alpha - 1.0, m0, tuple(map(tuple, pnts)))
    identity, perp_q, perp_l2, par_q = [], [], [], []
    for t in range(2 * trials):
        parallel = t >= trials
        while True:
            c = pnts[rng.integers(len(pnts))] + rng.normal(size=3) * 1.5
            if np.min(np.linalg.norm(pnts - c, axis=1)) > 0.5 + support:
                break
        if parallel:
            coef = rng.normal(size=3)

            def f(p, c=c, coef=coef):
                b, _ = bump_section(c, support, np.ones((3, 3)), np.zeros(3))(p)
                n = nh(p)
                return b[:, :, :1] * coef[None, :, None] * n[:, None, :], np.zeros((len(p), 3))
        else:
            f = bump_section(c, support, rng.normal(size=(3, 3)), np.zeros(3), perp_to=nh)
        pts, wts = box_quadrature(c, support, nodes)
        _, ginv, sq = metric_data(model, pts)
        vol = wts * sq
        a, _ = f(pts)
        va, vs = pw.D_adj(f)(pts)
        if parallel:
            dist = np.min(np.linalg.norm(pts[:, None] - pnts[None], axis=-1), axis=1)
            rho = model.rho(pts)
            lhs = np.sum(vol * spec_lo.weight(0, dist, rho) ** 2 * (_contract(ginv, va, 1) + _contract(ginv, vs, 0)))
            rhs = np.sum(vol * spec.weight(0, dist, rho) ** 2 * _contract(ginv, a, 1))
            par_q.append(float(math.sqrt(lhs / rhs)))
            continue
        lhs = np.sum(vol * (_contract(ginv, va, 1) + _contract(ginv, vs, 0)))
        conn, higgs = background(pts)
        da = stencil_derivative_safe(f, pts, h)
        gam = christoffel(model, pts)
        cov = da - np.einsum("mlij,mla->mija", gam, a) + bracket(conn[:, :, None, :], a[:, None, :, :])
        grad2 = np.sum(vol * _contract(ginv, cov, 2))
        ad2 = np.sum(vol * _contract(ginv, bracket(a, higgs[:, None, :]), 1))
        ric = ricci(model, pts)
        ricf = np.sum(vol * np.einsum("mik,mlj,mkj,mia,mla->m", ginv, ginv, ric, a, a))
        rhs = grad2 + ad2 + ricf
        identity.append(float(abs(lhs - rhs) / lhs))
        perp_q.append(float(lhs / (grad2 + ad2)))
        perp_l2.append(float(lhs / np.sum(vol * _contract(ginv, a, 1))))
    return {
        "identity_relative": max(identity),
        "perp_quotient_min": min(perp_q),
        "perp_l2_quotient_min": min(perp_l2),
        "parallel_quotient_min": min(par_q),
        "alpha": alpha,
    }


def stencil_derivative_safe(fn: Callable, pts, h: float):
    from .covariant import stencil_derivative

    return stencil_derivative(lambda p: fn(p)[0], pts, h, 4)
