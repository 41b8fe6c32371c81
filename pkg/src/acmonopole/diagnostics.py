"""Energy, asymptotic fits, scaling, gauge and Kato checks."""

import math
from typing import Callable, Optional

import numpy as np

from .abelian import _sphere_nodes
from .covariant import Pointwise, form_norm2, metric_data, star2, stencil_derivative
from .geometry import ManifoldModel
from .su2 import bracket


class FitError(ArithmeticError):
    pass


class IntegrabilityError(ArithmeticError):
    pass


# Sharp Sobolev constant on R^3: ||grad f||^2 >= S ||f||_6^2
SOBOLEV_R3 = 3.0 * (math.pi / 2.0) ** (4.0 / 3.0)


# --- quadrature -----------------------------------------------------------

def radial_panels(r_min: float, r_max: float, panels: int = 40, order: int = 8):
    """Gauss-Legendre nodes on geometric panels of [0, r_max], first panel [0, r_min]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate([[0.0], np.geomspace(r_min, r_max, panels)])
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x[None]
    wts = 0.5 * (b - a) * w[None]
    return nodes.ravel(), wts.ravel()


def ball_quadrature(center, r_min: float, r_max: float, panels: int = 40, order: int = 8,
                    n_theta: int = 16, n_psi: int = 32):
    r, wr = radial_panels(r_min, r_max, panels, order)
    dirs, wd = _sphere_nodes(n_theta, n_psi)
    pts = np.asarray(center, dtype=float) + r[:, None, None] * dirs[None]
    wts = (wr * r * r)[:, None] * wd[None]
    return pts.reshape(-1, 3), wts.ravel()


def _bump(t):
    """Smooth 1 -> 0 on t in [0.5, 1]."""
    s = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)


def integrate(fn: Callable, centers, core: float, outer_radius: float, local_radius: float,
              chunk: int = 20000, **quad) -> float:
    """Integral of fn over the coordinate ball |x| < outer_radius.

    Each centre gets its own spherical quadrature for fn times a bump of
    radius local_radius; the remainder uses a quadrature centred at 0.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))

    def weight_local(x):
        d = np.linalg.norm(x[:, None, :] - centers[None], axis=-1) / local_radius
        return _bump(d)

    def run(pts, wts, mult):
        total = 0.0
        for s in range(0, len(pts), chunk):
            p, w = pts[s:s + chunk], wts[s:s + chunk]
            m = mult(p)
            keep = (m != 0) & (np.linalg.norm(p, axis=1) < outer_radius)
            if keep.any():
                total += float(np.sum(w[keep] * m[keep] * fn(p[keep])))
        return total

    total = 0.0
    for i, c in enumerate(centers):
        pts, wts = ball_quadrature(c, core, local_radius, **quad)
        total += run(pts, wts, lambda p, i=i: weight_local(p)[:, i])
    pts, wts = ball_quadrature(np.zeros(3), max(core, 1e-3), outer_radius, **quad)
    total += run(pts, wts, lambda p: 1.0 - weight_local(p).sum(axis=1))
    if not np.isfinite(total):
        raise IntegrabilityError("energy quadrature diverged")
    return total


# --- energy -----------------------------------------------------------------

def energy_3d(model: ManifoldModel, evaluator: Callable, centers, outer_radius: float,
              h: float = 1e-3, order: int = 4, core: Optional[float] = None,
              local_radius: Optional[float] = None, **quad) -> dict:
    """Bulk integral of |F|^2 + |grad Phi|^2 and the boundary flux 2 <Phi, *F>."""
    pw = Pointwise(model, evaluator, h, order)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if local_radius is None:
        if len(centers) > 1:
            d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
            local_radius = 0.5 * d[d > 0].min()
        else:
            local_radius = 1.0

    def density(p):
        _, _, sq = metric_data(model, p)
        return pw.energy_density(p) * sq

    bulk = integrate(density, centers, core or 1e-3, outer_radius, local_radius, **quad)
    return {"bulk": bulk, "flux": flux_energy(model, pw, outer_radius), "outer_radius": outer_radius}


def flux_energy(model: ManifoldModel, pw: Pointwise, radius: float, n_theta: int = 32, n_psi: int = 64) -> float:
    dirs, wd = _sphere_nodes(n_theta, n_psi)
    pts = radius * dirs
    f, _, _, higgs = pw.curvature(pts)
    _, ginv, sq = metric_data(model, pts)
    sf = star2(ginv, sq, f)
    vec = np.einsum("mij,mja,ma->mi", ginv, sf, higgs) * sq[:, None]
    return float(2.0 * radius * radius * np.sum(wd * np.einsum("mi,mi->m", vec, dirs)))


# --- asymptotic fit ---------------------------------------------------------

def fit_mass_charge(r, modulus, tol: float = 1e-3) -> dict:
    """Least squares |Phi| ~ a + b/r; m = a, k = -2b rounded."""
    r = np.asarray(r, dtype=float)
    modulus = np.asarray(modulus, dtype=float)
    mat = np.stack([np.ones_like(r), 1.0 / r], axis=1)
    (a, b), *_ = np.linalg.lstsq(mat, modulus, rcond=None)
    k = -2.0 * b
    res = float(np.max(np.abs(mat @ [a, b] - modulus))) if len(r) else math.inf
    out = {"m_fit": float(a), "k_fit": float(k), "k": int(round(k)),
           "k_roundoff": float(abs(k - round(k))), "fit_residual": res}
    if out["k_roundoff"] > 0.25 or res > tol * max(1.0, abs(a)):
        raise FitError(f"asymptotic fit residual too large ({res:.2e}, k={k:.3f})")
    return out


def asymptotic_fit(higgs_modulus: Callable, window=(20.0, 80.0), n: int = 24, directions: int = 6,
                   tol: float = 1e-3) -> dict:
    """Fit the direction-averaged |Phi| on the radial window; higgs_modulus maps (M,3) -> (M,)."""
    if not 0 < window[0] < window[1]:
        raise ValueError("fit window must satisfy 0 < r_min < r_max")
    r = np.geomspace(window[0], window[1], n)
    dirs, wd = _sphere_nodes(max(2, directions // 2), directions)
    pts = r[:, None, None] * dirs[None]
    vals = np.asarray(higgs_modulus(pts.reshape(-1, 3))).reshape(len(r), len(dirs))
    avg = vals @ wd / wd.sum()
    return fit_mass_charge(r, avg, tol)


def evaluator_modulus(evaluator: Callable) -> Callable:
    return lambda p: np.linalg.norm(evaluator(p)[1], axis=-1)


# --- scaling ------------------------------------------------------------------

def scaled_model(model: ManifoldModel, delta: float) -> ManifoldModel:
    """Same chart with metric delta^2 g."""
    from dataclasses import replace

    if not delta > 0:
        raise ValueError("scale factor must be positive")
    d2 = delta * delta
    return replace(model, kind="ConePerturbation",
                   custom=lambda p: d2 * model.metric(p) - np.eye(3))


def scaling_test(model: ManifoldModel, evaluator: Callable, delta: float, pts,
                 h: float = 1e-3, order: int = 4, zero_tol: float = 1e-6) -> dict:
    """Residual of (A, Phi/delta) for delta^2 g against the original residual."""
    pts = np.asarray(pts, dtype=float)
    orig = Pointwise(model, evaluator, h, order).residual_norm(pts)
    if delta == 1.0:
        new = orig.copy()
    else:
        def scaled(p):
            a, phi = evaluator(p)
            return a, phi / delta

        new = Pointwise(scaled_model(model, delta), scaled, h, order).residual_norm(pts)
    sup_o, sup_n = float(orig.max()), float(new.max())
    expected = delta ** -2 * orig
    denom = max(float(np.abs(expected).max()), 1e-300)
    return {
        "delta": delta,
        "original_sup": sup_o,
        "scaled_sup": sup_n,
        "expected_factor": delta ** -2,
        "identity_error": float(np.abs(new - expected).max() / denom),
        "zero_preserved": bool(sup_o > zero_tol or sup_n <= zero_tol),
    }


# --- gauge transformations ------------------------------------------------------

def rotation(xi: np.ndarray) -> np.ndarray:
    """SO(3) matrices exp([xi]_x) for xi of shape (M, 3)."""
    theta = np.linalg.norm(xi, axis=-1)
    safe = np.where(theta > 0, theta, 1.0)
    k = xi / safe[:, None]
    kx = np.zeros(xi.shape[:-1] + (3, 3))
    kx[:, 0, 1], kx[:, 0, 2], kx[:, 1, 2] = -k[:, 2], k[:, 1], -k[:, 0]
    kx = kx - np.swapaxes(kx, 1, 2)
    s, c = np.sin(theta)[:, None, None], np.cos(theta)[:, None, None]
    return np.eye(3) + s * kx + (1 - c) * (kx @ kx)


def random_gauge(seed: int = 0, modes: int = 3, amplitude: float = 1.0, scale: float = 1.0) -> Callable:
    """Smooth xi(x) = sum of plane waves; x -> (M, 3) rotation vector."""
    rng = np.random.default_rng(seed)
    waves = rng.normal(size=(modes, 3)) / scale
    phases = rng.uniform(0, 2 * math.pi, modes)
    amps = rng.normal(size=(modes, 3)) * amplitude / math.sqrt(modes)

    def xi(p):
        return np.sin(p @ waves.T + phases) @ amps

    return xi


def gauge_transform(evaluator: Callable, xi: Callable, h: float = 1e-3) -> Callable:
    """(A, Phi) -> (R A - v, R Phi) with [v_i]_x = dR_i R^T / 2, R = exp(xi)."""

    def rot(p):
        return rotation(xi(p))

    def out(p):
        p = np.asarray(p, dtype=float)
        shape = p.shape[:-1]
        flat = p.reshape(-1, 3)
        a, phi = evaluator(flat)
        r = rot(flat)
        dr = stencil_derivative(rot, flat, h, 6)  # (M, i, 3, 3)
        om = 0.5 * np.einsum("mipq,mrq->mipr", dr, r)
        v = np.stack([om[..., 2, 1], om[..., 0, 2], om[..., 1, 0]], axis=-1)
        a2 = np.einsum("mpq,miq->mip", r, a) - v
        phi2 = np.einsum("mpq,mq->mp", r, phi)
        return a2.reshape(shape + (3, 3)), phi2.reshape(shape + (3,))

    return out


def gauge_invariance_check(model: ManifoldModel, evaluator: Callable, pts, seed: int = 0,
                           h: float = 1e-3, order: int = 6, energy_kw: Optional[dict] = None,
                           fit_window=(20.0, 80.0)) -> dict:
    """Relative changes in residual norms, energy and |Phi| fit under a random gauge."""
    pts = np.asarray(pts, dtype=float)
    moved = gauge_transform(evaluator, random_gauge(seed))
    out = {}
    r0 = Pointwise(model, evaluator, h, order).residual_norm(pts)
    r1 = Pointwise(model, moved, h, order).residual_norm(pts)
    out["residual_sup"] = _rel(r1.max(), r0.max())
    out["residual_rms"] = _rel(np.sqrt(np.mean(r1 ** 2)), np.sqrt(np.mean(r0 ** 2)))
    if energy_kw is not None:
        e0 = energy_3d(model, evaluator, h=h, order=order, **energy_kw)
        e1 = energy_3d(model, moved, h=h, order=order, **energy_kw)
        out["energy_bulk"] = _rel(e1["bulk"], e0["bulk"])
        out["energy_flux"] = _rel(e1["flux"], e0["flux"])
    if fit_window is not None:
        f0 = asymptotic_fit(evaluator_modulus(evaluator), fit_window)
        f1 = asymptotic_fit(evaluator_modulus(moved), fit_window)
        out["fit_mass"] = _rel(f1["m_fit"], f0["m_fit"])
        out["fit_charge"] = _rel(f1["k_fit"], f0["k_fit"])
    out["max_relative_change"] = max(out.values())
    return out


def _rel(a, b) -> float:
    return float(abs(a - b) / max(abs(b), 1e-300))


# --- Kato / Sobolev ----------------------------------------------------------

def kato_constant(model: ManifoldModel, evaluator: Callable, sections, box: float, n: int = 48,
                  h: float = 1e-3) -> dict:
    """Empirical c_K = max ||u||_6^2 / ||grad_A u||_2^2 over compactly supported sections."""
    ax = np.linspace(-box, box, n)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    dv = (ax[1] - ax[0]) ** 3
    _, ginv, sq = metric_data(model, pts)
    conn, _ = evaluator(pts)
    ratios = []
    for u in sections:
        a, psi = u(pts)
        da, dpsi = stencil_derivative(u, pts, h, 4)
        cov_a = da + bracket(conn[:, :, None, :], a[:, None, :, :])
        cov_p = dpsi + bracket(conn, psi[:, None, :])
        mod2 = form_norm2(ginv, a) + np.sum(psi * psi, axis=-1)
        grad2 = _grad_norm2(ginv, cov_a, cov_p)
        l6 = (np.sum(mod2 ** 3 * sq) * dv) ** (1.0 / 3.0)
        l2 = np.sum(grad2 * sq) * dv
        ratios.append(float(l6 / l2))
    return {"c_K": max(ratios), "ratios": ratios, "sobolev_bound": 1.0 / SOBOLEV_R3}


def _grad_norm2(ginv, cov_a, cov_p):
    # |grad a|^2 = g^ij g^kl <(grad a)_ik, (grad a)_jl>, |grad psi|^2 = g^ij <., .>
    ga = np.einsum("mij,mkl,mika,mjla->m", ginv, ginv, cov_a, cov_a)
    gp = np.einsum("mij,mia,mja->m", ginv, cov_p, cov_p)
    return ga + gp
