"""Trilinear finite elements for the Dirac potential on a general model.

The potential is split as phi = m + sum_i k_i G_i + psi, where G_i is the
Green function of the Laplacian with the metric frozen at p_i.  The remainder
psi is bounded; it solves a Dirichlet problem on a stretched Cartesian box
whose source only sees the difference between the true and frozen metrics.
"""

import math

import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import cg

from .abelian import DiracData, PointCharges, SolverError
from .geometry import ManifoldModel

_G = np.array([-1.0, 1.0]) / math.sqrt(3.0)


def stretched_axis(half_width: float, n: int, center_step: float) -> np.ndarray:
    """Odd number n of nodes on [-L, L], sinh-stretched with a given spacing at 0."""
    t = np.linspace(-1.0, 1.0, n)
    target = center_step * (n - 1) / (2.0 * half_width)
    lo, hi = 1e-6, 30.0
    for _ in range(200):
        a = 0.5 * (lo + hi)
        if a / math.sinh(a) > target:
            lo = a
        else:
            hi = a
    return half_width * np.sinh(a * t) / math.sinh(a)


class FrozenGreen:
    """-1/(2 |x-p|_g0) for the constant metric g0 = g(p); Laplacian is 2 pi delta."""

    def __init__(self, model: ManifoldModel, p):
        self.p = np.asarray(p, dtype=float)
        self.g0 = model.metric(self.p[None])[0]
        self.gi0 = np.linalg.inv(self.g0)

    def dist(self, x):
        d = np.asarray(x, dtype=float) - self.p
        return np.sqrt(np.einsum("...i,ij,...j->...", d, self.g0, d))

    def value(self, x):
        return -0.5 / self.dist(x)

    def grad(self, x):
        d = np.asarray(x, dtype=float) - self.p
        gd = np.einsum("ij,...j->...i", self.g0, d)
        s = np.sqrt(np.sum(d * gd, axis=-1))
        return gd / (2.0 * s ** 3)[..., None]


def _q1_reference():
    """Trilinear shape gradients at the 8 Gauss points of [0,1]^3 (unit element)."""
    gp = 0.5 * (1.0 + _G)
    pts = np.array([[a, b, c] for a in gp for b in gp for c in gp])
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    grads = np.zeros((8, 8, 3))  # [quad, node, dir]
    vals = np.zeros((8, 8))
    for n, c in enumerate(corners):
        f = np.where(c == 1, pts, 1.0 - pts)
        s = np.where(c == 1, 1.0, -1.0)
        vals[:, n] = f.prod(axis=1)
        for d in range(3):
            others = [e for e in range(3) if e != d]
            grads[:, n, d] = s[d] * f[:, others[0]] * f[:, others[1]]
    return pts, corners, vals, grads


class BoxFem:
    """Q1 stiffness for div(sqrt(g) g^-1 grad) on a tensor-product grid."""

    def __init__(self, model: ManifoldModel, axes):
        self.model = model
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.shape = tuple(len(a) for a in self.axes)
        qp, corners, vals, grads = _q1_reference()
        nx, ny, nz = self.shape
        ex, ey, ez = (np.diff(a) for a in self.axes)
        ix, iy, iz = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), np.arange(nz - 1), indexing="ij")
        ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
        size = np.stack([ex[ix], ey[iy], ez[iz]], axis=1)  # (E, 3)
        origin = np.stack([self.axes[0][ix], self.axes[1][iy], self.axes[2][iz]], axis=1)
        self.quad_points = origin[:, None, :] + size[:, None, :] * qp[None]  # (E, 8, 3)
        self.jac = np.prod(size, axis=1)[:, None] / 8.0  # Gauss weights are 1/8 each
        self.dN = grads[None] / size[:, None, None, :]  # (E, q, node, dir)
        self.N = vals
        node = (ix[:, None] + corners[None, :, 0]) * ny * nz + (iy[:, None] + corners[None, :, 1]) * nz + (iz[:, None] + corners[None, :, 2])
        self.conn = node  # (E, 8)
        g = model.metric(self.quad_points.reshape(-1, 3))
        coef = np.sqrt(np.linalg.det(g))[:, None, None] * np.linalg.inv(g)
        self.coef = coef.reshape(self.quad_points.shape[:2] + (3, 3))

    def stiffness(self) -> sp.csr_matrix:
        ke = np.einsum("eq,eqai,eqij,eqbj->eab", self.jac, self.dN, self.coef, self.dN)
        rows = np.repeat(self.conn, 8, axis=1).ravel()
        cols = np.tile(self.conn, (1, 8)).ravel()
        n = int(np.prod(self.shape))
        return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))

    def load_from_flux(self, flux) -> np.ndarray:
        """-int flux^i d_i N_a, for a vector density flux (E, q, 3)."""
        fe = -np.einsum("eq,eqi,eqai->ea", self.jac, flux, self.dN)
        out = np.zeros(int(np.prod(self.shape)))
        np.add.at(out, self.conn.ravel(), fe.ravel())
        return out

    def nodes(self) -> np.ndarray:
        x, y, z = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def boundary_mask(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(3, -1)
        mask = np.zeros(idx.shape[1], dtype=bool)
        for d, n in enumerate(self.shape):
            mask |= (idx[d] == 0) | (idx[d] == n - 1)
        return mask


def solve_fem(model: ManifoldModel, charges: PointCharges, half_width: float = 200.0,
              nodes: int = 49, center_step: float = 0.08, rtol: float = 1e-10, **_) -> DiracData:
    if nodes % 2 == 0:
        raise ValueError("node count per axis must be odd")
    m = charges.mass
    ks = np.asarray(charges.charges, dtype=float)
    greens = [FrozenGreen(model, p) for p in charges.array]
    axis = stretched_axis(half_width, nodes, center_step)
    fem = BoxFem(model, [axis, axis, axis])

    # metric defect flux: (sqrt(g) g^-1 - sqrt(g0) g0^-1) grad G_i
    qp = fem.quad_points.reshape(-1, 3)
    flux = np.zeros(qp.shape)
    coef = fem.coef.reshape(-1, 3, 3)
    for k, gr in zip(ks, greens):
        frozen = math.sqrt(np.linalg.det(gr.g0)) * gr.gi0
        flux += k * np.einsum("mij,mj->mi", coef - frozen, gr.grad(qp))
    rhs = fem.load_from_flux(flux.reshape(fem.quad_points.shape))

    xyz = fem.nodes()
    bnd = fem.boundary_mask()
    sing = sum(k * gr.value(xyz[bnd]) for k, gr in zip(ks, greens))
    r_b = np.linalg.norm(xyz[bnd], axis=1)
    psi_b = -2.0 * math.pi * ks.sum() / (model.link.volume * r_b) - sing

    stiff = fem.stiffness()
    free = ~bnd
    a_ff = stiff[free][:, free].tocsr()
    b = rhs[free] - stiff[free][:, bnd] @ psi_b
    ml = pyamg.smoothed_aggregation_solver(a_ff, symmetry="symmetric")
    x0 = np.zeros(free.sum())
    sol, info = cg(a_ff, b, x0=x0, rtol=rtol, atol=0.0, maxiter=500, M=ml.aspreconditioner())
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge (info={info})")
    psi = np.zeros(len(xyz))
    psi[bnd] = psi_b
    psi[free] = sol
    residual = float(np.linalg.norm(a_ff @ sol - b) / max(np.linalg.norm(b), 1e-300))
    grid = psi.reshape(fem.shape)
    interp = RegularGridInterpolator((axis, axis, axis), grid, method="linear")
    gpsi = _grid_gradient(grid, axis)
    ginterp = [RegularGridInterpolator((axis, axis, axis), gpsi[..., d]) for d in range(3)]

    def regular(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        return interp(np.clip(flat, -half_width, half_width)).reshape(x.shape[:-1])

    def potential(x):
        x = np.asarray(x, dtype=float)
        return m + regular(x) + sum(k * gr.value(x) for k, gr in zip(ks, greens))

    def gradient(x):
        x = np.asarray(x, dtype=float)
        flat = np.clip(x.reshape(-1, 3), -half_width, half_width)
        gp = np.stack([gi(flat) for gi in ginterp], axis=-1).reshape(x.shape)
        return gp + sum(k * gr.grad(x) for k, gr in zip(ks, greens))

    consts = []
    pts = charges.array
    for i, p in enumerate(pts):
        c = float(regular(p[None])[0])
        for j, (k, gr) in enumerate(zip(ks, greens)):
            if j != i:
                c += k * float(gr.value(p[None])[0])
        consts.append(c)
    diag = {"cg_relative_residual": residual, "half_width": half_width, "nodes": nodes,
            "center_step": center_step}
    return DiracData(model, charges, potential, gradient, tuple(consts), "fem3d", diagnostics=diag)


def _grid_gradient(grid: np.ndarray, axis: np.ndarray) -> np.ndarray:
    return np.stack(np.gradient(grid, axis, axis, axis, edge_order=2), axis=-1)
