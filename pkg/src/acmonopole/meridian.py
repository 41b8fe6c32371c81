"""Axially equivariant correction of atlas states with all points on the z-axis.

Within each hedgehog-gauge chart the glued field commutes with rotations about
the axis acting on space and algebra together.  A correction with the same
symmetry is fixed by its 12 components on the half-plane y = 0, x = rho > 0,
where d/dy acts as J/rho with J the infinitesimal rotation on both indices,
and the value at -rho is the half-turn of the value at rho.  Nodes on either
side of a Voronoi boundary carry their own chart's components; derivative
stencils crossing it rotate the neighbour so that its Higgs direction matches.
That rotation only agrees with the true transition on the parallel part,
which is adequate because transverse modes decay at rate 2m away from the
cores.  Residuals are collocated at the nodes with the base kept analytic.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .atlas import AtlasState
from .covariant import Pointwise
from .geometry import EPS3

_G = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
_HALF_TURN = np.diag([-1.0, -1.0, 1.0])


def _cross_matrix(v):
    """(..., 3, 3) matrices with C v' = v x v'."""
    c = np.zeros(v.shape[:-1] + (3, 3))
    c[..., 0, 1], c[..., 0, 2] = -v[..., 2], v[..., 1]
    c[..., 1, 0], c[..., 1, 2] = v[..., 2], -v[..., 0]
    c[..., 2, 0], c[..., 2, 1] = -v[..., 1], v[..., 0]
    return c


def _section_map(rot):
    """12x12 action on (a_i^alpha, psi^alpha) of a 3x3 rotation applied to space and algebra."""
    out = np.zeros(rot.shape[:-2] + (12, 12))
    out[..., :9, :9] = np.einsum("...ij,...ab->...iajb", rot, rot).reshape(rot.shape[:-2] + (9, 9))
    out[..., 9:, 9:] = rot
    return out


def _algebra_map(rot):
    """12x12 action of an algebra rotation only (chart transitions)."""
    out = np.zeros(rot.shape[:-2] + (12, 12))
    for i in range(3):
        out[..., 3 * i:3 * i + 3, 3 * i:3 * i + 3] = rot
    out[..., 9:, 9:] = rot
    return out


def _generator():
    """J on 12-vectors: infinitesimal rotation about z on form and algebra indices."""
    eye = np.eye(3)
    j9 = np.kron(_G, eye) + np.kron(eye, _G)
    out = np.zeros((12, 12))
    out[:9, :9] = j9
    out[9:, 9:] = _G
    return out


def minimal_rotation(src, dst):
    """Rotations taking unit vectors src to dst about src x dst (half-turn about y if opposite)."""
    axis = np.cross(src, dst)
    s = np.linalg.norm(axis, axis=-1)
    c = np.sum(src * dst, axis=-1)
    fallback = np.broadcast_to([0.0, 1.0, 0.0], axis.shape)
    k = np.where((s > 1e-14)[..., None], axis / np.where(s > 1e-14, s, 1.0)[..., None], fallback)
    ang = np.arctan2(s, c)
    kx = _cross_matrix(k)
    eye = np.eye(3)
    return eye + np.sin(ang)[..., None, None] * kx + (1 - np.cos(ang))[..., None, None] * (kx @ kx)


def graded_axis(lo: float, hi: float, centers, h0: float, growth: float, h_max: float,
                core: float, stagger: bool = False, band=None) -> np.ndarray:
    """Nodes whose spacing is h0 within `core` of a centre and grows linearly beyond.

    band = (d_lo, d_hi, h_band) caps the spacing at h_band on [d_lo, d_hi], grading
    back at the same rate outside it.
    """
    centers = np.asarray(centers, dtype=float)

    def spacing(x):
        d = np.min(np.abs(x - centers)) if len(centers) else math.inf
        h = min(h_max, h0 + growth * max(0.0, d - core))
        if band is not None:
            h = min(h, band[2] + growth * max(0.0, band[0] - d, d - band[1]))
        return h

    x = lo + (0.5 * h0 if stagger else 0.0)
    nodes = [x]
    while x < hi:
        x = x + spacing(x)
        nodes.append(x)
    return np.array(nodes)


def _fd_weights(x):
    """Three-point first-derivative weights (n, 3) and neighbour offsets on a nonuniform axis."""
    n = len(x)
    w = np.zeros((n, 3))
    off = np.zeros((n, 3), dtype=int)
    for j in range(n):
        if 0 < j < n - 1:
            hm, hp = x[j] - x[j - 1], x[j + 1] - x[j]
            w[j] = [-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))]
            off[j] = [-1, 0, 1]
        elif j == 0:
            h1, h2 = x[1] - x[0], x[2] - x[1]
            w[j] = [-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))]
            off[j] = [0, 1, 2]
        else:
            h1, h2 = x[j] - x[j - 1], x[j - 1] - x[j - 2]
            w[j] = [h1 / (h2 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2 * h1 + h2) / (h1 * (h1 + h2))]
            off[j] = [-2, -1, 0]
    return w, off


@dataclass
class MeridianGrid:
    rho: np.ndarray
    z: np.ndarray

    @property
    def shape(self):
        return len(self.rho), len(self.z)

    @property
    def size(self) -> int:
        return len(self.rho) * len(self.z)

    def points(self) -> np.ndarray:
        r, z = np.meshgrid(self.rho, self.z, indexing="ij")
        return np.stack([r.ravel(), np.zeros(r.size), z.ravel()], axis=-1)

    def cell_volumes(self) -> np.ndarray:
        def widths(x, lo):
            mid = 0.5 * (x[1:] + x[:-1])
            edges = np.concatenate([[lo], mid, [x[-1]]])
            return np.diff(edges)

        wr = widths(self.rho, 0.0)
        wz = widths(self.z, self.z[0])
        return (2 * math.pi * self.rho * wr)[:, None] * wz[None, :]


def meridian_grid(centers_z, h0: float = 0.003, growth: float = 0.08, h_max: float = 0.3,
                  core: float = 0.015, rho_max: float = 3.0, z_pad: float = 3.0, band=None) -> MeridianGrid:
    """Graded tensor grid; `band` refines the gluing annuli along the axis (see graded_axis)."""
    cz = np.sort(np.asarray(centers_z, dtype=float))
    band = tuple(band) if band is not None else None
    rho = graded_axis(0.0, rho_max, [0.0], h0, growth, h_max, core, stagger=True)
    lo, hi = cz[0] - z_pad, cz[-1] + z_pad
    z = graded_axis(lo, hi, cz, h0, growth, h_max, core, band=band)
    return MeridianGrid(rho, z)


@dataclass
class MeridianSystem:
    """Discrete residual e0 + L u + N(u, u) on a meridian grid."""

    state: AtlasState
    grid: MeridianGrid
    h_stencil: float = 1e-4
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        centers = np.array([c.center for c in self.state.charts])
        if not self.state.model.flat or np.any(np.abs(centers[:, :2]) > 0):
            raise ValueError("meridian reduction needs flat metric and points on the z-axis")
        pts = self.grid.points()
        chart = self.state.chart_index(pts)
        conn = np.empty((len(pts), 3, 3))
        higgs = np.empty((len(pts), 3))
        e0 = np.empty((len(pts), 3, 3))
        for i in range(len(self.state.charts)):
            sel = chart == i
            if sel.any():
                ev = self.state.chart_evaluator(i)
                conn[sel], higgs[sel] = ev(pts[sel])
                e0[sel] = Pointwise(self.state.model, ev, self.h_stencil, 6).residual(pts[sel])
        self.pts, self.chart = pts, chart
        self.conn, self.higgs, self.e0 = conn, higgs, e0
        self.volumes = self.grid.cell_volumes().ravel()
        self.linear = self._assemble_linear()

    # --- assembly ---------------------------------------------------------------
    def _sigma(self, pts, charts):
        centers = np.array([c.center for c in self.state.charts])
        y = pts - centers[charts]
        return -y / np.linalg.norm(y, axis=-1)[:, None]

    def _derivative_blocks(self):
        """Sparse 12N x 12N matrices for d/dx, d/dy, d/dz on the node vectors."""
        nr, nz = self.grid.shape
        n = self.grid.size
        idx = np.arange(n).reshape(nr, nz)
        eye12 = np.eye(12)
        # d/dx along rho, with the half-turn ghost below the first node
        rows, cols, blocks = [], [], []
        rho = self.grid.rho
        w, off = _fd_weights(rho)
        hm, hp = 2 * rho[0], rho[1] - rho[0]
        wm, w0, wp = -hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))
        w[0], off[0] = [wm, w0, wp], [0, 0, 1]
        ghost = _section_map(_HALF_TURN)
        for j in range(nr):
            for c in range(3):
                blk = w[j, c] * (ghost if (j == 0 and c == 0) else eye12)
                rows.append(idx[j]); cols.append(idx[j + off[j, c]])
                blocks.append(np.broadcast_to(blk, (nz, 12, 12)))
        dx = self._blocks_to_sparse(rows, cols, blocks, n)
        # d/dy = J / rho
        jgen = _generator()
        inv_rho = np.repeat(1.0 / rho, nz)
        dy = sp.block_diag([jgen * s for s in inv_rho], format="csr")
        # d/dz with chart transitions
        w, off = _fd_weights(self.grid.z)
        rows, cols, blocks = [], [], []
        for kz in range(nz):
            here = idx[:, kz]
            for c in range(3):
                nb = idx[:, kz + off[kz, c]]
                blk = np.broadcast_to(w[kz, c] * eye12, (nr, 12, 12)).copy()
                cross = self.chart[nb] != self.chart[here]
                if cross.any():
                    p = self.pts[nb[cross]]
                    src = self._sigma(p, self.chart[nb[cross]])
                    dst = self._sigma(p, self.chart[here[cross]])
                    blk[cross] = w[kz, c] * _algebra_map(minimal_rotation(src, dst))
                rows.append(here); cols.append(nb); blocks.append(blk)
        dz = self._blocks_to_sparse(rows, cols, blocks, n)
        return dx, dy, dz

    @staticmethod
    def _blocks_to_sparse(rows, cols, blocks, n):
        r = np.concatenate([np.asarray(x) for x in rows])
        c = np.concatenate([np.asarray(x) for x in cols])
        b = np.concatenate([np.asarray(x) for x in blocks])
        ii = (r[:, None, None] * 12 + np.arange(12)[None, :, None]) + 0 * np.arange(12)[None, None, :]
        jj = (c[:, None, None] * 12 + np.arange(12)[None, None, :]) + 0 * np.arange(12)[None, :, None]
        return sp.csr_matrix((b.ravel(), (ii.ravel(), jj.ravel())), shape=(12 * n, 12 * n))

    def _assemble_linear(self):
        n = self.grid.size
        derivs = self._derivative_blocks()
        lin = None
        for i, d in enumerate(derivs):
            e = np.zeros((9, 12))
            for j in range(3):
                for k in range(3):
                    if EPS3[i, j, k]:
                        for a in range(3):
                            e[3 * k + a, 3 * j + a] = EPS3[i, j, k]
            for a in range(3):
                e[3 * i + a, 9 + a] = -1.0
            term = sp.kron(sp.identity(n), sp.csr_matrix(e)) @ d
            lin = term if lin is None else lin + term
        cA = _cross_matrix(self.conn)
        cP = _cross_matrix(self.higgs)
        local = np.zeros((n, 9, 12))
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    if EPS3[i, j, k]:
                        local[:, 3 * k:3 * k + 3, 3 * j:3 * j + 3] += 2 * EPS3[i, j, k] * cA[:, i]
            local[:, 3 * k:3 * k + 3, 9:] += -2 * cA[:, k]
            local[:, 3 * k:3 * k + 3, 3 * k:3 * k + 3] += 2 * cP
        return (lin + sp.block_diag(list(local), format="csr")).tocsr()

    # --- residual ---------------------------------------------------------------
    @staticmethod
    def quadratic(u, v):
        """Symmetric bilinear N(u, v) on (N, 12) arrays, returns (N, 9)."""
        a, p = u[:, :9].reshape(-1, 3, 3), u[:, 9:]
        b, q = v[:, :9].reshape(-1, 3, 3), v[:, 9:]
        out = np.zeros((len(u), 3, 3))
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    if EPS3[i, j, k]:
                        out[:, k] += EPS3[i, j, k] * 0.5 * (np.cross(a[:, i], b[:, j]) + np.cross(b[:, i], a[:, j]))
            out[:, k] -= np.cross(a[:, k], q) + np.cross(b[:, k], p)
        return out.reshape(-1, 9)

    def residual(self, x) -> np.ndarray:
        u = x.reshape(-1, 12)
        return self.e0.reshape(-1) + self.linear @ x + self.quadratic(u, u).reshape(-1)

    def jacobian(self, x) -> sp.csr_matrix:
        u = x.reshape(-1, 12)
        n = len(u)
        blocks = np.zeros((n, 9, 12))
        for c in range(12):
            v = np.zeros_like(u)
            v[:, c] = 1.0
            blocks[:, :, c] = 2.0 * self.quadratic(u, v)
        return (self.linear + sp.block_diag(list(blocks), format="csr")).tocsr()

    def norms(self, x) -> np.ndarray:
        return np.linalg.norm(self.residual(x).reshape(-1, 9), axis=-1)


def edge_differences(system: MeridianSystem) -> sp.csr_matrix:
    """Compact differences along every grid edge (and the axis ghost), volume weighted.

    Rows are 12-vectors (u_b - u_a)/|b - a| sqrt(vol) with u_b rotated into
    the chart of u_a; together with the d/dy = J/rho rows they give a
    gradient penalty that sees odd-even modes.
    """
    nr, nz = system.grid.shape
    idx = np.arange(system.grid.size).reshape(nr, nz)
    rho, z = system.grid.rho, system.grid.z
    vol = system.volumes
    eye12 = np.eye(12)
    rows, cols, vals = [], [], []
    count = 0

    def add(a, b, blk_b, length):
        nonlocal count
        m = len(a)
        wgt = np.sqrt(vol[a]) / length
        e = count + np.arange(m)
        r = (e[:, None, None] * 12 + np.arange(12)[None, :, None]) + 0 * np.arange(12)[None, None, :]
        ca = (a[:, None, None] * 12 + np.arange(12)[None, None, :]) + 0 * np.arange(12)[None, :, None]
        cb = (b[:, None, None] * 12 + np.arange(12)[None, None, :]) + 0 * np.arange(12)[None, :, None]
        rows.extend([r.ravel(), r.ravel()])
        cols.extend([ca.ravel(), cb.ravel()])
        vals.extend([(-wgt[:, None, None] * eye12).ravel(), (wgt[:, None, None] * blk_b).ravel()])
        count += m

    # axis ghost: value at -rho_0 is the half-turn of the value at rho_0
    a = idx[0]
    add(a, a, np.broadcast_to(_section_map(_HALF_TURN), (nz, 12, 12)), np.full(nz, 2 * rho[0]))
    for j in range(nr - 1):
        add(idx[j], idx[j + 1], np.broadcast_to(eye12, (nz, 12, 12)), np.full(nz, rho[j + 1] - rho[j]))
    for k in range(nz - 1):
        a, b = idx[:, k], idx[:, k + 1]
        blk = np.broadcast_to(eye12, (nr, 12, 12)).copy()
        cross = system.chart[a] != system.chart[b]
        if cross.any():
            p = system.pts[b[cross]]
            rot = minimal_rotation(system._sigma(p, system.chart[b[cross]]), system._sigma(p, system.chart[a[cross]]))
            blk[cross] = _algebra_map(rot)
        add(a, b, blk, np.full(nr, z[k + 1] - z[k]))
    n12 = 12 * system.grid.size
    diff = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(12 * count, n12))
    jgen = _generator()
    scale = np.sqrt(vol) / np.repeat(rho, nz)
    dy = sp.block_diag([jgen * s for s in scale], format="csr")
    return sp.vstack([diff, dy]).tocsr()


def norm_matrix(system: MeridianSystem, length: float) -> sp.csr_matrix:
    """Gram matrix of the weighted norm |u|^2 + length^2 |grad u|^2."""
    d = edge_differences(system)
    mass = sp.diags(np.repeat(system.volumes, 12))
    return (mass + length ** 2 * (d.T @ d)).tocsc()


class RightInverse:
    """Least gram-norm solutions of jac x = g through one sparse KKT factorization.

    UMFPACK (through cvxopt) keeps the fill of the saddle-point matrix
    manageable; SuperLU is the fallback.
    """

    def __init__(self, jac: sp.csr_matrix, gram: sp.csc_matrix):
        self.n = jac.shape[1]
        kkt = sp.bmat([[gram, jac.T], [jac, None]], format="coo")
        self.jac = jac
        try:
            from cvxopt import matrix, spmatrix, umfpack
        except ImportError:  # pragma: no cover - optional backend
            lu = splu(kkt.tocsc(), permc_spec="COLAMD")
            self._solve = lambda b: lu.solve(b)
            return
        k = spmatrix(kkt.data.tolist(), kkt.row.tolist(), kkt.col.tolist(), size=kkt.shape)
        numeric = umfpack.numeric(k, umfpack.symbolic(k))

        def solve(b):
            x = matrix(b)
            umfpack.solve(k, numeric, x)
            return np.array(x).ravel()

        self._solve = solve

    def __call__(self, g: np.ndarray) -> np.ndarray:
        return self._solve(np.concatenate([np.zeros(self.n), g]))[:self.n]


def _norms(system: MeridianSystem, gram):
    vol9 = np.repeat(system.volumes, 9)
    return (lambda x: float(np.sqrt(max(x @ (gram @ x), 0.0))),
            lambda y: float(np.sqrt(np.sum(vol9 * y * y))))


def guard_constants(system: MeridianSystem, q: RightInverse, gram, v: np.ndarray,
                    trials: int = 6, seed: int = 0) -> dict:
    """Bilinear constant of N and a norm proxy for Q from seeded trial sources."""
    norm_u, norm_g = _norms(system, gram)
    rng = np.random.default_rng(seed)
    pts = system.pts
    sources = [v]
    for _ in range(trials):
        c = np.array([rng.uniform(0.0, 0.3), 0.0, rng.uniform(-1.0, 1.0) + pts[:, 2].mean() * 0])
        width = rng.uniform(0.05, 0.5)
        prof = np.exp(-np.sum((pts - c) ** 2, axis=1) / (2 * width ** 2))
        sources.append((prof[:, None] * rng.normal(size=(1, 9))).ravel())
    sols = [q(g) for g in sources]
    q_norm = max(norm_u(x) / norm_g(g) for x, g in zip(sols, sources) if norm_g(g) > 0)
    const = 0.0
    for i, xa in enumerate(sols):
        for xb in sols[i:]:
            na, nb = norm_u(xa), norm_u(xb)
            if na > 0 and nb > 0:
                nab = system.quadratic(xa.reshape(-1, 12), xb.reshape(-1, 12)).reshape(-1)
                const = max(const, norm_g(nab) / (na * nb))
    return {"constant": const, "q_norm": q_norm}


def solve_meridian(system: MeridianSystem, max_iterations: int = 50, rtol: float = 1e-12,
                   length: float = None, newton_steps: int = 0, override_guard: bool = False,
                   trials: int = 6, seed: int = 0) -> dict:
    """Contraction w = v - N(Qw, Qw) with v = -e0, then optional Newton steps."""
    from .solver import contract

    n = system.grid.size
    if length is None:
        length = 1.0 / system.state.meta["mass"]
    gram = norm_matrix(system, length)
    norm_u, norm_g = _norms(system, gram)
    q = RightInverse(system.linear, gram)
    v = -system.e0.reshape(-1)
    gc = guard_constants(system, q, gram, v, trials, seed)
    k_lip = gc["constant"] * gc["q_norm"] ** 2

    def quad(w):
        x = q(w).reshape(-1, 12)
        return system.quadratic(x, x).reshape(-1)

    res = contract(v, quad, k_lip, norm=norm_g, rtol=rtol, max_iterations=max_iterations,
                   override_guard=override_guard)
    x = q(res["u"])
    history = [float(system.norms(np.zeros(12 * n)).max()), float(system.norms(x).max())]
    for _ in range(newton_steps):
        step = RightInverse(system.jacobian(x), gram)(-system.residual(x))
        x = x + step
        history.append(float(system.norms(x).max()))
    return {"x": x, "history": history, "initial_sup": history[0], "final_sup": history[-1],
            "length": length, "iterations": res["iterations"], "update_norms": res["history"],
            "guard_held": res["guard"], "certificate": res["certificate"], "constant": gc["constant"],
            "q_norm": gc["q_norm"], "correction_norm": norm_u(x), "initial_error_norm": norm_g(v)}


def correction_evaluator(system: MeridianSystem, x: np.ndarray, chart: int):
    """Equivariant 3D evaluator of the correction in the given chart's gauge.

    Nodes of other charts are rotated into this chart first; values at -rho
    come from the half-turn, so the bicubic spline is regular on the axis.
    """
    from scipy.interpolate import RectBivariateSpline

    nr, nz = system.grid.shape
    u = x.reshape(-1, 12).copy()
    other = system.chart != chart
    if other.any():
        p = system.pts[other]
        rot = minimal_rotation(system._sigma(p, system.chart[other]), system._sigma(p, np.full(len(p), chart)))
        u[other] = np.einsum("mij,mj->mi", _algebra_map(rot), u[other])
    u = u.reshape(nr, nz, 12)
    mirror = np.einsum("ij,rzj->rzi", _section_map(_HALF_TURN), u[::-1])
    rho = np.concatenate([-system.grid.rho[::-1], system.grid.rho])
    vals = np.concatenate([mirror, u], axis=0)
    splines = [RectBivariateSpline(rho, system.grid.z, vals[:, :, c]) for c in range(12)]

    def ev(pts):
        pts = np.asarray(pts, dtype=float)
        rr = np.hypot(pts[:, 0], pts[:, 1])
        ang = np.arctan2(pts[:, 1], pts[:, 0])
        local = np.stack([s(rr, pts[:, 2], grid=False) for s in splines], axis=-1)
        outside = (rr > rho[-1]) | (pts[:, 2] < system.grid.z[0]) | (pts[:, 2] > system.grid.z[-1])
        local[outside] = 0.0
        c, s_ = np.cos(ang), np.sin(ang)
        rot = np.zeros((len(pts), 3, 3))
        rot[:, 0, 0], rot[:, 0, 1], rot[:, 1, 0], rot[:, 1, 1], rot[:, 2, 2] = c, -s_, s_, c, 1.0
        full = np.einsum("mij,mj->mi", _section_map(rot), local)
        return full[:, :9].reshape(-1, 3, 3), full[:, 9:]

    return ev


def corrected_evaluator(system: MeridianSystem, x: np.ndarray, chart: int):
    base = system.state.chart_evaluator(chart)
    corr = correction_evaluator(system, x, chart)

    def ev(pts):
        a0, p0 = base(pts)
        a1, p1 = corr(pts)
        return a0 + a1, p0 + p1

    return ev


def _grouped_density(system: MeridianSystem, x: np.ndarray, h: float, corrected: bool = True):
    state = system.state
    pws = []
    for i in range(len(state.charts)):
        ev = corrected_evaluator(system, x, i) if corrected else state.chart_evaluator(i)
        pws.append(Pointwise(state.model, ev, h, 4))

    def density(p):
        idx = state.chart_index(p)
        out = np.empty(len(p))
        for i, pw in enumerate(pws):
            sel = idx == i
            if sel.any():
                out[sel] = pw.energy_density(p[sel])
        return out

    return density


def axial_energy(system: MeridianSystem, x: np.ndarray, inner: float = 2.0, outer: float = 30.0,
                 h: float = 1e-4, **quad) -> dict:
    """Energy of the corrected field: corrected density inside `inner`, glued
    density out to `outer`, abelian tail 2 pi k^2/outer beyond."""
    from .diagnostics import integrate

    state = system.state
    centers = np.array([c.center for c in state.charts])
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    local = 0.5 * d[d > 0].min() if len(centers) > 1 else 1.0
    core = 1e-3 / max(c.lam for c in state.charts)
    dens_c = _grouped_density(system, x, h, True)
    dens_0 = _grouped_density(system, x, h, False)
    inside = integrate(dens_c, centers, core, inner, local, **quad)
    base_in = integrate(dens_0, centers, core, inner, local, **quad)
    base_out = integrate(dens_0, centers, core, outer, local, **quad)
    k = sum(state.meta["charges"])
    tail = 2.0 * math.pi * k * k / outer
    total = inside + (base_out - base_in) + tail
    return {"bulk_with_tail": total, "approximate_with_tail": base_out + tail,
            "correction_change": inside - base_in, "tail": tail, "inner": inner, "outer": outer}


def offgrid_check(system: MeridianSystem, x: np.ndarray, per_center: int = 3000, seed: int = 0,
                  h: float = 1e-4) -> dict:
    """Continuum residual of the glued and corrected fields on shared random points."""
    state = system.state
    rng = np.random.default_rng(seed)
    lam = max(c.lam for c in state.charts)
    clouds = []
    for ch in state.charts:
        r = np.geomspace(0.05 / lam, 1.0, per_center)
        u = rng.normal(size=(per_center, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        clouds.append(ch.center + r[:, None] * u)
        t = np.linspace(ch.eps_in, ch.eps_out, 64)
        for s in (-1.0, 1.0):
            clouds.append(ch.center + s * t[:, None] * np.array([0.0, 0.0, 1.0]))
    pts = np.concatenate(clouds)
    idx = state.chart_index(pts)
    before = np.empty(len(pts))
    after = np.empty(len(pts))
    for i in range(len(state.charts)):
        sel = idx == i
        if sel.any():
            before[sel] = Pointwise(state.model, state.chart_evaluator(i), h, 4).residual_norm(pts[sel])
            after[sel] = Pointwise(state.model, corrected_evaluator(system, x, i), h, 4).residual_norm(pts[sel])
    return {"initial_sup": float(before.max()), "final_sup": float(after.max()),
            "argmax": pts[int(np.argmax(after))].tolist(), "points": len(pts)}


@dataclass
class AxialState:
    system: MeridianSystem
    x: np.ndarray

    def evaluator(self, chart: int):
        return corrected_evaluator(self.system, self.x, chart)

    def higgs_modulus(self, pts) -> np.ndarray:
        """|Phi| of the corrected field (the correction is cut off outside the grid)."""
        pts = np.asarray(pts, dtype=float)
        st = self.system.state
        out = st.higgs_modulus(pts)
        rr = np.hypot(pts[:, 0], pts[:, 1])
        z = self.system.grid.z
        inside = (rr < self.system.grid.rho[-1]) & (pts[:, 2] > z[0]) & (pts[:, 2] < z[-1])
        if inside.any():
            idx = st.chart_index(pts[inside])
            vals = np.empty(inside.sum())
            for i in range(len(st.charts)):
                sel = idx == i
                if sel.any():
                    vals[sel] = np.linalg.norm(self.evaluator(i)(pts[inside][sel])[1], axis=-1)
            out[inside] = vals
        return out
