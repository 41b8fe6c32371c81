"""AC metrics on R^3, curvature by finite differences, and critical rates."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    EPS3[_i, _j, _k] = 1.0
    EPS3[_j, _i, _k] = -1.0


class DomainError(ValueError):
    pass


class GeometryError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LinkSpec:
    name: str = "RoundS2"
    volume: float = 4.0 * math.pi
    spectrum: tuple = ()

    def __post_init__(self):
        if self.name not in ("RoundS2", "Custom"):
            raise ValueError(f"unknown link {self.name!r}")
        if not self.volume > 0:
            raise ValueError("link volume must be positive")
        if self.name == "Custom":
            spec = list(self.spectrum)
            if not spec or spec[0] != 0:
                raise ValueError("link spectrum must start at 0")
            if any(b < a for a, b in zip(spec, spec[1:])):
                raise ValueError("link spectrum must be nondecreasing")

    def eigenvalues(self, mu_max: float) -> list:
        """Distinct Laplace eigenvalues <= mu_max."""
        if self.name == "RoundS2":
            out, l = [], 0
            while l * (l + 1) <= mu_max:
                out.append(l * (l + 1))
                l += 1
            return out
        return sorted({mu for mu in self.spectrum if mu <= mu_max})


ROUND_S2 = LinkSpec()


def critical_rates(link: LinkSpec, window: tuple) -> list:
    """All beta in the closed window with (beta+1)(beta+2) in the link spectrum."""
    lo, hi = float(window[0]), float(window[1])
    if hi < lo:
        return []
    # |beta + 3/2| <= max(|lo+1.5|, |hi+1.5|) bounds the eigenvalues needed
    reach = max(abs(lo + 1.5), abs(hi + 1.5))
    mu_max = reach * reach - 0.25
    rates = set()
    for mu in link.eigenvalues(mu_max):
        disc = 1 + 4 * mu
        if float(mu).is_integer() and math.isqrt(int(disc)) ** 2 == int(disc):
            root = math.isqrt(int(disc))
            cands = [(-3 + root) / 2, (-3 - root) / 2]
        else:
            root = math.sqrt(disc)
            cands = [(-3 + root) / 2, (-3 - root) / 2]
        for b in cands:
            if lo - 1e-12 <= b <= hi + 1e-12:
                rates.add(b)
    return sorted(rates)


def _radial_perturbation(amp: float, nu: float) -> Callable:
    def h(pts: np.ndarray) -> np.ndarray:
        r2 = np.sum(pts * pts, axis=-1)
        coef = amp * (1.0 + r2) ** ((nu - 2.0) / 2.0)
        return coef[..., None, None] * pts[..., :, None] * pts[..., None, :]

    return h


def _anisotropic_perturbation(amp: float, nu: float) -> Callable:
    s = np.diag([1.0, -1.0, 0.0])

    def h(pts: np.ndarray) -> np.ndarray:
        r2 = np.sum(pts * pts, axis=-1)
        coef = amp * (1.0 + r2) ** (nu / 2.0)
        return coef[..., None, None] * s

    return h


@dataclass(frozen=True)
class ManifoldModel:
    """R^3 with metric delta + h, h decaying at rate nu (single conical end).

    The cone over the round sphere is flat R^3, so g_C is the identity in
    these coordinates.  `profile` selects the built-in perturbation family;
    `custom` overrides it with any callable pts -> (..., 3, 3).
    """

    kind: str = "Euclidean3"
    rate: float = -1.0
    link: LinkSpec = ROUND_S2
    amplitude: float = 0.0
    profile: str = "radial"
    compact_core_radius: float = 1.0
    chart_radius: float = math.inf
    b2: int = 0
    custom: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("Euclidean3", "ConePerturbation"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if not self.rate < 0:
            raise ValueError("rate must be negative")
        if self.b2 != 0:
            raise ValueError("manifolds with b2 != 0 are not supported")
        if self.profile not in ("radial", "anisotropic"):
            raise ValueError(f"unknown perturbation profile {self.profile!r}")
        if not self.compact_core_radius > 0:
            raise ValueError("compact_core_radius must be positive")

    @property
    def flat(self) -> bool:
        return self.kind == "Euclidean3" or (self.amplitude == 0 and self.custom is None)

    @property
    def radial(self) -> bool:
        """Metric invariant under rotations about the origin."""
        return self.flat or (self.custom is None and self.profile == "radial")

    def perturbation(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self.flat:
            return np.zeros(pts.shape[:-1] + (3, 3))
        if self.custom is not None:
            return np.asarray(self.custom(pts), dtype=float)
        if self.profile == "radial":
            return _radial_perturbation(self.amplitude, self.rate)(pts)
        return _anisotropic_perturbation(self.amplitude, self.rate)(pts)

    def metric(self, pts: np.ndarray) -> np.ndarray:
        pts = self._check(pts)
        return np.eye(3) + self.perturbation(pts)

    def radial_factor(self, r: np.ndarray) -> np.ndarray:
        """f with g = f^2 dr^2 + r^2 g_S2, for radial models."""
        if not self.radial:
            raise GeometryError("metric is not rotationally symmetric")
        r = np.asarray(r, dtype=float)
        if self.flat:
            return np.ones_like(r)
        p = self.amplitude * r * r * (1.0 + r * r) ** ((self.rate - 2.0) / 2.0)
        return np.sqrt(1.0 + p)

    def rho(self, pts: np.ndarray) -> np.ndarray:
        """Radius function: |x| on the end, smoothly capped at K/4 inside."""
        r = np.linalg.norm(np.asarray(pts, dtype=float), axis=-1)
        return radius_function(r, self.compact_core_radius)

    def _check(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.shape[-1] != 3:
            raise DomainError("points must have 3 coordinates")
        if not np.all(np.isfinite(pts)):
            raise DomainError("non-finite coordinates")
        if np.isfinite(self.chart_radius) and np.any(
            np.linalg.norm(pts, axis=-1) > self.chart_radius
        ):
            raise DomainError("point outside chart domain")
        return pts


def radius_function(r: np.ndarray, core: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    c = 1.0 / (4.0 * core * core)
    return np.where(r >= core, r, r + c * (core - r) ** 3)


def _fd4(fn: Callable, pts: np.ndarray, h: np.ndarray) -> np.ndarray:
    """d/dx_k fn(pts) by 4th-order central differences; result (..., 3, *out)."""
    outs = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        hk = h[..., None]
        fp1 = fn(pts + hk * e)
        fm1 = fn(pts - hk * e)
        fp2 = fn(pts + 2 * hk * e)
        fm2 = fn(pts - 2 * hk * e)
        hb = h.reshape(h.shape + (1,) * (fp1.ndim - h.ndim))
        outs.append((fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * hb))
    return np.stack(outs, axis=h.ndim)


@dataclass
class GeomSample:
    point: np.ndarray
    metric: np.ndarray
    inverse: np.ndarray
    christoffel: np.ndarray  # [k, i, j] = Gamma^k_ij
    ricci: np.ndarray
    volume: np.ndarray
    rho: np.ndarray


def christoffel(model: ManifoldModel, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if model.flat:
        return np.zeros(pts.shape[:-1] + (3, 3, 3))
    h = 1e-4 * (1.0 + model.rho(pts))
    dg = _fd4(model.metric, pts, h)  # [..., l, i, j] = d_l g_ij
    ginv = np.linalg.inv(model.metric(pts))
    # Gamma_{l,ij} = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    low = 0.5 * (
        np.einsum("...ijl->...lij", dg)
        + np.einsum("...jil->...lij", dg)
        - dg
    )
    return np.einsum("...kl,...lij->...kij", ginv, low)


def ricci(model: ManifoldModel, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if model.flat:
        return np.zeros(pts.shape[:-1] + (3, 3))
    h = 1e-3 * (1.0 + model.rho(pts))
    gam = christoffel(model, pts)
    dgam = _fd4(lambda p: christoffel(model, p), pts, h)  # [..., m, k, i, j]
    r = (
        np.einsum("...kkij->...ij", dgam)
        - np.einsum("...jkik->...ij", dgam)
        + np.einsum("...kkl,...lij->...ij", gam, gam)
        - np.einsum("...kjl,...lik->...ij", gam, gam)
    )
    return 0.5 * (r + np.swapaxes(r, -1, -2))


def sample_geometry(model: ManifoldModel, point) -> GeomSample:
    pts = model._check(point)
    g = model.metric(pts)
    w = np.linalg.eigvalsh(g)
    if np.any(w <= 0):
        raise GeometryError("metric not positive definite")
    return GeomSample(
        point=pts,
        metric=g,
        inverse=np.linalg.inv(g),
        christoffel=christoffel(model, pts),
        ricci=ricci(model, pts),
        volume=np.sqrt(np.linalg.det(g)),
        rho=model.rho(pts),
    )


def hodge_star(model: ManifoldModel, point, comps, k: int):
    """Hodge star of a k-form given by its components at one or more points.

    Conventions: 0- and 3-forms are scalars (3-form = coefficient of
    dx^dy^dz), 1-forms are (...,3) arrays, 2-forms antisymmetric (...,3,3).
    """
    if k not in (0, 1, 2, 3):
        raise ValueError("degree must be 0..3")
    g = model.metric(point)
    det = np.linalg.det(g)
    if np.any(det <= 0):
        raise GeometryError("degenerate metric")
    sq = np.sqrt(det)
    ginv = np.linalg.inv(g)
    comps = np.asarray(comps, dtype=float)
    if k == 0:
        return comps * sq
    if k == 3:
        return comps / sq
    if k == 1:
        up = np.einsum("...ij,...j->...i", ginv, comps)
        return sq[..., None, None] * np.einsum("ijk,...i->...jk", EPS3, up)
    up = np.einsum("...ia,...jb,...ab->...ij", ginv, ginv, comps)
    return 0.5 * sq[..., None] * np.einsum("ijk,...ij->...k", EPS3, up)


def load_manifold(cfg: dict) -> ManifoldModel:
    link_cfg = dict(cfg.get("link") or {})
    link = LinkSpec(
        name=link_cfg.get("name", "RoundS2"),
        volume=float(link_cfg.get("volume", 4.0 * math.pi)),
        spectrum=tuple(float(x) for x in link_cfg.get("spectrum", ())),
    )
    pert = dict(cfg.get("perturbation") or {})
    return ManifoldModel(
        kind=cfg.get("kind", "Euclidean3"),
        rate=float(cfg.get("rate", -1.0)),
        link=link,
        amplitude=float(pert.get("amplitude", 0.0)),
        profile=pert.get("profile", "radial"),
        compact_core_radius=float(cfg.get("compact_core_radius", 1.0)),
        b2=int(cfg.get("b2", 0)),
    )
