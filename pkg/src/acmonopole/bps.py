"""Charge-1 BPS monopole: profiles, hedgehog and abelian gauge forms.

With su(2) = R^3 and [x, y] = 2 x cross y, the mass-lam field centred at c is

    Phi = -phi(r) xhat,   A_i = (1 - w(r)) / (2 r) eps_{. i j} xhat_j,
    phi(r) = lam * h(2 lam r),   w(r) = q(2 lam r),

with the standard profiles h(s) = coth s - 1/s and q(s) = s / sinh s.  Then
|Phi| = lam - 1/(2r) + ..., matching a unit Dirac charge, and the energy is
4 pi lam.  The Higgs field points along -xhat: with this bracket and the
orientation dx^dy^dz, that is the sign solving *F = grad Phi rather than
*F = -grad Phi.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import EPS3, DomainError
from .su2 import adjoint_action, group_element

HEDGEHOG = "Hedgehog"
ABELIAN = "AbelianOutside"
_SERIES_CUT = 0.1


def profile_h(s):
    """coth s - 1/s, smooth at 0."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < _SERIES_CUT
    s2 = s * s
    ser = s * (1 / 3 - s2 / 45 + 2 * s2 * s2 / 945 - s2 ** 3 / 4725 + 2 * s2 ** 4 / 93555)
    safe = np.where(small, 1.0, s)
    direct = 1.0 / np.tanh(safe) - 1.0 / safe
    return np.where(small, ser, direct)


def profile_w(s):
    """s / sinh s without overflow."""
    s = np.abs(np.asarray(s, dtype=float))
    small = s < _SERIES_CUT
    s2 = s * s
    ser = 1 - s2 / 6 + 7 * s2 * s2 / 360 - 31 * s2 ** 3 / 15120 + 127 * s2 ** 4 / 604800
    e = np.exp(-np.where(small, 1.0, s))
    direct = 2.0 * s * e / (1.0 - e * e)
    return np.where(small, ser, direct)


def profile_h_over_s(s):
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < _SERIES_CUT
    s2 = s * s
    ser = 1 / 3 - s2 / 45 + 2 * s2 * s2 / 945 - s2 ** 3 / 4725 + 2 * s2 ** 4 / 93555
    safe = np.where(small, 1.0, s)
    return np.where(small, ser, profile_h(safe) / safe)


def profile_1mw_over_s2(s):
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < _SERIES_CUT
    s2 = s * s
    ser = 1 / 6 - 7 * s2 / 360 + 31 * s2 * s2 / 15120 - 127 * s2 ** 3 / 604800 + 73 * s2 ** 4 / 3421440
    safe = np.where(small, 1.0, s)
    return np.where(small, ser, (1.0 - profile_w(safe)) / (safe * safe))


def higgs_profile(lam: float, r):
    """|Phi| of the mass-lam field at distance r."""
    return lam * profile_h(2.0 * lam * np.asarray(r, dtype=float))


def w_profile(lam: float, r):
    return profile_w(2.0 * lam * np.asarray(r, dtype=float))


def energy_density_profile(lam: float, r):
    """|F|^2 + |grad Phi|^2 (trace form, so it integrates to 4 pi lam)."""
    r = np.asarray(r, dtype=float)
    s = 2.0 * lam * r
    phi_r = lam * 2.0 * lam * profile_h_over_s(s)  # phi / r
    w = profile_w(s)
    one_m_w2_r2 = (1 + w) * 4 * lam * lam * profile_1mw_over_s2(s)  # (1-w^2)/r^2
    return 0.5 * one_m_w2_r2 ** 2 + 4.0 * (phi_r * w) ** 2


@dataclass(frozen=True)
class BpsField:
    mass: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    phase: float = 0.0
    gauge: str = HEDGEHOG

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("BPS mass must be positive")
        if self.gauge not in (HEDGEHOG, ABELIAN):
            raise ValueError(f"unknown gauge {self.gauge!r}")


def hedgehog_fields(lam: float, x: np.ndarray, w_scale=None):
    """Hedgehog fields at displacements x from the centre.

    `w_scale` optionally multiplies the transverse profile w (used when
    blending with a Dirac field, which is the w = 0 hedgehog).
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    s = 2.0 * lam * r
    phi_over_r = 2.0 * lam * lam * profile_h_over_s(s)
    if w_scale is None:
        c_over_r = 2.0 * lam * lam * profile_1mw_over_s2(s)
    else:
        safe = np.where(r > 0, r, 1.0)
        c_over_r = (1.0 - w_scale * profile_w(s)) / (2.0 * safe * safe)
    higgs = -phi_over_r[..., None] * x
    conn = c_over_r[..., None, None] * np.einsum("aij,...j->...ia", EPS3, x)
    return conn, higgs


def combing_gauge(x: np.ndarray):
    """SU(2)-valued g with g (-xhat) g^-1 = e_3, and the su(2) 1-form dg g^-1.

    Singular on the ray x = (0, 0, -t).
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    rho = np.hypot(x[..., 0], x[..., 1])
    if np.any(r == 0) or np.any((rho < 1e-300) & (x[..., 2] < 0)):
        raise DomainError("point on the combing ray")
    theta = np.arctan2(rho, x[..., 2])
    psi = np.arctan2(x[..., 1], x[..., 0])
    n = np.stack([np.sin(psi), -np.cos(psi), np.zeros_like(psi)], axis=-1)
    m = np.stack([np.cos(psi), np.sin(psi), np.zeros_like(psi)], axis=-1)
    g = group_element(0.5 * theta[..., None] * n)
    safe_r = np.where(r > 0, r, 1.0)
    dtheta = np.stack(
        [np.cos(theta) * np.cos(psi), np.cos(theta) * np.sin(psi), -np.sin(theta)],
        axis=-1,
    ) / safe_r[..., None]
    # (1 - cos theta) dpsi and sin theta dpsi are smooth away from the south ray
    dpsi_dir = np.stack([-np.sin(psi), np.cos(psi), np.zeros_like(psi)], axis=-1)
    sin_dpsi = dpsi_dir / safe_r[..., None]
    one_m_cos = np.where(rho > 0, (1.0 - np.cos(theta)) / np.where(rho > 0, np.sin(theta), 1.0), 0.0)
    omc_dpsi = one_m_cos[..., None] * dpsi_dir / safe_r[..., None]
    ez = np.array([0.0, 0.0, 1.0])
    mc = (
        0.5 * dtheta[..., :, None] * n[..., None, :]
        + 0.5 * sin_dpsi[..., :, None] * m[..., None, :]
        + 0.5 * omc_dpsi[..., :, None] * ez
    )
    # the constant half-turn about e_1 sends -e_3 to e_3
    flip = group_element(np.array([0.5 * math.pi, 0.0, 0.0]))
    mc = mc * np.array([1.0, -1.0, -1.0])
    return flip @ g, mc


def to_abelian_gauge(x: np.ndarray, conn: np.ndarray, higgs: np.ndarray, phase: float = 0.0):
    """Transform hedgehog-gauge fields at x into the combed abelian gauge."""
    g, mc = combing_gauge(x)
    a = adjoint_action(g[..., None, :, :], conn) - mc
    p = adjoint_action(g, higgs)
    if phase:
        a, p = _rotate_z(a, phase), _rotate_z(p, phase)
    return a, p


def _rotate_z(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    out = v.copy()
    out[..., 0] = c * v[..., 0] - s * v[..., 1]
    out[..., 1] = s * v[..., 0] + c * v[..., 1]
    return out


def bps_eval(field: BpsField, pts):
    """(A, Phi) at points; A has shape (..., 3 form, 3 algebra)."""
    x = np.asarray(pts, dtype=float) - np.asarray(field.center, dtype=float)
    conn, higgs = hedgehog_fields(field.mass, x)
    if field.gauge == HEDGEHOG:
        return conn, higgs
    return to_abelian_gauge(x, conn, higgs, field.phase)


def apply_phase(field: BpsField, theta: float) -> BpsField:
    """Rotate the asymptotic abelian frame by a constant phase.

    In the abelian gauge this is the constant rotation exp(theta t_3 / 2)
    acting by conjugation.  In the hedgehog gauge the phase is framing data
    only: the corresponding transformation is singular at the centre, so the
    smooth hedgehog fields are returned unchanged.
    """
    return replace(field, phase=float((field.phase + theta) % (2.0 * math.pi)))


def bps_radius_R(tol: float = 1e-12) -> float:
    """Unique R with coth R - 1/R = 1/2."""
    lo, hi = 1.0, 3.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if profile_h(mid) < 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dirac_unit_abelian(lam: float, x: np.ndarray):
    """Unit-charge mass-lam Dirac field in the combed abelian gauge."""
    conn, higgs = hedgehog_fields(lam, x, w_scale=0.0)
    r = np.linalg.norm(x, axis=-1)
    higgs = -(lam - 0.5 / r)[..., None] * x / r[..., None]
    return to_abelian_gauge(x, conn, higgs)


def bps_dirac_gap(field: BpsField, radii) -> dict:
    """Distance between BPS and Dirac fields at the given radii, with decay fits."""
    lam = field.mass
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < 2.0 / lam):
        raise ValueError("radii must be >= 2/lam for the decay fit")
    dirs = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [0.6, 0.0, 0.8]])
    gap_phi, gap_a = [], []
    for r in radii:
        x = r * dirs
        a_b, p_b = to_abelian_gauge(x, *hedgehog_fields(lam, x))
        a_d, p_d = dirac_unit_abelian(lam, x)
        gap_phi.append(np.max(np.linalg.norm(p_b - p_d, axis=-1)))
        gap_a.append(np.max(np.linalg.norm((a_b - a_d).reshape(len(x), -1), axis=-1)))
    gap_phi, gap_a = np.array(gap_phi), np.array(gap_a)
    report = {"radii": radii.tolist(), "gap_higgs": gap_phi.tolist(), "gap_connection": gap_a.tolist()}
    if len(radii) >= 2:
        report["rate_higgs"] = float(np.polyfit(radii, np.log(gap_phi), 1)[0])
        report["rate_connection"] = float(np.polyfit(radii, np.log(gap_a), 1)[0])
    return report
