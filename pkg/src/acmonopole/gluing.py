"""Approximate solutions from Dirac data and rescaled BPS monopoles."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .abelian import DiracData, PointCharges, extract_point_constant
from .geometry import ManifoldModel
from .radial import RadialGrid, RadialProfile, RadialState, smoothstep, smoothstep_slope


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class GlueParams:
    charges: PointCharges
    constants: tuple
    phases: tuple = ()
    twist: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        k = len(self.charges.points)
        phases = tuple(float(t) for t in self.phases) if self.phases else (0.0,) * k
        object.__setattr__(self, "phases", phases)
        if len(phases) != k or len(self.constants) != k:
            raise ValueError("one phase and one constant per point required")

    @property
    def m0(self) -> float:
        return self.charges.mass

    @property
    def lambdas(self) -> np.ndarray:
        return self.m0 + np.asarray(self.constants, dtype=float)

    @property
    def eps_in(self) -> np.ndarray:
        return self.lambdas ** -0.5

    @property
    def eps_out(self) -> np.ndarray:
        return 2.0 * self.lambdas ** -0.5

    def checks(self) -> dict:
        """Every validated inequality with its truth value."""
        lam = self.lambdas
        dmin = self.charges.min_distance()
        total = sum(self.phases)
        wrapped = abs((total + math.pi) % (2 * math.pi) - math.pi)
        cs = np.abs(np.asarray(self.constants, dtype=float))
        return {
            "unit_charges": all(k == 1 for k in self.charges.charges),
            "separation": bool(dmin > 4.0 / math.sqrt(self.m0)),
            "positive_masses": bool(np.all(lam > 0)),
            "balls_disjoint": bool(np.all(self.eps_out < 0.5 * dmin)) if np.all(lam > 0) else False,
            "phase_sum": bool(wrapped < 1e-9),
            "mass_above_constants": bool(self.m0 > 1.0 + 2.0 * (cs.max() if len(cs) else 0.0)),
        }

    def validate(self) -> "GlueParams":
        c = self.checks()
        required = ("unit_charges", "separation", "positive_masses", "balls_disjoint", "phase_sum")
        bad = [name for name in required if not c[name]]
        if bad:
            raise ValueError("GlueParams invariant violated: " + ", ".join(bad))
        return self


def make_params(dirac: DiracData, phases=(), twist=None) -> GlueParams:
    consts = tuple(extract_point_constant(dirac, i) for i in range(len(dirac.charges.points)))
    return GlueParams(dirac.charges, consts, tuple(phases), twist).validate()


def cutoff_profile(params: GlueParams, distances) -> dict:
    """chi_in per point, chi_out, and the radial slopes, from distances to each point.

    `distances` has shape (..., k) (normal-coordinate radii).
    """
    d = np.asarray(distances, dtype=float)
    width = params.eps_out - params.eps_in
    t = (d - params.eps_in) / width
    chi_in = 1.0 - smoothstep(t)
    dchi_in = -smoothstep_slope(t) / width
    chi_out = 1.0 - chi_in.sum(axis=-1)
    return {"chi_in": chi_in, "dchi_in": dchi_in, "chi_out": chi_out,
            "gradient_bound": float(np.max(1.875 / width)) if width.size else 0.0}


# --- radial backend -------------------------------------------------------

def radial_grid_for(model: ManifoldModel, lam: float, r_max: float = 100.0, ratio: float = 1.01) -> RadialGrid:
    return RadialGrid(model, 1e-3 / lam, r_max, ratio)


def assemble_radial(model: ManifoldModel, params: GlueParams, dirac: DiracData,
                    r_max: float = 100.0, ratio: float = 1.01) -> RadialState:
    if len(params.charges.points) != 1 or not np.allclose(params.charges.array[0], 0.0):
        raise ValueError("radial backend needs one charge at the origin")
    if not model.radial:
        raise ValueError("radial backend needs a rotationally symmetric metric")
    d = dirac.with_mass(params.m0)
    prof = d.radial_profile
    if prof is None:
        raise ValueError("Dirac data has no radial profile")

    def slope(r):
        x = np.stack([np.zeros_like(r), np.zeros_like(r), r], axis=-1)
        return d.gradient(x)[..., 2]

    lam = float(params.lambdas[0])
    base = RadialProfile(model, lam, float(params.eps_in[0]), float(params.eps_out[0]), prof, slope)
    grid = radial_grid_for(model, lam, r_max, ratio)
    meta = {"mass": params.m0, "charge": 1, "lambda": lam, "eps_in": float(params.eps_in[0]),
            "eps_out": float(params.eps_out[0]), "phase": params.phases[0], "c": float(params.constants[0])}
    return RadialState.from_profile(grid, base, meta)


def error_term_radial(state: RadialState, samples: int = 4000) -> dict:
    """Sup of the base error on a dense radial sample, its support, and rescaled sup."""
    base = state.base
    r_top = state.grid.nodes[-1]
    r = np.geomspace(1e-4 / base.lam, r_top, samples)
    er, et = base.residual(r)
    mag = np.sqrt(er * er + 2 * et * et)
    m0 = state.meta.get("mass", base.lam)
    eps_out = state.meta.get("eps_out", math.inf)
    outside = r > eps_out * 1.0001
    return {
        "sup": float(mag.max()),
        "argmax_radius": float(r[np.argmax(mag)]),
        "sup_outside_eps_out": float(mag[outside].max()) if outside.any() else 0.0,
        "support_radius": float(r[mag > 1e-8 * mag.max()].max()),
        "rescaled_sup": float(mag.max() / m0 ** 2),
        "mass": m0,
    }
