"""Run configuration, deterministic reports and binary field dumps."""

import copy
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
CONVENTIONS = {
    "algebra_basis": "t_a = -i sigma_a",
    "bracket": "[x, y] = 2 x cross y",
    "norm": "euclidean on R^3",
    "higgs_tail": "|Phi| = m - k/(2 rho)",
    "byte_order": "little",
}

# Every numerical tolerance of the pipeline, with its default.
TOLERANCES = {
    "stencil_rtol": 1e-8,
    "cg_rtol": 1e-10,
    "fit_tol": 1e-3,
    "contraction_rtol": 1e-12,
    "right_inverse_check": 1e-8,
    "weitzenbock_relative": 1e-5,
    "gauge_relative": 1e-6,
    "energy_relative": 0.02,
    "residual_reduction": 1e-2,
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS = {
    "manifold": {"kind": "Euclidean3", "rate": -1.0},
    "charges": {"points": [[0.0, 0.0, 0.0]], "charges": [1], "mass": 40.0, "phases": []},
    "solver": {"beta": -0.5, "max_iterations": 50, "trials": 12, "newton": False, "r_max": 100.0,
               "ratio": 1.01, "masses": [20.0, 40.0, 80.0]},
    "tolerances": TOLERANCES,
    "output": {"dir": "out"},
    "seed": 0,
}


@dataclass
class RunConfig:
    manifold: dict
    charges: dict
    solver: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a mapping")
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        merged = copy.deepcopy(DEFAULTS)
        for key, value in raw.items():
            if isinstance(merged[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(key, "must be a mapping")
                merged[key].update(value)
            else:
                merged[key] = value
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        ch = self.charges
        pts = ch.get("points")
        if not isinstance(pts, list) or not pts:
            raise ConfigError("charges.points", "need a non-empty list of 3-vectors")
        for i, p in enumerate(pts):
            if not (isinstance(p, (list, tuple)) and len(p) == 3 and all(_is_number(x) for x in p)):
                raise ConfigError(f"charges.points[{i}]", "must be three numbers")
        ks = ch.get("charges")
        if not isinstance(ks, list) or len(ks) != len(pts) or not all(isinstance(k, int) for k in ks):
            raise ConfigError("charges.charges", "one integer charge per point")
        if not _is_number(ch.get("mass")) or not ch["mass"] > 0:
            raise ConfigError("charges.mass", "must be a positive number")
        if not isinstance(ch.get("phases", []), list):
            raise ConfigError("charges.phases", "must be a list")
        if not isinstance(self.seed, int):
            raise ConfigError("seed", "must be an integer")
        for key, value in self.tolerances.items():
            if key not in TOLERANCES:
                raise ConfigError(f"tolerances.{key}", "unknown tolerance")
            if not _is_number(value) or not value > 0:
                raise ConfigError(f"tolerances.{key}", "must be a positive number")
        kind = self.manifold.get("kind")
        if kind not in ("Euclidean3", "ConePerturbation"):
            raise ConfigError("manifold.kind", f"unknown manifold kind {kind!r}")

    def to_dict(self) -> dict:
        return {"manifold": self.manifold, "charges": self.charges, "solver": self.solver,
                "tolerances": self.tolerances, "output": self.output, "seed": self.seed}


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        raw = yaml.safe_load(text) or {}
    else:
        raw = json.loads(text)
    return RunConfig.from_dict(raw)


# --- reports ---------------------------------------------------------------------

def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, columns: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    rows = zip(*(np.asarray(columns[n]).tolist() for n in names))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
    return path


# --- field dumps -----------------------------------------------------------------

def dump_fields(path, arrays: dict, backend: str, charts=(), grid_shape=()) -> Path:
    """JSON header line, then each array as raw little-endian float64."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": a.nbytes})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = {"schema_version": SCHEMA_VERSION, "backend": backend, "charts": to_jsonable(list(charts)),
              "grid_shape": list(grid_shape), "conventions": CONVENTIONS, "arrays": entries}
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            fh.write(b)
    return path


def load_fields(path) -> tuple:
    data = Path(path).read_bytes()
    cut = data.index(b"\n")
    header = json.loads(data[:cut])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("unsupported field dump schema")
    payload = data[cut + 1:]
    arrays = {}
    for e in header["arrays"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f8").reshape(e["shape"]).copy()
    return header, arrays
