"""Command line entry point: acmonopole <subcommand> [--config PATH] ..."""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .abelian import (PointCharges, end_fit, extract_point_constant, flux, minimum_higgs_check,
                      solve_dirac_potential)
from .geometry import critical_rates, load_manifold, ricci

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_GUARD = 0, 1, 2, 3


def _charges(cfg: io.RunConfig) -> PointCharges:
    ch = cfg.charges
    return PointCharges(tuple(tuple(float(x) for x in p) for p in ch["points"]),
                        tuple(ch["charges"]), float(ch["mass"]))


def _setup(cfg: io.RunConfig):
    model = load_manifold(cfg.manifold)
    return model, _charges(cfg)


# --- subcommands ------------------------------------------------------------------

def cmd_rates(cfg, args, out: Path) -> int:
    model = load_manifold(cfg.manifold)
    window = tuple(cfg.solver.get("rate_window", (-4.0, 2.0)))
    rates = critical_rates(model.link, window)
    beta = float(cfg.solver["beta"])
    report = {"link": model.link.name, "window": list(window), "critical_rates": rates,
              "beta": beta, "beta_critical": any(abs(beta - r) < 1e-12 for r in rates)}
    io.write_json(out / "rates.json", report)
    print(" ".join(f"{r:g}" for r in rates))
    return EXIT_OK


def cmd_dirac(cfg, args, out: Path) -> int:
    model, charges = _setup(cfg)
    dirac = solve_dirac_potential(model, charges)
    pts = charges.array
    dmin = charges.min_distance()
    small = min(0.25 * dmin, 0.1) if math.isfinite(dmin) else 0.1
    consts = [extract_point_constant(dirac, i) if k == 1 else None for i, k in enumerate(charges.charges)]
    report = {
        "method": dirac.method,
        "constants": consts,
        "small_sphere_fluxes": [flux(dirac, p, small) for p in pts],
        "large_sphere_flux": flux(dirac, np.zeros(3), 40.0 + float(np.max(np.abs(pts)) if len(pts) else 0.0)),
        "end_fit": end_fit(dirac),
        "minimum_higgs": minimum_higgs_check(dirac, charges.mass, seed=cfg.seed),
    }
    io.write_json(out / "dirac.json", report)
    if args.dump_fields:
        grid = np.linspace(-4.0, 4.0, 33)
        x = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1).reshape(-1, 3)
        near = np.min(np.linalg.norm(x[:, None] - pts[None], axis=-1), axis=1) < 1e-9 if len(pts) else np.zeros(len(x), bool)
        x = x[~near]
        io.dump_fields(out / "dirac.fields", {"points": x, "phi": dirac.potential(x)}, "closed-form"
                       if dirac.method == "closed-form" else dirac.method)
    print(f"dirac: constants={consts} end fit m={report['end_fit']['m_fit']:.6f} k={report['end_fit']['k_fit']:.6f}")
    return EXIT_OK


def cmd_bps(cfg, args, out: Path) -> int:
    from .bps import BpsField, bps_eval, bps_radius_R, energy_density_profile, higgs_profile
    from .covariant import Pointwise

    lam = float(cfg.charges["mass"])
    r = np.geomspace(1e-3 / lam, 50.0 / lam, 200)
    io.write_csv(out / "bps_profile.csv", {"r": r, "higgs": higgs_profile(lam, r),
                                           "energy_density": energy_density_profile(lam, r)})
    model = load_manifold({"kind": "Euclidean3"})
    field = BpsField(lam)
    rng = np.random.default_rng(cfg.seed)
    p = rng.normal(size=(64, 3)) * (2.0 / lam)
    res = Pointwise(model, lambda x: bps_eval(field, x), 1e-3 / lam, 6).residual_norm(p)
    report = {"mass": lam, "R": bps_radius_R(), "residual_sup": float(res.max()) / lam ** 2,
              "profile_csv": "bps_profile.csv"}
    io.write_json(out / "bps.json", report)
    print(f"bps: R = {report['R']:.12f}")
    return EXIT_OK


def _glue(cfg):
    from .gluing import make_params

    model, charges = _setup(cfg)
    dirac = solve_dirac_potential(model, charges)
    phases = tuple(cfg.charges.get("phases") or ())
    params = make_params(dirac, phases=phases)
    return model, dirac, params


def _radial_case(model, params) -> bool:
    return model.radial and len(params.charges.points) == 1 and np.allclose(params.charges.array[0], 0.0)


def cmd_glue(cfg, args, out: Path) -> int:
    from .atlas import assemble_atlas, error_term_3d
    from .gluing import assemble_radial, error_term_radial

    model, dirac, params = _glue(cfg)
    report = {"lambdas": params.lambdas, "eps_in": params.eps_in, "eps_out": params.eps_out,
              "checks": params.checks()}
    mh = minimum_higgs_check(dirac, params.m0, seed=cfg.seed)
    report["minimum_higgs"] = mh
    if _radial_case(model, params):
        state = assemble_radial(model, params, dirac, float(cfg.solver["r_max"]), float(cfg.solver["ratio"]))
        report["backend"] = "radial"
        report["error"] = error_term_radial(state)
        if args.dump_fields:
            r = state.grid.nodes
            w, phi = state.base.fields(np.maximum(r, 1e-300))
            io.dump_fields(out / "glue.fields", {"r": r, "w": w, "phi": phi}, "radial",
                           charts=[{"gauge": "hedgehog", "center": [0, 0, 0]}], grid_shape=r.shape)
    else:
        state = assemble_atlas(model, params, dirac)
        report["backend"] = "atlas3d"
        report["charts"] = state.describe()
        report["error"] = error_term_3d(state, seed=cfg.seed)
        if args.dump_fields:
            rng = np.random.default_rng(cfg.seed)
            x = rng.uniform(-2.0, 2.0, size=(4096, 3))
            conn, higgs = state.evaluator()(x)
            io.dump_fields(out / "glue.fields", {"points": x, "connection": conn, "higgs": higgs,
                                                 "chart": state.chart_index(x).astype(float)},
                           "atlas3d", charts=state.describe(), grid_shape=(len(x),))
    io.write_json(out / "glue.json", report)
    print(f"glue: sup|e0| = {report['error']['sup']:.6e} (backend {report['backend']})")
    return EXIT_OK


def cmd_linear(cfg, args, out: Path) -> int:
    from .gluing import assemble_radial
    from .linear import RadialLinear, adjointness_defect, ball_scale_ratio, q_ratios, source_family

    model, dirac, params = _glue(cfg)
    if not _radial_case(model, params):
        raise io.ConfigError("charges.points", "the linear report needs one charge at the origin")
    state = assemble_radial(model, params, dirac, float(cfg.solver["r_max"]), float(cfg.solver["ratio"]))
    lin = RadialLinear(state, beta=float(cfg.solver["beta"]), rtol=float(cfg.tolerances["cg_rtol"]))
    q = q_ratios(lin, source_family(seed=cfg.seed))
    report = {"beta": lin.beta, "adjointness_defect": adjointness_defect(lin, cfg.seed),
              "q_ratios": q["ratios"], "q_max_ratio": q["max_ratio"],
              "right_inverse_residual": q["max_relative_residual"], "ball_scale_ratio": ball_scale_ratio(lin),
              "unknowns": lin.d2.shape[1], "equations": lin.d2.shape[0]}
    io.write_json(out / "linear.json", report)
    if args.dump_fields:
        coo = lin.d2.tocoo()
        with (out / "d2.coo").open("w") as fh:
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v!r}\n")
    print(f"linear: max |Qg|/|g| = {q['max_ratio']:.4f}")
    return EXIT_OK


def cmd_solve(cfg, args, out: Path) -> int:
    from .solver import ContractionConfig, GuardError, monopole_solve

    model, dirac, params = _glue(cfg)
    s = cfg.solver
    conf = ContractionConfig(max_iterations=int(s["max_iterations"]), rtol=float(cfg.tolerances["contraction_rtol"]),
                             beta=float(s["beta"]), override_guard=bool(args.override_guard),
                             trials=int(s["trials"]), newton=bool(s["newton"]))
    try:
        state, report = monopole_solve(model, params, dirac, conf, seed=cfg.seed,
                                       r_max=float(s["r_max"]), ratio=float(s["ratio"]))
    except GuardError as exc:
        io.write_json(out / "solve.json", {"status": "guard_violation", "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    data = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    ok = bool(data.get("converged")) and bool(data.get("guard_held")) and bool(data.get("certificate", True))
    data["status"] = "ok" if ok else "failed"
    io.write_json(out / "solve.json", data)
    if args.dump_fields and hasattr(state, "profiles"):
        r = state.grid.nodes
        w, phi = state.profiles()(r)
        io.dump_fields(out / "solve.fields", {"r": r, "w": w, "phi": phi}, "radial",
                       charts=[{"gauge": "hedgehog", "center": [0, 0, 0]}], grid_shape=r.shape)
    elif args.dump_fields:
        g = state.system.grid
        io.dump_fields(out / "solve.fields", {"rho": g.rho, "z": g.z, "correction": state.x.reshape(*g.shape, 12)},
                       "meridian", charts=state.system.state.describe(), grid_shape=g.shape)
    print(f"solve: sup residual {data['initial_sup']:.3e} -> {data['final_sup']:.3e} ({data['status']})")
    return EXIT_OK if ok else EXIT_FAILED


def run_checks(cfg) -> dict:
    """Fast invariant suite on the configured model and charges."""
    from .bps import BpsField, bps_eval
    from .covariant import Pointwise
    from .gluing import assemble_radial, error_term_radial
    from .radial import energy as radial_energy

    model, charges = _setup(cfg)
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(-3, 3, size=(32, 3))
    g = model.metric(x)
    checks = {}
    checks["metric_symmetric"] = bool(np.allclose(g, np.swapaxes(g, 1, 2)))
    checks["volume_positive"] = bool(np.all(np.linalg.det(g) > 0))
    if model.flat:
        checks["ricci_zero"] = bool(np.max(np.abs(ricci(model, x))) == 0.0)
    dirac = solve_dirac_potential(model, charges)
    small = min(0.1, 0.25 * charges.min_distance())
    fl = [flux(dirac, p, small) for p in charges.array]
    checks["point_fluxes"] = bool(all(abs(f - 2 * math.pi * k) < 0.01 * 2 * math.pi
                                      for f, k in zip(fl, charges.charges)))
    fit = end_fit(dirac)
    checks["end_fit"] = bool(abs(fit["m_fit"] - charges.mass) < 1e-3 and fit["k_integer"] == charges.total
                             and fit["k_roundoff"] < 1e-3)
    lam = charges.mass
    p = rng.normal(size=(32, 3)) / lam
    res = Pointwise(load_manifold({"kind": "Euclidean3"}), lambda y: bps_eval(BpsField(lam), y), 1e-3 / lam, 6)
    checks["bps_residual"] = bool(res.residual_norm(p).max() / lam ** 2 < 1e-7)
    _, dirac, params = _glue(cfg)
    pc = params.checks()
    for key in ("separation", "balls_disjoint", "phase_sum", "positive_masses"):
        checks[f"glue_{key}"] = pc[key]
    checks["minimum_higgs"] = minimum_higgs_check(dirac, params.m0, seed=cfg.seed)["pass"]
    if _radial_case(model, params):
        state = assemble_radial(model, params, dirac, float(cfg.solver["r_max"]), float(cfg.solver["ratio"]))
        err = error_term_radial(state)
        if model.flat:
            bound = params.m0 ** 1.5 * math.exp(-math.sqrt(params.m0))
            checks["euclidean_error_small"] = bool(err["sup"] <= bound)
        e = radial_energy(state)
        rel = abs(e["bulk_with_tail"] / (4 * math.pi * params.m0) - 1)
        checks["energy"] = bool(rel < float(cfg.tolerances["energy_relative"]))
        checks["energy_forms_agree"] = bool(abs(e["bulk"] - e["flux"]) < 1e-3 * abs(e["flux"]))
    return checks


def cmd_check(cfg, args, out: Path) -> int:
    checks = run_checks(cfg)
    io.write_json(out / "check.json", {"checks": checks, "pass": all(checks.values())})
    for name in sorted(checks):
        print(f"{'PASS' if checks[name] else 'FAIL'} {name}")
    return EXIT_OK if all(checks.values()) else EXIT_FAILED


COMMANDS = {"rates": cmd_rates, "dirac": cmd_dirac, "bps": cmd_bps, "glue": cmd_glue,
            "linear": cmd_linear, "solve": cmd_solve, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acmonopole", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="YAML or JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the configured random seed")
    parser.add_argument("--out", type=Path, help="output directory (default from config)")
    parser.add_argument("--dump-fields", action="store_true", help="write binary field dumps")
    parser.add_argument("--override-guard", action="store_true",
                        help="run the contraction even when the smallness guard fails")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = io.load_config(args.config) if args.config else io.RunConfig.from_dict({})
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
    except (io.ConfigError, OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out if args.out is not None else Path(cfg.output.get("dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except io.ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
