import json

import pytest

from acmonopole.cli import main
from acmonopole.io import load_fields


def _cfg(tmp_path, **charges):
    body = {"manifold": {"kind": "ConePerturbation", "amplitude": 0.05, "rate": -1.0},
            "charges": {"points": [[0, 0, 0]], "charges": [1], "mass": 20.0, **charges}}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(body))
    return p


def test_check_passes_on_defaults(tmp_path, capsys):
    assert main(["check", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "check.json").read_text())
    assert rep["pass"] and all(rep["checks"].values())
    assert "FAIL" not in capsys.readouterr().out


def test_rates_lists_critical_rates(tmp_path, capsys):
    assert main(["rates", "--out", str(tmp_path)]) == 0
    rates = json.loads((tmp_path / "rates.json").read_text())["critical_rates"]
    assert not any(-2 < r < -1 for r in rates)
    assert capsys.readouterr().out.strip()


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_bad_config_is_usage_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"charges": {"mass": -3}}))
    assert main(["dirac", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "charges.mass" in capsys.readouterr().err


def test_missing_config_is_usage_error(tmp_path):
    assert main(["dirac", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2


def test_guard_violation_exit_code(tmp_path, capsys):
    cfg = _cfg(tmp_path, mass=1.0)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "contraction guard" in capsys.readouterr().err
    assert json.loads((tmp_path / "solve.json").read_text())["status"] == "guard_violation"


def test_radial_solve_with_dump(tmp_path):
    cfg = _cfg(tmp_path)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path), "--dump-fields"]) == 0
    rep = json.loads((tmp_path / "solve.json").read_text())
    assert rep["status"] == "ok" and rep["final_sup"] < rep["initial_sup"]
    header, arrays = load_fields(tmp_path / "solve.fields")
    assert header["backend"] == "radial" and arrays["w"].shape == arrays["r"].shape


def test_reports_are_deterministic(tmp_path):
    cfg = _cfg(tmp_path)
    outs = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert main(["glue", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
        outs.append((out / "glue.json").read_bytes())
    assert outs[0] == outs[1]
