import json
import subprocess
import sys
from pathlib import Path

import pytest

from tspec.analysis import assign_branches, fit_asymptotics
from tspec.cli import CSV_HEADER, cmd_asymptotics, load_config, read_eigenvalue_csv, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _decoupled(tmp_path, **search):
    cfg = json.loads((CONFIGS / "decoupled.json").read_text())
    cfg["search"].update(search)
    return _write(tmp_path, cfg)


def test_solve_decoupled_first_row(tmp_path):
    out = tmp_path / "out"
    assert run(["solve", "--config", str(CONFIGS / "decoupled.json"), "--out", str(out)]) == 0
    rows = (out / "eigenvalues.csv").read_text(encoding="utf-8").split("\n")
    assert rows[0] == ",".join(CSV_HEADER)
    first = rows[1].split(",")
    assert float(first[2]) == pytest.approx(-2.4674011, abs=1e-7)
    assert first[4] == "2" and first[5] == "Shooting"
    assert rows[-1] == "" and "\r" not in (out / "eigenvalues.csv").read_text()
    report = json.loads((out / "solve.json").read_text())
    assert report[0]["status"] == "Pass"


def test_csv_full_precision(tmp_path):
    out = tmp_path / "out"
    run(["solve", "--config", _decoupled(tmp_path, engine="shooting"), "--out", str(out)])
    recs = read_eigenvalue_csv(out / "eigenvalues.csv")
    text = (out / "eigenvalues.csv").read_text().split("\n")[1].split(",")[2]
    assert float(text) == recs[0].value.real
    assert len(text.lstrip("-").replace(".", "").lstrip("0")) >= 15


def test_verify_symmetric_passes(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "symmetric.json").read_text())
    cfg["verify"]["checks"] = ["lagrange"]
    code = run(["verify", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert code == 0
    assert "lagrange: Pass" in capsys.readouterr().out
    report = json.loads((tmp_path / "o" / "verify.json").read_text())
    assert set(report[0]) >= {"name", "status", "constants", "params", "notes"}


def test_failing_check_exits_two(tmp_path, capsys):
    # a ray hugging the negative real axis passes within 5e-3 of the first eigenvalue
    cfg = json.loads((CONFIGS / "decoupled.json").read_text())
    cfg["verify"] = {"checks": ["resolvent"], "ray_angle": 3.1396, "moduli": [2.4674011, 50, 1000]}
    assert run(["verify", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert "resolvent: Fail" in capsys.readouterr().out
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report[0]["witness"]["scan"][0][1] > 100


def test_missing_config_exits_one(tmp_path, capsys):
    assert run(["solve", "--config", str(tmp_path / "nope.json")]) == 1
    assert capsys.readouterr().err.count("\n") == 1


def test_bad_usage_exits_one():
    assert run(["bogus", "--config", "x.json"]) == 1
    assert run(["solve"]) == 1


@pytest.mark.parametrize("mutate", [
    lambda c: c["problem"].update(extra=1),
    lambda c: c.update(plotting={}),
    lambda c: c["problem"].update(p1=0),
    lambda c: c["problem"].update(perturbation={"kind": "cubic"}),
    lambda c: c["search"].update(engine="magic"),
])
def test_malformed_config_exits_one(tmp_path, mutate):
    cfg = json.loads((CONFIGS / "decoupled.json").read_text())
    mutate(cfg)
    assert run(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1


def test_byte_identical_runs(tmp_path):
    path = _decoupled(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["solve", "--config", path, "--out", str(out), "--seed", "7"]) == 0
    for name in ("eigenvalues.csv", "solve.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_csv_round_trip_gives_same_fit(tmp_path):
    out = tmp_path / "out"
    cfg_path = str(CONFIGS / "opposite.json")
    assert run(["solve", "--config", cfg_path, "--out", str(out)]) == 0
    cfg = load_config(cfg_path)
    recs = read_eigenvalue_csv(out / "eigenvalues.csv")
    ingested = tmp_path / "ingested"
    ingested.mkdir()
    cmd_asymptotics(cfg, ingested, recs)
    assert run(["asymptotics", "--config", cfg_path, "--out", str(out)]) == 0
    assert (ingested / "fits.csv").read_bytes() == (out / "fits.csv").read_bytes()
    b = assign_branches(recs, cfg.problem)
    assert fit_asymptotics(b.branch1, 9.8696044, 10).relative_error <= 0.02


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tspec.cli", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("tspec ")


def test_asymptotics_with_kernel_uses_matrix_engine(tmp_path, capsys):
    out = tmp_path / "k"
    assert run(["asymptotics", "--config", str(CONFIGS / "kernel.json"), "--out", str(out)]) == 0
    assert "fit_Single: Pass" in capsys.readouterr().out
    assert (out / "fits.csv").read_text().startswith("branch,leading_coefficient")
