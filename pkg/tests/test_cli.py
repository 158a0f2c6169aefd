import csv
import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from quasinorm import cli, experiments
from quasinorm.config import OUT_ENV
from quasinorm.errors import ConvergenceError
from quasinorm.gn_estimator import ConstantCache, QuotientSpec
from quasinorm.radial import RadialGrid, load_binary
from quasinorm.records import read_records
from quasinorm.variational import GNConstant, ProblemParams, landscape


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("gn") / "gn_cache.json")


@pytest.fixture
def run(tmp_path, cache, monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)

    def _run(*args, out="out", quick=True):
        argv = list(args) + ["--out", str(tmp_path / out), "--gn-cache", cache, "--no-plots"]
        if quick:
            argv.append("--quick")
        return cli.main(argv), tmp_path / out

    return _run


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_verify_dual(run, capsys):
    code, out = run("verify-dual", "--samples", "4096")
    assert code == 0
    recs = read_records(out)
    manifest = json.loads((out / "manifest.json").read_text())
    assert all(r["manifest"] == manifest["hash"] for r in recs)
    assert all(r["passed"] for r in recs if r["record"] == "dual_check")
    assert "PASS (1)" in capsys.readouterr().out


def test_landscape_csv_matches_closed_form(run):
    code, out = run("landscape")
    assert code == 0
    rows = read_csv(out / "landscape.csv")
    assert list(rows[0]) == ["a", "t_bar", "H_max", "a_star", "a_bar_star"]
    assert len(rows) == 20
    consts = json.loads((out / "manifest.json").read_text())["gn_constants"]
    p = ProblemParams(3, 2.5, 5.8, 1.0, gn_p=GNConstant.from_dict(consts["p"]), gn_q=GNConstant.from_dict(consts["q"]))
    from scipy.optimize import minimize_scalar

    for row in rows:
        a, tb = float(row["a"]), float(row["t_bar"])
        r = minimize_scalar(lambda lt: -landscape(p, math.exp(lt), a), bounds=(math.log(tb) - 2, math.log(tb) + 2),
                            method="bounded", options={"xatol": 1e-12})
        assert math.exp(r.x) == pytest.approx(tb, rel=1e-6)
        assert float(row["H_max"]) == pytest.approx(landscape(p, tb, a), rel=1e-12, abs=1e-15)


def test_minimize_outside_range_exits_nonzero(run):
    code, out = run("minimize", "--a-fraction", "2")
    assert code == 3
    rec = [r for r in read_records(out) if r["record"] == "critical_point"][0]
    assert "outside theorem range" in rec["flags"]


def test_minimize_critical_and_supercritical(run):
    code, out = run("minimize", out="sup")
    assert code == 0
    rec = [r for r in read_records(out) if r["record"] == "critical_point"][0]
    assert rec["kind"] == "local_min" and rec["energy"] < 0 and rec["lambda"] < 0
    assert load_binary(out / "local_min.bin").grid.n >= 512
    assert read_csv(out / "fiber.csv")
    code, out = run("minimize", "-q", "5.333333333333333", out="crit")
    assert code == 0
    assert [r for r in read_records(out) if r["record"] == "critical_point"][0]["kind"] == "global_min"


def test_non_coercive_mass_is_a_config_error(run):
    code, out = run("minimize", "-q", "5.333333333333333", "--a-fraction", "2")
    assert code == 2
    assert read_records(out)[0]["record"] == "minimize_rejected"


@pytest.mark.parametrize("args,match", [
    (["minimize", "-p", "3.5"], "p < 2 + 4/N"),
    (["minimize", "-q", "5.0"], "q >= 4 + 4/N"),
    (["mountain-pass", "-q", "7"], "2^*"),
    (["sweep", "--jobs", "0"], "jobs >= 1"),
])
def test_invalid_configuration_exit_2(run, capsys, args, match):
    code, _ = run(*args)
    assert code == 2
    assert match in capsys.readouterr().err


def test_bad_usage_exit_2(capsys):
    assert cli.main(["minimize", "-q", "x"]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_solver_failure_exit_3(run, monkeypatch):
    def fail(*a, **k):
        raise ConvergenceError("budget exhausted")

    monkeypatch.setattr(experiments, "minimize_at", fail)
    code, out = run("minimize")
    assert code == 3
    assert read_records(out)[0]["record"] == "minimize_failed"


def test_blowup_pair(run):
    code, out = run("blowup", out="sup")
    assert code == 0
    assert read_records(out)[0]["certified"] is True
    code, out = run("blowup", "-q", "5.333333333333333", out="crit")
    assert code == 0
    rec = read_records(out)[0]
    assert rec["certified"] is False and rec["mass_critical"] is True


def test_subadditivity(run):
    code, out = run("subadditivity", "--pair", "0.6", "0.3")
    assert code == 0
    rows = read_csv(out / "subadditivity.csv")
    assert len(rows) == 1 and rows[0]["status"] == "pass"


def test_sweep_is_deterministic_across_jobs(run):
    c1, o1 = run("sweep", "--fractions", "0.2", "0.5", "--thetas", "0.5", "1", "--jobs", "1", out="j1")
    c2, o2 = run("sweep", "--fractions", "0.2", "0.5", "--thetas", "0.5", "1", "--jobs", "2", out="j2")
    assert c1 == c2 == 0
    r1, r2 = read_csv(o1 / "sweep.csv"), read_csv(o2 / "sweep.csv")
    assert len(r1) == 4
    assert [r["energy"] for r in r1] == [r["energy"] for r in r2]
    assert len({r["job_seed"] for r in r1}) == 4


def test_identical_configs_give_identical_outputs(run):
    _, o1 = run("landscape", out="a")
    _, o2 = run("landscape", out="b")
    for name in ("landscape.csv", "landscape_curves.csv", "records.jsonl", "manifest.json", "summary.txt"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()


def test_env_var_and_flag_precedence(tmp_path, cache, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["verify-dual", "--samples", "1024", "--gn-cache", cache]) == 0
    assert (tmp_path / "env" / "records.jsonl").exists()
    assert cli.main(["verify-dual", "--samples", "1024", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "records.jsonl").exists()


def test_config_file_with_flag_override(tmp_path, cache, monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"samples": 2048, "seed": 5, "out_dir": str(tmp_path / "file_out")}))
    assert cli.main(["verify-dual", "--config", str(cfg), "--seed", "7"]) == 0
    manifest = json.loads((tmp_path / "file_out" / "manifest.json").read_text())
    assert manifest["config"]["samples"] == 2048 and manifest["config"]["seed"] == 7


def test_gn_estimate_bumps_underestimated_constant(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)
    path = tmp_path / "cache.json"
    grid = RadialGrid(3, 12.0, 512)
    spec = QuotientSpec("E", 3, 2.5)
    ConstantCache(path).put(spec, grid, GNConstant(3, 2.5, 0.1, grid_signature=grid.signature))
    out = tmp_path / "gn"
    code = cli.main(["gn-estimate", "--quick", "--out", str(out), "--gn-cache", str(path), "--verify-fields", "50"])
    assert code == 4
    bumped = ConstantCache(path).get(spec, grid)
    assert bumped.value > 0.1
    assert list(out.glob("counterexample_E_2.5.bin"))
    # the bumped constant now holds on the same fields
    assert cli.main(["gn-estimate", "--quick", "--out", str(out), "--gn-cache", str(path),
                     "--verify-fields", "50"]) == 0


def test_plots_are_optional(run, tmp_path, cache):
    pytest.importorskip("matplotlib")
    code = cli.main(["landscape", "--quick", "--out", str(tmp_path / "fig"), "--gn-cache", cache])
    assert code == 0 and (tmp_path / "fig" / "landscape.png").exists()
    _, out = run("landscape", out="nofig")
    assert not (out / "landscape.png").exists()


def test_console_script(tmp_path):
    exe = shutil.which("quasinorm")
    cmd = [exe] if exe else [sys.executable, "-m", "quasinorm.cli"]
    proc = subprocess.run(cmd + ["verify-dual", "--samples", "1024", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout
