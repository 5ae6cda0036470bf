import json
import subprocess
import sys

import pytest

from cllns.cli import main
from cllns.generators import gen_mis
from cllns.ilp import read_ilp, read_solution, write_ilp

from conftest import brute_force, mixed_instance


def test_gen_writes_instances_and_manifest(tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["gen", "--family", "mvc", "--nodes", "30", "--degree", "4", "--count", "5", "--seed", "7",
                 "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["instances"]) == 5
    for e in manifest["instances"]:
        assert read_ilp(out / e["file"]).n == 30
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["seed"] == 7 and json.loads((out / "config.json").read_text()) == echoed


def test_gen_is_reproducible_and_seed_position_free(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["gen", "--family", "sc", "--vars", "20", "--cons", "30", "--count", "2", "--seed", "3", "--out", str(a)])
    main(["--seed", "3", "gen", "--family", "sc", "--vars", "20", "--cons", "30", "--count", "2", "--out", str(b)])
    for f in sorted(p.name for p in a.iterdir()):
        if f != "config.json":
            assert (a / f).read_bytes() == (b / f).read_bytes()


def test_env_seed_fallback(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CLLNS_SEED", "11")
    main(["gen", "--family", "mis", "--nodes", "12", "--out", str(tmp_path / "e")])
    assert json.loads(capsys.readouterr().out)["seed"] == 11
    monkeypatch.setenv("CLLNS_SEED", "11")
    main(["gen", "--family", "mis", "--nodes", "12", "--seed", "4", "--out", str(tmp_path / "f")])
    assert json.loads(capsys.readouterr().out)["seed"] == 4


@pytest.mark.parametrize("seed", range(6))
def test_solve_matches_brute_force(tmp_path, capsys, seed):
    ilp = mixed_instance(seed, 15)
    p = tmp_path / "i.json"
    write_ilp(ilp, p)
    sol = tmp_path / "sol.json"
    assert main(["solve", "--instance", str(p), "--node-limit", "100000", "--out", str(sol)]) == 0
    text = capsys.readouterr().out
    opt, _ = brute_force(ilp)
    if opt is None:
        assert "status Infeasible" in text
        return
    assert "status Optimal" in text
    assert read_solution(sol, ilp).objective == pytest.approx(opt)
    assert (tmp_path / "sol.json.config.json").exists()


def test_usage_errors_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main(["solve"]) == 2
    assert main(["gen", "--family", "mvc", "--out", "x", "--bogus"]) == 2
    assert main(["--threads", "0", "gen", "--family", "mvc", "--out", "x"]) == 2


def test_unknown_subcommand_via_module():
    r = subprocess.run([sys.executable, "-m", "cllns", "nope"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr


def test_domain_errors_exit_1(tmp_path, capsys):
    assert main(["solve", "--instance", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--instance", str(bad)]) == 1
    assert "bad.json" in capsys.readouterr().err
    p = tmp_path / "i.json"
    write_ilp(gen_mis(8, 2, 0), p)
    assert main(["lns", "--instance", str(p), "--method", "policy", "--out", str(tmp_path / "r.csv")]) == 1
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"k0": 50}))
    assert main(["lns", "--instance", str(p), "--method", "random", "--params", str(params),
                 "--out", str(tmp_path / "r.csv")]) == 1


def test_lns_subcommand_reproducible_from_sidecar(tmp_path, capsys):
    p = tmp_path / "i.json"
    write_ilp(gen_mis(20, 3, 1), p)
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"k0": 3, "clock": "iteration", "init": "constant"}))
    out1 = tmp_path / "r1.csv"
    assert main(["lns", "--instance", str(p), "--method", "graph", "--params", str(params),
                 "--iterations", "15", "--seed", "2", "--out", str(out1)]) == 0
    side = json.loads((tmp_path / "r1.csv.config.json").read_text())
    params2 = tmp_path / "p2.json"
    params2.write_text(json.dumps(side["params"]))
    out2 = tmp_path / "r2.csv"
    assert main(["lns", "--instance", str(p), "--method", "graph", "--params", str(params2),
                 "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_help_exits_zero(capsys):
    for cmd in ("gen", "solve", "lns", "collect", "train", "eval", "report"):
        assert main([cmd, "--help"]) == 0
        assert "usage" in capsys.readouterr().out
