import json
import subprocess
import sys

import numpy as np
import pytest

from pilotwave import cli
from pilotwave.noise import dumps_noise_config, standard_model
from pilotwave.problems import energy, load_model


def run(*argv):
    return cli.main([str(a) for a in argv])


def _jsonl(path):
    return [json.loads(ln) for ln in path.read_text().splitlines()]


def test_sample_jsonl_and_manifest(tmp_path):
    out = tmp_path / "s.jsonl"
    assert run("sample", "--size", 9, "--p", 2, "--shots", 50, "--seed", 4, "--out", out) == 0
    recs = _jsonl(out)
    assert len(recs) == 50
    assert set(recs[0]) == {"bits", "seed", "oracle_calls", "energy"}
    assert all(len(r["bits"]) == 9 and r["oracle_calls"] <= 2 * 9 * 3 for r in recs)
    man = json.loads((tmp_path / "s.jsonl.manifest.json").read_text())
    assert man["seed"] == 4 and man["command"] == "sample"
    assert man["schedule"]["p"] == 2 and man["schedule"]["gammas"] == pytest.approx([-0.175, -0.525])
    assert man["noise"] is None and man["kernel_backend"] in ("cython", "python")
    assert "git_describe" in man


def test_sample_formats(tmp_path):
    base = ["sample", "--size", 9, "--shots", 40, "--seed", 1]
    run(*base, "--format", "csv", "--out", tmp_path / "a.csv")
    run(*base, "--format", "bin", "--out", tmp_path / "a.bin")
    run(*base, "--out", tmp_path / "a.jsonl")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "bits,seed,oracle_calls,energy" and len(lines) == 41
    raw = np.frombuffer((tmp_path / "a.bin").read_bytes(), dtype=np.uint8).reshape(40, 2)
    bits = np.unpackbits(raw, axis=1)[:, :9]
    words = ["".join(map(str, r)) for r in bits]
    assert words == [r["bits"] for r in _jsonl(tmp_path / "a.jsonl")]
    assert [ln.split(",")[0] for ln in lines[1:]] == words


def test_explicit_angles_and_dump_plan(tmp_path):
    out = tmp_path / "x.jsonl"
    plan = tmp_path / "plan.txt"
    assert run("sample", "--size", 4, "--p", 2, "--gamma", 0.1, "--gamma", -0.3, "--beta", 0.2, "--beta", 0.4,
               "--shots", 5, "--out", out, "--dump-plan", plan) == 0
    man = json.loads((tmp_path / "x.jsonl.manifest.json").read_text())
    assert man["schedule"]["gammas"] == [0.1, -0.3]
    assert plan.read_text().startswith("# prefix")
    with pytest.raises(SystemExit):
        run("sample", "--size", 4, "--gamma", 0.1)


def test_workers_do_not_change_output(tmp_path):
    outs = []
    for w in (1, 3):
        path = tmp_path / f"w{w}.jsonl"
        assert run("sample", "--size", 9, "--shots", 140_000, "--seed", 8, "--workers", w, "--out", path) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_noisy_sample_with_config(tmp_path):
    cfg = tmp_path / "noise.cfg"
    cfg.write_text(dumps_noise_config(standard_model()))
    out = tmp_path / "n.jsonl"
    assert run("noisy-sample", "--size", 4, "--shots", 30, "--noise-config", cfg, "--out", out) == 0
    assert len(_jsonl(out)) == 30
    man = json.loads((tmp_path / "n.jsonl.manifest.json").read_text())
    assert man["noise"]["p2"] == 0.01
    cfg.write_text(dumps_noise_config(standard_model()).replace("p1 = 0.005", "p1 = 2.0"))
    assert run("noisy-sample", "--size", 4, "--shots", 3, "--noise-config", cfg, "--out", out) == 2


def test_gs_prob(tmp_path):
    out = tmp_path / "gs.json"
    assert run("gs-prob", "--size", 9, "--seed", 2, "--chunk", 4096, "--out", out) == 0
    res = json.loads(out.read_text())
    assert res["hits"] == 10 and not res["truncated"]
    assert res["estimate"] > res["uniform_baseline"] == 2.0**-9


def test_boltzmann_fit(tmp_path, capsys):
    out = tmp_path / "hist.csv"
    assert run("boltzmann-fit", "--size", 9, "--shots", 20000, "--bins", 20, "--out", out) == 0
    res = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert res["levels_in_window"] >= 5 and res["shots"] == 20000
    assert len(out.read_text().splitlines()) == 21


def test_compare(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    assert run("compare", "--size", 9, "--repetitions", 20, "--batch", 10, "--algorithm", "uniform",
               "--algorithm", "hastings:steps=1", "--algorithm", "qaoa:p=1:noisy", "--out", out) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].startswith("algorithm,repetitions,mean") and len(table) == 4
    assert len(out.read_text().splitlines()) == 61
    man = json.loads((tmp_path / "cmp.csv.manifest.json").read_text())
    assert man["hastings_c"] == -0.3 and man["noise"]["p1"] == 0.005


def test_timing(tmp_path):
    out = tmp_path / "t.csv"
    assert run("timing", "--topology", "grid", "--topology", "king", "--size", 9, "--instances", 2,
               "--batch", 10, "--out", out) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 3 and rows[1].startswith("grid,9,9,12")


def test_gen_problem_round_trip(tmp_path):
    path = tmp_path / "m.txt"
    assert run("gen-problem", "--topology", "king", "--size", 9, "--problem-seed", 3, "--out", path) == 0
    model = load_model(path)
    assert model.n == 9 and len(model.graph.edges) == 20
    out = tmp_path / "s.jsonl"
    assert run("sample", "--problem", path, "--shots", 10, "--out", out) == 0
    for r in _jsonl(out):
        assert r["energy"] == pytest.approx(energy(model, r["bits"]))


def test_verify_command(capsys):
    assert run("verify", "--circuits", 2, "--shots", 20000) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(ln.startswith("PASS") for ln in lines if ln[:4] in ("PASS", "FAIL"))


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "pilotwave.cli", "sample", "--size", "4", "--shots", "3"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert len(r.stdout.splitlines()) == 3
