import json
import math
import os
import subprocess
import sys

import pytest

from nfc.backward import quantize
from nfc.cli import main
from nfc.verify import check_backward_equivalence, run_all


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_rate_sweep_endpoints(capsys):
    code, out, _ = run(capsys, "rate-sweep", "--points", "5")
    assert code == 0
    lines = out.split("\n")
    assert lines[0] == "sigma_v_bar,rho"
    assert lines[-1] == ""
    rows = [tuple(map(float, ln.split(","))) for ln in lines[1:-1]]
    assert len(rows) == 5
    assert abs(rows[0][1] - 0.5 * math.log2(5)) < 1e-9
    assert abs(rows[1][1] - math.log2(5 / 3)) < 1e-9
    assert rows[-1] == (1.0, 0.0)


def test_two_point_sweep(capsys):
    _, out, _ = run(capsys, "rate-sweep", "--points", "2")
    assert len(out.strip().split("\n")) == 3
    assert "\r" not in out
    assert not any(ln.endswith(",") for ln in out.split("\n"))


def test_twelve_significant_digits(capsys):
    _, out, _ = run(capsys, "rate-sweep", "--points", "2")
    assert out.split("\n")[1] == "0,1.16096404744"


def test_gamma_sweep(capsys):
    _, out, _ = run(capsys, "gamma-sweep", "--min", "0.1", "--max", "1.5", "--points", "2")
    lines = out.strip().split("\n")
    assert lines[0] == "sigma_s_bar,pq,rho_composed,valid"
    assert lines[1].startswith("0.1,1,")
    row = lines[2].split(",")
    assert row[:2] == ["0.1", "2"]
    assert abs(float(row[2]) - 0.883793471660) < 1e-11
    # P_Q = 1 cannot cover sigma_s = 1.5
    assert lines[5] == "1.5,1,0,0"


def test_bounds_table(capsys):
    _, out, _ = run(capsys, "bounds", "--n-min", "28", "--n-max", "32")
    lines = out.strip().split("\n")
    assert lines[0] == "n,markov_bound,gaussian_bound,power_bound_x_steady,power_bound_q_steady"
    row30 = dict(zip(lines[0].split(","), map(float, lines[3].split(","))))
    assert row30["n"] == 30
    assert row30["gaussian_bound"] == pytest.approx(1.1e-25, rel=0.02)
    m = [float(ln.split(",")[1]) for ln in lines[1:]]
    for a, b in zip(m, m[1:]):
        assert b / a == pytest.approx(2**-0.2, rel=1e-4)  # transient in E[X_n^2] decays like 2^(-0.6 n)


def test_simulate_rejects_rate_above_capacity(capsys):
    code, _, err = run(capsys, "simulate", "--rbar", "0.8", "--trials", "10")
    assert code == 2
    assert "r̄ ≥ ϱ" in err


def test_simulate_rejects_large_feedback_noise(capsys):
    code, _, err = run(capsys, "simulate", "--sigma-v", "1.5", "--trials", "10")
    assert code == 2
    assert "requires 4σ̄_V² < P_X²" in err


def test_unwritable_output(capsys, tmp_path):
    code, _, _ = run(capsys, "rate-sweep", "--points", "2", "--out", str(tmp_path / "missing" / "x.csv"))
    assert code == 3


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("bogus: 1\n")
    assert run(capsys, "rate-sweep", "--config", str(cfg))[0] == 2


def test_config_file_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("points: 3\npx2: 9\n")
    _, out, _ = run(capsys, "rate-sweep", "--config", str(cfg), "--px2", "4")
    lines = out.strip().split("\n")
    assert len(lines) == 4
    assert lines[1] == "0,1.16096404744"


def test_manifest_replay_is_byte_identical(capsys, tmp_path):
    first = tmp_path / "a.csv"
    assert run(capsys, "gamma-sweep", "--points", "7", "--pq-list", "2,4", "--out", str(first))[0] == 0
    sidecar = tmp_path / "a.csv.manifest.json"
    doc = json.loads(sidecar.read_text())
    assert doc["command"] == "gamma-sweep"
    second = tmp_path / "b.csv"
    assert run(capsys, "gamma-sweep", "--config", str(sidecar), "--out", str(second))[0] == 0
    assert first.read_bytes() == second.read_bytes()


def test_simulate_json(capsys, tmp_path):
    out = tmp_path / "s.json"
    assert run(capsys, "simulate", "--trials", "500", "--seed", "3", "--out", str(out))[0] == 0
    doc = json.loads(out.read_text())
    assert doc["manifest"]["master_seed"] == 3
    assert doc["report"]["trials"] == 500
    assert len(doc["report"]["empirical_power_x"]) == 31


def test_simulate_replay_from_manifest(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "simulate", "--scheme", "scaled-backward", "--trials", "300", "--out", str(a))
    assert run(capsys, "simulate", "--config", str(a), "--out", str(b))[0] == 0
    assert json.loads(a.read_text())["report"] == json.loads(b.read_text())["report"]


@pytest.mark.parametrize("scheme", ["side-info", "quantized", "scaled-backward"])
def test_simulate_independent_of_threads(capsys, monkeypatch, scheme):
    outs = []
    for threads in ("1", "4", "0"):
        monkeypatch.setenv("NFC_THREADS", threads)
        code, out, _ = run(capsys, "simulate", "--scheme", scheme, "--trials", "5000", "--seed", "9")
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1] == outs[2]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "nfc", "rate-sweep", "--points", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout.startswith("sigma_v_bar,rho\n")


def test_verify_gate_passes():
    results = run_all(1)
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]


def test_verify_detects_corrupted_quantizer():
    assert check_backward_equivalence(1).passed
    bad = check_backward_equivalence(1, rhs_quantizer=lambda y, b: quantize(y, b * 1.001))
    assert not bad.passed
