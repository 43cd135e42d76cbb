import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cczsim.cli import fmt, main
from cczsim.couplings import zeta_exact
from cczsim.device import default_device
from cczsim.dynamics import FlatTopPulse, PulseSchedule


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_help_exits_zero():
    res = subprocess.run([sys.executable, "-m", "cczsim.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "sweep-couplings" in res.stdout


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_bad_axis_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["sweep-couplings", "--c1", "6:7", "--c2", "6:7:2", "--out", str(tmp_path / "x.csv")])
    assert info.value.code == 2


def test_domain_error_exits_one_with_json(tmp_path, capsys):
    data = tmp_path / "rb.csv"
    data.write_text("depth,reference,interleaved\n1,0.9,0.9\n2,0.9,0.9\n")
    assert main(["rb-analyze", "--data", str(data)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FitDegenerateError"
    assert err["command"] == "rb-analyze"


def test_missing_gate_file_exits_one(tmp_path, capsys):
    assert main(["qpt", "--gate", str(tmp_path / "nope.json"), "--out", str(tmp_path / "chi.csv")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "CalibrationError"


def test_bad_config_exits_one(tmp_path, capsys):
    bad = tmp_path / "dev.json"
    bad.write_text("{}")
    code = main(["sweep-couplings", "--config", str(bad), "--c1", "7:7:1", "--c2", "7:7:1",
                 "--out", str(tmp_path / "g.csv")])
    assert code == 1


def test_rb_analyze_recovers_fidelity(tmp_path, capsys):
    m = np.arange(1, 300, 10)
    data = tmp_path / "rb.csv"
    with open(data, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["depth", "reference", "interleaved"])
        for d in m:
            w.writerow([d, 0.47 * 0.9947 ** d + 0.5, 0.47 * 0.9876 ** d + 0.5])
    out = tmp_path / "rb.json"
    assert main(["rb-analyze", "--data", str(data), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["p_ref"] == pytest.approx(0.9947, abs=1e-6)
    assert res["fidelity"] == pytest.approx(0.9946, abs=5e-5)
    manifest = json.loads((tmp_path / "rb.json.manifest.json").read_text())
    assert manifest["command"] == "rb-analyze" and manifest["seed"] == 0
    assert len(manifest["config_sha256"]) == 64


def test_sweep_couplings_csv(tmp_path):
    out = tmp_path / "grid.csv"
    args = ["sweep-couplings", "--c1", "6.8:7.0:2", "--c2", "7.1:7.1:1", "--frame", "rwa", "--out", str(out)]
    assert main(args) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["omega_c1_ghz", "omega_c2_ghz", "zeta12_mhz", "zeta23_mhz", "zeta13_mhz",
                             "zeta123_total_mhz", "zeta_zzz_mhz", "flag"]
    assert len(rows) == 2
    ref = zeta_exact(default_device(), 7.0, 7.1, frame="rwa")
    assert float(rows[1]["zeta12_mhz"]) == pytest.approx(ref.zeta12, rel=1e-14)
    assert rows[1]["zeta23_mhz"] == fmt(ref.zeta23)
    assert (tmp_path / "grid.csv.manifest.json").exists()


def test_outputs_are_deterministic(tmp_path):
    paths = []
    for k in range(2):
        out = tmp_path / f"g{k}.csv"
        assert main(["sweep-couplings", "--c1", "7:7.5:2", "--c2", "7:7.5:2", "--method", "pert",
                     "--out", str(out)]) == 0
        paths.append(out.read_text())
    assert paths[0] == paths[1]


def test_evolve_trace(tmp_path):
    sch = PulseSchedule({"C1": (FlatTopPulse(-1.0, 10.0, 20.0, 5.0),)}, total_time=50.0)
    sch_path = tmp_path / "s.json"
    sch_path.write_text(json.dumps(sch.to_dict()))
    trace = tmp_path / "trace.csv"
    assert main(["evolve", "--schedule", str(sch_path), "--trace", str(trace), "--frame", "rwa",
                 "--every", "5", "--dt", "0.25"]) == 0
    rows = read_csv(trace)
    assert list(rows[0])[0] == "t_ns"
    assert float(rows[0]["t_ns"]) == 0.0 and float(rows[-1]["t_ns"]) == pytest.approx(50.0)
    assert float(rows[0][list(rows[0])[1]]) == pytest.approx(1.0)
    for r in rows:
        assert sum(float(v) for k, v in r.items() if k != "t_ns") <= 1.0 + 1e-9


def test_grover_ideal(tmp_path, capsys):
    out = tmp_path / "probs.json"
    assert main(["grover", "--target", "101", "--out", str(out)]) == 0
    probs = json.loads(out.read_text())["probabilities"]
    assert probs["101"] == pytest.approx(0.9453125, abs=1e-12)
    assert sum(probs.values()) == pytest.approx(1.0)


def test_pulse_grover_without_gate_is_domain_error(tmp_path):
    assert main(["grover", "--mode", "pulse", "--out", str(tmp_path / "p.json")]) == 1


def test_fmt_round_trips_at_fifteen_digits():
    rng = np.random.default_rng(3)
    for x in rng.normal(0, 1e3, 200):
        assert float(fmt(x)) == pytest.approx(x, rel=1e-14)
    assert fmt(1 / 3) == "0.333333333333333"
