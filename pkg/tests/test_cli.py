import json

import numpy as np
import pytest

from combopt import cli
from combopt import superchannels as SC
from combopt import tensor as T


def run(argv):
    return cli.main(argv)


def test_help_lists_every_flag(capsys):
    with pytest.raises(SystemExit):
        run(["solve", "--help"])
    out = capsys.readouterr().out
    for flag in ("--task", "--d", "--k", "--cone", "--tol", "--seed", "--out", "--no-timestamp"):
        assert flag in out


def test_omega_roundtrip(tmp_path, capsys):
    out = tmp_path / "omega.json"
    code = run(["omega", "--task", "transpose", "--d", "2", "--k", "2",
                "--out", str(out), "--no-timestamp"])
    assert code == 0
    meta = json.loads(capsys.readouterr().out)
    assert meta["result"]["trace"] == pytest.approx(2.0, abs=1e-9)
    assert meta["result"]["min_eigenvalue"] > -1e-10
    om = T.load_operator(str(out))
    assert om.names == ("P", "I1", "I2", "O1", "O2", "F")


def test_solve_then_certify(tmp_path, capsys):
    sol_path = tmp_path / "sol.json"
    code = run(["solve", "--task", "invert", "--d", "2", "--k", "2", "--cone", "general",
                "--tol", "1e-9", "--out", str(sol_path), "--no-timestamp"])
    assert code == 0
    data = json.loads(sol_path.read_text())
    assert data["result"]["status"] == "optimal"
    assert data["result"]["fidelity"] == pytest.approx(0.8249, abs=1e-3)

    code = run(["certify", "--in", str(sol_path), "--precision", "1e-4", "--no-timestamp"])
    assert code == 0
    cert = json.loads(capsys.readouterr().out)
    assert cert["result"]["precision_met"]
    lo = int(cert["result"]["lower"]["num"]) / int(cert["result"]["lower"]["den"])
    assert lo == pytest.approx(0.8249, abs=1e-3)


def test_solve_emits_valid_superchannel(tmp_path):
    sol_path = tmp_path / "sol.json"
    run(["solve", "--task", "transpose", "--d", "2", "--k", "1",
         "--out", str(sol_path), "--no-timestamp"])
    data = json.loads(sol_path.read_text())
    S = T.operator_from_dict(data["S"])
    rep = SC.validate(S, SC.cone_parallel(2, 1), tol=1e-7)
    assert rep.ok


def test_deterministic_output(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["solve", "--task", "transpose", "--d", "2", "--k", "1", "--seed", "7",
            "--no-timestamp"]
    run(args + ["--out", str(a)])
    run(args + ["--out", str(b)])
    assert a.read_text() == b.read_text()


def test_table_small(tmp_path):
    out = tmp_path / "table.json"
    code = run(["table", "--task", "transpose", "--d", "2", "--k", "1",
                "--cone", "parallel,sequential", "--jobs", "2",
                "--out", str(out), "--no-timestamp"])
    assert code == 0
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 2
    for row in rows:
        assert row["fidelity"] == pytest.approx(0.5, abs=1e-6)
        assert row["certified_width"] < 1e-4


def test_table_csv(tmp_path):
    out = tmp_path / "table.csv"
    code = run(["bounds", "--task", "transpose", "--d", "2", "--k", "1..3",
                "--format", "csv", "--out", str(out), "--no-timestamp"])
    assert code == 0
    text = out.read_text()
    assert text.splitlines()[0].startswith("cone,")


def test_validate_pass_and_fail(tmp_path, capsys):
    cone = SC.cone_parallel(2, 1)
    good = tmp_path / "good.json"
    T.save_operator(cone.noise_superchannel(), str(good))
    assert run(["validate", "--in", str(good), "--cone", "parallel", "--no-timestamp"]) == 0
    capsys.readouterr()
    bad = tmp_path / "bad.json"
    T.save_operator(cone.noise_superchannel() * 2.0, str(bad))
    assert run(["validate", "--in", str(bad), "--cone", "parallel", "--no-timestamp"]) == cli.EXIT_VALIDATION


def test_malformed_file_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["validate", "--in", str(bad), "--cone", "parallel", "--no-timestamp"]) == cli.EXIT_MALFORMED
    missing = tmp_path / "missing.json"
    assert run(["certify", "--in", str(missing), "--no-timestamp"]) == cli.EXIT_MALFORMED


def test_verify_noise_superchannel(tmp_path, capsys):
    cone = SC.cone_parallel(2, 1)
    path = tmp_path / "noise.json"
    T.save_operator(cone.noise_superchannel(), str(path))
    code = run(["verify", "--in", str(path), "--task", "transpose", "--d", "2", "--k", "1",
                "--cone", "parallel", "--samples", "100", "--seed", "3", "--no-timestamp"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    res = payload["result"]
    assert res["average_fidelity"] == pytest.approx(0.25, abs=1e-12)
    assert res["mc_mean"] == pytest.approx(0.25, abs=1e-9)
    assert res["mc_variance"] < 1e-9  # noise member is twirl-invariant
    assert res["twirl_fidelity_shift"] < 1e-12


def test_verify_rejects_invalid(tmp_path):
    cone = SC.cone_parallel(2, 1)
    path = tmp_path / "bad.json"
    T.save_operator(cone.noise_superchannel() * 1.5, str(path))
    code = run(["verify", "--in", str(path), "--task", "transpose", "--d", "2", "--k", "1",
                "--cone", "parallel", "--samples", "10", "--no-timestamp"])
    assert code == cli.EXIT_VALIDATION


def test_omega_writes_sidecar(tmp_path):
    out = tmp_path / "om.json"
    run(["omega", "--task", "invert", "--d", "2", "--k", "1",
         "--out", str(out), "--no-timestamp"])
    sidecar = json.loads((tmp_path / "om.json.meta.json").read_text())
    assert sidecar["task"] == "invert"
    assert sidecar["trace"] == pytest.approx(1.0, abs=1e-9)


def test_verify_sdp_optimizer_matches_known_value(tmp_path, capsys):
    sol_path = tmp_path / "sol.json"
    run(["solve", "--task", "transpose", "--d", "2", "--k", "1",
         "--out", str(sol_path), "--no-timestamp"])
    data = json.loads(sol_path.read_text())
    s_path = tmp_path / "S.json"
    s_path.write_text(json.dumps(data["S"]))
    code = run(["verify", "--in", str(s_path), "--task", "transpose", "--d", "2",
                "--k", "1", "--cone", "parallel", "--samples", "400", "--seed", "5",
                "--no-timestamp"])
    assert code == 0
    res = json.loads(capsys.readouterr().out)["result"]
    # the reduced-space optimizer is twirl invariant, so the pointwise
    # fidelity is flat at the optimum
    assert res["mc_mean"] == pytest.approx(0.5, abs=3 * max(res["mc_stderr"], 1e-9) + 1e-7)
    assert res["mc_variance"] < 1e-9


def test_solve_full_space_flag(tmp_path):
    sol_path = tmp_path / "sol.json"
    code = run(["solve", "--task", "transpose", "--d", "2", "--k", "1",
                "--full-space", "--out", str(sol_path), "--no-timestamp"])
    assert code == 0
    data = json.loads(sol_path.read_text())
    assert data["config"]["reduced"] is False
    assert data["result"]["fidelity"] == pytest.approx(0.5, abs=1e-6)


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "combopt", "bounds", "--task", "invert", "--d", "2",
         "--k", "1", "--no-timestamp"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert '"command": "bounds"' in proc.stdout
