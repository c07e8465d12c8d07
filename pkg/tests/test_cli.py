import json

import pytest

from peaked.cli import main
from peaked.serialize import from_json


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def circuit(tmp_path, capsys):
    path = tmp_path / "c.json"
    code, out = run_cli(capsys, "generate", "--nq", 6, "--nl", 2, "--hidden", "101100",
                        "--seed", 1, "--out", path)
    assert code == 0 and out["n_q"] == 6
    return path


def test_generate_and_verify(circuit, capsys):
    assert from_json(circuit.read_bytes()).metadata.hidden_string == "101100"
    code, out = run_cli(capsys, "verify", circuit, "101100")
    assert code == 0 and out["match"] and out["is_peaked"]
    code, out = run_cli(capsys, "verify", circuit, "000000")
    assert code == 1 and not out["match"]


def test_challenge_hides_answer(tmp_path, capsys):
    ch, ans = tmp_path / "ch", tmp_path / "answer.txt"
    code, _ = run_cli(capsys, "generate", "--nq", 6, "--nl", 2, "--hidden", "111000",
                      "--challenge", ch, "--answer", ans)
    assert code == 0
    assert ans.read_text().strip() == "111000"
    assert "111000" not in (ch / "circuit.json").read_text()
    code, out = run_cli(capsys, "verify", ch / "circuit.qasm", "111000")
    assert code == 0


def test_inspect(circuit, capsys):
    code, out = run_cli(capsys, "inspect", circuit)
    assert code == 0
    assert out["brickwall"] and out["blocks"] == 12 and out["half_depth"] == 2
    assert out["symmetry"]["exact_pairs"] == 0


def test_simulate_backends(circuit, capsys):
    code, out = run_cli(capsys, "simulate", circuit)
    assert code == 0 and out["peak_string"] == "101100" and out["shots"] == "exact"
    code, out = run_cli(capsys, "simulate", circuit, "--backend", "mps", "--shots", 2000)
    assert code == 0 and out["peak_string"] == "101100" and out["chi"] == 8
    code, out = run_cli(capsys, "simulate", circuit, "--backend", "mps", "--chi", 1, "--shots", 100)
    assert code == 0 and "high_truncation" in out


def test_attack(circuit, capsys):
    code, out = run_cli(capsys, "attack", circuit, "--shots", 5000)
    assert code == 0 and out["found_string"] == "101100"


def test_shrink(tmp_path, capsys):
    path = tmp_path / "c.json"
    run_cli(capsys, "generate", "--nq", 6, "--nl", 4, "--delta", 0.001, "--seed", 0, "--out", path)
    code, out = run_cli(capsys, "shrink", path, "--out", tmp_path / "s.json")
    assert code == 0 and out["depth"] == 7
    assert out["passes"][0]["removed_layers"] == 1


def test_double_peak(circuit, capsys):
    code, out = run_cli(capsys, "double-peak", circuit, "--pair", "0,1")
    assert code == 0 and out["first_layout"] == "cz3"
    assert {out["top"][0][0], out["top"][1][0]} == {"101100", "011100"}


def test_sweep(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_q": [4], "n_l": [1, 2], "seeds": 1}))
    code, out = run_cli(capsys, "sweep", "peakedness", "--config", cfg, "--out", tmp_path / "res",
                        "--no-wall-time")
    assert code == 0 and out["rows"] == 2
    assert (tmp_path / "res.csv").exists()
    code, _ = run_cli(capsys, "sweep", "peakedness", "--config", cfg, "--out", tmp_path / "new" / "res")
    assert code == 0 and (tmp_path / "new" / "res.cells.csv").exists()


def test_invalid_inputs(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["generate", "--nq", "5", "--nl", "2"]) == 2
    assert main(["generate", "--nq", "4", "--nl", "2", "--hidden", "01"]) == 2
    assert main(["inspect", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.qasm"
    bad.write_text("OPENQASM 2.0;\nqreg q[2];\nfoo q[0];\n")
    assert main(["inspect", str(bad)]) == 2


def test_resource_limit(circuit):
    assert main(["simulate", str(circuit), "--max-qubits", "4"]) == 3
