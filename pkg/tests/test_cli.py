import csv
import io
import json

import numpy as np
import pytest

from metroq.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_qfi_seq(capsys):
    code, out, _ = run(capsys, "qfi", "--family", "ad", "--p", "0.5", "--t", "1.0", "--phi", "1.0", "--n", "2",
                       "--kind", "seq")
    rec = json.loads(out)
    assert code == 0
    assert rec["J"] == pytest.approx(2.179, abs=2e-3)
    assert set(rec) >= {"kind", "N", "params", "J", "gap", "wall_ms"}


def test_qfi_fully_damped(capsys):
    code, out, _ = run(capsys, "qfi", "--kind", "par", "--p", "1.0")
    assert code == 0 and abs(json.loads(out)["J"]) < 1e-7


def test_malformed_config_names_field(capsys):
    code, _, err = run(capsys, "qfi", "--config", '{"family": "ad"}')
    assert code == 1 and "'p'" in err
    code, _, err = run(capsys, "qfi", "--kind", "bogus")
    assert code == 1 and "bogus" in err
    code, _, err = run(capsys, "sweep", "--grid", "p:0:1")
    assert code == 1 and "--grid" in err


def test_numerical_limit_exit_code(capsys, monkeypatch):
    import metroq.cli as cli

    monkeypatch.setattr(cli, "_one", lambda job: {"J": 0.0, "gap": 1.0, "status": "NumericalLimit",
                                                   "flagged": False, "wall": 0.0})
    code, _, _ = run(capsys, "qfi", "--kind", "par")
    assert code == 2


def test_sweep_csv_is_deterministic_and_ordered(capsys):
    args = ("sweep", "--grid", "p:0.2:0.6:3", "--kind", "par,seq,ico")
    code, out1, _ = run(capsys, *args)
    _, out2, _ = run(capsys, *args, "--jobs", "2")
    assert code == 0 and out1 == out2
    rows = list(csv.reader(io.StringIO(out1)))
    assert rows[0] == ["p", "J_par", "J_seq", "J_ico", "gap_seq_par", "gap_ico_seq"]
    assert [float(r[0]) for r in rows[1:]] == [0.2, 0.4, 0.6]
    for r in rows[1:]:
        par, seq, ico = map(float, r[1:4])
        assert par <= seq + 1e-7 <= ico + 2e-7


def test_single_point_sweep_matches_qfi(capsys):
    _, out, _ = run(capsys, "sweep", "--grid", "p:0.5:0.5:1", "--kind", "seq")
    _, rec, _ = run(capsys, "qfi", "--kind", "seq", "--p", "0.5")
    assert float(out.splitlines()[1].split(",")[1]) == pytest.approx(json.loads(rec)["J"], rel=1e-11)


def test_bounds(capsys):
    code, out, err = run(capsys, "bounds", "--p", "0.5")
    row = dict(zip(*[r for r in csv.reader(io.StringIO(out))]))
    assert code == 0
    assert float(row["parallel_bound"]) == pytest.approx(2.667, abs=2e-3)
    assert "shortfall_par=0.327" in err


def test_census_empty_and_reproducible(capsys, tmp_path):
    code, out, _ = run(capsys, "census", "--samples", "0")
    assert code == 0 and json.loads(out)["samples"] == 0
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    run(capsys, "census", "--samples", "2", "--seed", "3", "--out", str(a))
    run(capsys, "census", "--samples", "2", "--seed", "3", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_strategy_export_and_verify(capsys, tmp_path):
    path = tmp_path / "seq.json"
    code, out, _ = run(capsys, "strategy", "--kind", "seq", "--p", "0.5", "--out", str(path))
    rep = json.loads(out)
    assert code == 0
    assert rep["ancilla_dims"][0] <= 2 and rep["ancilla_dims"][1] <= 8
    code, out, _ = run(capsys, "strategy", "--verify", str(path))
    assert code == 0
    # corrupt the exported operator: verification must fail with a residual report
    data = json.loads(path.read_text())
    pt = np.array(data["ptilde"])
    pt[0, 0, 0] += 0.3
    data["ptilde"] = pt.tolist()
    path.write_text(json.dumps(data))
    code, out, _ = run(capsys, "strategy", "--verify", str(path))
    assert code == 3 and "rel_err" in json.loads(out)


def test_switch_strategy_beats_sequential(capsys):
    code, out, _ = run(capsys, "strategy", "--kind", "swi", "--p", "0.2")
    rep = json.loads(out)
    _, seq, _ = run(capsys, "qfi", "--kind", "seq", "--p", "0.2")
    assert code == 0 and rep["J_state"] > json.loads(seq)["J"] + 1e-4
