import csv
import json
import subprocess
import sys

import pytest

from posetrate.cli import CSV_COLUMNS, OUT_ENV, main
from posetrate.instances import chain_poset
from posetrate.poset import poset_to_dict


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_thin_reports_one_third(capsys):
    code, out, _ = _run(capsys, "thin", "--alpha", "0.5", "--p", "0.5", "--tree", "kary:2", "--exact")
    assert code == 0
    assert json.loads(out)["report"]["rate"] == "1/3"


def test_malformed_poset_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = _run(capsys, "mobius", "--poset", str(bad))
    assert code == 2
    assert json.loads(err)["error"] == "InputError"


def test_cyclic_poset_exits_2(tmp_path, capsys):
    bad = tmp_path / "cyc.json"
    bad.write_text(json.dumps({"n": 2, "covers": [[0, 1], [1, 0]]}))
    code, _, err = _run(capsys, "mobius", "--poset", str(bad))
    assert code == 2
    assert json.loads(err)["error"] == "CycleDetected"


def test_missing_file_exits_2(capsys):
    code, _, err = _run(capsys, "upf", "--dist", "/nonexistent/law.json")
    assert code == 2 and "error" in json.loads(err)


def test_mobius_from_file(tmp_path, capsys):
    p = tmp_path / "chain.json"
    p.write_text(json.dumps(poset_to_dict(chain_poset(3))))
    code, out, _ = _run(capsys, "mobius", "--poset", str(p))
    assert code == 0
    assert json.loads(out)["ok"]


def test_verify_core_suite(capsys):
    code, out, _ = _run(capsys, "verify", "--suite", "core")
    assert code == 0
    assert json.loads(out)["ok"]


@pytest.mark.parametrize("argv", [
    ("find", "--poset", "chain:n=5", "--alpha-grid", "0.1:0.9:0.1", "--float"),
    ("poisson-check", "--alpha", "0.5", "--marginal", "poisson"),
    ("ladder", "--tree", "kary:2", "--alpha", "1/2", "--n", "3", "--replicates", "2000", "--float"),
    ("cumulative", "--poset", "subsets:M=4,m_cap=3", "--n", "2"),
])
def test_outputs_byte_identical(argv, capsys):
    a = _run(capsys, *argv)
    b = _run(capsys, *argv)
    assert a[1] == b[1]


def test_threads_do_not_change_output(capsys):
    base = ("ladder", "--tree", "kary:2", "--alpha", "1/2", "--n", "2", "--replicates", "3000", "--float")
    one = json.loads(_run(capsys, *base, "--threads", "1")[1])
    four = json.loads(_run(capsys, *base, "--threads", "4")[1])
    assert one["report"] == four["report"]


def test_out_dir_writes_json_and_csv(tmp_path, capsys):
    code, out, _ = _run(capsys, "find", "--poset", "chain:n=4", "--float", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "find.json").read_text().strip() == out.strip()
    with open(tmp_path / "find.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == CSV_COLUMNS["find"]


def test_out_dir_from_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUT_ENV, str(tmp_path))
    code, _, _ = _run(capsys, "catalog", "list")
    assert code == 0
    assert (tmp_path / "catalog.json").exists()


def test_poisson_expect_pass_on_geometric_fails(capsys):
    code, _, _ = _run(capsys, "poisson-check", "--alpha", "0.5", "--marginal", "geometric", "--expect-pass")
    assert code == 1


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "posetrate.cli", "catalog", "list"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "kary_tree" in res.stdout


def test_simulate_run_spec(tmp_path, capsys):
    spec = tmp_path / "run.json"
    spec.write_text(json.dumps({"op": "thin", "dist": {"tree": "kary:2", "alpha": "1/2"},
                                "p": 0.5, "replicates": 2000, "seed": 3}))
    code, out, _ = _run(capsys, "simulate", "--run", str(spec), "--float")
    assert code in (0, 1)
    assert json.loads(out)["report"]["op"] == "thin"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"op": "teleport", "dist": {"tree": "kary:2", "alpha": "1/2"}}))
    assert _run(capsys, "simulate", "--run", str(bad))[0] == 2
