import json
import os
import subprocess
import sys

import pytest

import hessdisc
from hessdisc import acceptance, cli, study
from hessdisc.analysis import parse_csv
from hessdisc.control import PdasNonConvergence


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("argv, msg", [
    (["--scheme", "adini", "--mesh", "fixtures"], "rectangles"),
    (["--scheme", "fvm", "--theta", "2"], "theta"),
    (["--scheme", "gr", "--theta", "-1"], "theta"),
    (["--scheme", "fvm", "--levels", "0"], "levels"),
    (["--scheme", "fvm", "--alpha", "0"], "alpha"),
    (["--scheme", "fvm", "--lo", "1", "--hi", "0"], "exceed"),
    (["--scheme", "fvm", "--mesh", "/nonexistent/*.msh"], "no mesh files"),
    (["--scheme", "gr", "--mesh", "fixtures", "--problem", "ex2"], "area"),
    (["--scheme", "fvm", "--mesh", "fixtures", "--levels", "9"], "levels"),
])
def test_configuration_errors(capsys, argv, msg):
    code, out, err = run(capsys, *argv)
    assert code == cli.EXIT_CONFIG
    assert msg in err and out == ""


def test_argparse_rejects_unknown_scheme(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--scheme", "dg"])
    assert exc.value.code == 2


def test_single_level_has_no_orders(capsys):
    code, out, _ = run(capsys, "--scheme", "fvm", "--levels", "1")
    assert code == 0
    blocks = parse_csv(out)
    assert len(blocks) == 8
    assert all(len(rows) == 1 and rows[0][2] is None for rows in blocks.values())
    assert "err(Lap y)" in blocks


def test_markdown_output(capsys):
    code, out, _ = run(capsys, "--scheme", "adini", "--levels", "2", "--format", "markdown")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 4 and lines[0].startswith("| h | err(y) |")


def test_out_writes_table_and_metadata(tmp_path, capsys):
    target = tmp_path / "gr.csv"
    code, out, _ = run(capsys, "--scheme", "gr", "--levels", "2", "--theta", "2.5",
                       "--out", str(target))
    assert code == 0 and out == ""
    assert len(parse_csv(target.read_text())["err(y)"]) == 2
    meta = json.loads((tmp_path / "gr.csv.meta.json").read_text())
    assert meta["scheme"] == "gr" and meta["complete"] is True
    assert meta["scheme_options"]["theta"] == 2.5
    assert meta["ordering"] and meta["pdas_start"] == "p=0"
    assert [lv["mesh"] for lv in meta["levels"]] == ["n=4", "n=8"]
    assert all(lv["optimality_residual"] < 1e-10 for lv in meta["levels"])


def test_overrides_reach_the_problem(tmp_path, capsys):
    target = tmp_path / "t.csv"
    run(capsys, "--scheme", "fvm", "--levels", "1", "--alpha", "0.01", "--lo", "-100",
        "--hi", "-10", "--out", str(target))
    meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
    assert meta["alpha"] == 0.01 and meta["bounds"] == [-100, -10]


def test_nonconvergence_exit_code(monkeypatch, capsys):
    calls = []

    def failing(problem, hd, mesh, max_iter=100, system=None):
        calls.append(hd.n_dofs)
        if len(calls) == 2:
            raise PdasNonConvergence("active sets did not settle", [(0, 0)])
        from hessdisc.control import pdas_solve
        return pdas_solve(problem, hd, mesh)

    monkeypatch.setattr(study, "pdas_solve", failing)
    code, out, err = run(capsys, "--scheme", "fvm", "--levels", "3")
    assert code == cli.EXIT_SOLVER
    assert "table incomplete" in err
    assert all(len(rows) == 1 for rows in parse_csv(out).values())


def test_check_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(acceptance, "RESIDUAL_TOL", -1.0)
    code, _, err = run(capsys, "--scheme", "fvm", "--levels", "2", "--check")
    assert code == cli.EXIT_CHECK
    assert "[FAIL] 6d" in err


def test_check_pass_exit_code(capsys):
    code, _, err = run(capsys, "--scheme", "fvm", "--levels", "2", "--check")
    assert code == 0 and "[PASS] 6d" in err


def test_bit_identical_reruns(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert run(capsys, "--scheme", "gr", "--problem", "ex2", "--levels", "2", "--out", str(p))[0] == 0
    for suffix in ("", ".meta.json"):
        a, b = (open(str(p) + suffix, "rb").read() for p in paths)
        assert a == b


def test_thread_variable(monkeypatch):
    for var in hessdisc._THREAD_VARS:
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv("HESSDISC_THREADS", "3")
    hessdisc.configure_threads()
    assert all(os.environ[v] == "3" for v in hessdisc._THREAD_VARS)


def test_thread_variable_ignores_garbage(monkeypatch):
    monkeypatch.setenv("OMP_NUM_THREADS", "1")
    monkeypatch.setenv("HESSDISC_THREADS", "many")
    hessdisc.configure_threads()
    assert os.environ["OMP_NUM_THREADS"] == "1"


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "hessdisc.cli", "--scheme", "fvm", "--theta", "1"],
                       capture_output=True, text=True)
    assert r.returncode == cli.EXIT_CONFIG and "configuration error" in r.stderr
