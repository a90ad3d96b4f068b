import filecmp
import json
import os
from pathlib import Path

import numpy as np
import pytest

from isobench.cli import main
from isobench.fileio import save_operator, save_vector
from isobench.operators import Operator

GOLDEN = Path(__file__).parent / "golden"


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    payload = json.loads(out[-1]) if out else {}
    return code, payload


def strip_wall(text):
    return "\n".join(",".join(line.split(",")[:-1])
                     for line in text.splitlines())


@pytest.fixture()
def identity_fixture(tmp_path):
    op_path = tmp_path / "op.l1op"
    y_path = tmp_path / "y.l1ve"
    save_operator(Operator(np.eye(2)), op_path)
    save_vector(np.array([3.0, -1.0]), y_path)
    return str(op_path), str(y_path)


@pytest.fixture()
def small_fixture(tmp_path, capsys):
    """A frozen 20x60 instance generated through the CLI itself."""
    op_path = str(tmp_path / "small.l1op")
    y_path = str(tmp_path / "small.l1ve")
    code, _ = run_cli(capsys, "gen-operator", "--kind", "gaussian",
                      "--m", "20", "--p", "60", "--seed", "5",
                      "--out", op_path)
    assert code == 0
    code, _ = run_cli(capsys, "gen-data", "--op", op_path, "--seed", "6",
                      "--support", "4", "--noise", "0.01", "--out", y_path)
    assert code == 0
    return op_path, y_path


def test_lambda_max_identity(capsys, identity_fixture):
    op_path, y_path = identity_fixture
    code, payload = run_cli(capsys, "lambda-max", "--op", op_path,
                            "--data", y_path)
    assert code == 0
    assert payload["lambda_max"] == 3.0


def test_gen_operator_deterministic(tmp_path, capsys):
    a = str(tmp_path / "a.l1op")
    b = str(tmp_path / "b.l1op")
    args = ["gen-operator", "--kind", "gaussian", "--m", "30", "--p", "50",
            "--seed", "1", "--normalize", "0.999"]
    assert run_cli(capsys, *args, "--out", a)[0] == 0
    assert run_cli(capsys, *args, "--out", b)[0] == 0
    assert filecmp.cmp(a, b, shallow=False)


def test_gen_operator_kinds(tmp_path, capsys):
    for kind in ("gaussian", "repeated", "illcond"):
        out = str(tmp_path / f"{kind}.l1op")
        code, payload = run_cli(capsys, "gen-operator", "--kind", kind,
                                "--m", "15", "--p", "40", "--seed", "2",
                                "--out", out)
        assert code == 0
        assert payload["sigma1"] == pytest.approx(0.999, rel=1e-9)
        assert os.path.exists(out)


def test_unknown_flag_is_usage_error(capsys, identity_fixture):
    op_path, y_path = identity_fixture
    code, payload = run_cli(capsys, "lambda-max", "--op", op_path,
                            "--data", y_path, "--frobnicate")
    assert code == 1
    assert payload["status"] == "usage-error"


def test_missing_file_distinct_error(capsys, tmp_path):
    code, payload = run_cli(capsys, "lambda-max", "--op",
                            str(tmp_path / "nope.l1op"), "--data",
                            str(tmp_path / "nope.l1ve"))
    assert code == 1
    assert "file not found" in payload["message"]


def test_usage_error_leaves_no_artifacts(capsys, small_fixture, tmp_path):
    op_path, y_path = small_fixture
    out = tmp_path / "never.csv"
    code, _ = run_cli(capsys, "compare", "--algos", "ist,bogus",
                      "--op", op_path, "--data", y_path,
                      "--kmax", "4", "--out", str(out))
    assert code == 1
    assert not out.exists()


def test_solve_trace(capsys, small_fixture, tmp_path):
    op_path, y_path = small_fixture
    out = tmp_path / "trace.csv"
    code, payload = run_cli(capsys, "solve", "--algo", "fista",
                            "--op", op_path, "--data", y_path,
                            "--exp", "4", "--budgets", "10,100,1000",
                            "--out", str(out))
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4
    assert payload["final_e"] < 0.1


def test_path_command_with_iterate_dump(capsys, small_fixture, tmp_path):
    op_path, y_path = small_fixture
    out = tmp_path / "path.csv"
    dump = tmp_path / "iters"
    code, payload = run_cli(capsys, "path", "--op", op_path, "--data", y_path,
                            "--stop-exp", "5", "--out", str(out),
                            "--dump-iterates", str(dump))
    assert code == 0
    assert out.exists()
    dumped = sorted(dump.iterdir())
    assert len(dumped) == payload["breakpoints"]


def test_warmstart_command(capsys, small_fixture, tmp_path):
    op_path, y_path = small_fixture
    for method, extra in (("fpc", ["--stop-exp", "6"]),
                          ("apsd", ["--stop-exp", "6"]),
                          ("apsd", ["--rho-stop", "2.0"])):
        out = tmp_path / f"{method}{extra[0][2:4]}.csv"
        code, payload = run_cli(capsys, "warmstart", "--method", method,
                                "--op", op_path, "--data", y_path,
                                "--n-steps", "40", *extra, "--out", str(out))
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 42  # header + N + 1 records


def test_complexity_command(capsys, small_fixture, tmp_path):
    op_path, y_path = small_fixture
    out = tmp_path / "cx.csv"
    code, payload = run_cli(capsys, "complexity", "--op", op_path,
                            "--data", y_path, "--stop-exp", "8",
                            "--fit-min", "2", "--fit-max", "30",
                            "--out", str(out))
    assert code == 0
    assert payload["loglog_slope"] is not None
    header = out.read_text().splitlines()[0]
    assert header == "support_size,breakpoint_count,cost_units,wall_seconds"


def test_isochrone_worker_invariance(capsys, small_fixture, tmp_path):
    op_path, y_path = small_fixture
    texts = []
    for workers in ("1", "4"):
        out = tmp_path / f"iso{workers}.csv"
        code, _ = run_cli(capsys, "isochrone", "--algo", "ist",
                          "--op", op_path, "--data", y_path,
                          "--kmax", "6", "--kstep", "2",
                          "--budgets", "10,100", "--workers", workers,
                          "--out", str(out))
        assert code == 0
        texts.append(out.read_text())
    assert strip_wall(texts[0]) == strip_wall(texts[1])


def test_workers_env_variable(capsys, small_fixture, tmp_path, monkeypatch):
    op_path, y_path = small_fixture
    monkeypatch.setenv("ISOBENCH_WORKERS", "3")
    out = tmp_path / "env.csv"
    code, _ = run_cli(capsys, "isochrone", "--algo", "ist",
                      "--op", op_path, "--data", y_path,
                      "--kmax", "4", "--kstep", "2", "--budgets", "10,100",
                      "--out", str(out))
    assert code == 0


def test_compare_matches_golden_file(capsys, tmp_path):
    """Frozen fixture, frozen flags; byte comparison minus wall clock."""
    op_path = str(tmp_path / "g.l1op")
    y_path = str(tmp_path / "g.l1ve")
    assert run_cli(capsys, "gen-operator", "--kind", "gaussian", "--m", "20",
                   "--p", "60", "--seed", "5", "--out", op_path)[0] == 0
    assert run_cli(capsys, "gen-data", "--op", op_path, "--seed", "6",
                   "--support", "4", "--noise", "0.01", "--out", y_path)[0] == 0
    out = tmp_path / "compare.csv"
    code, _ = run_cli(capsys, "compare", "--algos", "ist,fista",
                      "--op", op_path, "--data", y_path,
                      "--kmax", "10", "--kstep", "2",
                      "--budgets", "log10", "--budget-max", "10000",
                      "--out", str(out))
    assert code == 0
    golden = (GOLDEN / "compare_small.csv").read_text()
    assert strip_wall(out.read_text()) == strip_wall(golden)
