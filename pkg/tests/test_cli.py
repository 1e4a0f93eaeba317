import json

import numpy as np
import pytest

from fbvie.cli import main


def _config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


BASE = """
[problem]
type = lq-scalar

[grid]
horizon = 1.0
intervals = 32

[checker]
samples = 40
seed = 3
"""


def test_solve_writes_artifacts(tmp_path):
    cfg = _config(tmp_path, BASE)
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "solution.csv").read_text().splitlines()
    assert lines[0] == "t,X_1,Y_1,Z_1"
    assert len(lines) == 1 + 33
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok"
    assert report["version"]
    assert report["config"]["problem"]["type"] == "lq-scalar"
    assert report["solve"]["alphas"][-1] == 1.0
    assert "wall_time_seconds" not in report["solve"]
    # triangular dumps carry (N+1)(N+2)/2 rows each
    rows = (out / "fields_x.csv").read_text().splitlines()
    assert len(rows) == 1 + 33 * 34 // 2


def test_solution_csv_round_trips_floats(tmp_path):
    cfg = _config(tmp_path, BASE)
    out = tmp_path / "out"
    main(["solve", "--config", cfg, "--out", str(out)])
    data = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
    # 17 significant digits reproduce the binary values exactly
    assert data[5, 1] == float(f"{data[5, 1]:.17g}")


def test_determinism_byte_identical(tmp_path):
    cfg = _config(tmp_path, BASE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--out", str(a)]) == 0
    assert main(["solve", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "solution.csv").read_bytes() == (b / "solution.csv").read_bytes()
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_invalid_params_exit_one(tmp_path):
    cfg = _config(tmp_path, BASE + "\n[continuation]\ndelta_init = 0.25\ndelta_min = 0.5\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_unknown_key_rejected(tmp_path):
    cfg = _config(tmp_path, BASE + "\n[grid]\nnodes = 10\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 1
    cfg2 = _config(tmp_path, BASE + "\n[plotting]\nstyle = fancy\n", name="r2.ini")
    assert main(["solve", "--config", cfg2, "--out", str(tmp_path)]) == 1


def test_missing_config_exit_one(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.ini"),
                 "--out", str(tmp_path)]) == 1


def test_check_mono_clean_instance(tmp_path):
    cfg = _config(tmp_path, BASE)
    out = tmp_path / "mono"
    assert main(["check-mono", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads((out / "monotonicity.json").read_text())
    assert payload["mc1_full"]["violations"] == []
    assert payload["mc1_full"]["estimated_gamma"] == pytest.approx(2.0, abs=1e-6)
    assert payload["mc1_terminal_only"]["samples"] == 40
    assert payload["mc3"]["violations_alignment"] == []


def test_check_mono_broken_instance_exit_two(tmp_path):
    cfg = _config(tmp_path, """
[problem]
type = nonlinear-example
lambda = 0.1
l_psi = 1.0
psi_at_state_time = false

[grid]
horizon = 1.0
intervals = 32

[checker]
samples = 60
seed = 0
""")
    out = tmp_path / "mono"
    assert main(["check-mono", "--config", cfg, "--out", str(out)]) == 2
    payload = json.loads((out / "monotonicity.json").read_text())
    assert payload["mc1_full"]["violations"]
    assert payload["declared_gamma"] == pytest.approx(-0.9)
    assert "nonpositive-margin" in payload["problem_flags"]


def test_seed_override_changes_sampling(tmp_path):
    cfg = _config(tmp_path, """
[problem]
type = nonlinear-example

[grid]
horizon = 1.0
intervals = 32

[checker]
samples = 25
seed = 3
""")
    o1, o2 = tmp_path / "s1", tmp_path / "s2"
    main(["check-mono", "--config", cfg, "--out", str(o1)])
    main(["check-mono", "--config", cfg, "--out", str(o2), "--seed", "99"])
    p1 = json.loads((o1 / "monotonicity.json").read_text())
    p2 = json.loads((o2 / "monotonicity.json").read_text())
    assert p1["config"]["checker"]["seed"] == "3"
    assert p2["config"]["checker"]["seed"] == "99"
    assert p1["mc1_full"]["worst_margin"] != p2["mc1_full"]["worst_margin"]


def test_convergence_command(tmp_path):
    cfg = _config(tmp_path, BASE + "\n[convergence]\nintervals_list = 16,32,64\n")
    out = tmp_path / "conv"
    assert main(["convergence", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "convergence.csv").read_text().splitlines()
    assert rows[0] == "N,sup_error,observed_order"
    orders = [float(r.split(",")[2]) for r in rows[2:]]
    assert all(o >= 1.7 for o in orders)


def test_convergence_reference_mode_nonlinear(tmp_path):
    cfg = _config(tmp_path, """
[problem]
type = nonlinear-example

[grid]
horizon = 1.0
intervals = 16

[convergence]
intervals_list = 16,32,64
""")
    out = tmp_path / "conv"
    assert main(["convergence", "--config", cfg, "--out", str(out)]) == 0


def test_verify_command_small_grid(tmp_path):
    cfg = _config(tmp_path, BASE + "\n[verify]\nprobe_starts = 3\n")
    out = tmp_path / "verify"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads((out / "verify.json").read_text())
    assert payload["passed"] is True
    names = {c["name"] for c in payload["checks"]}
    assert {"discrete-residuals", "bridge-chain-rule-equality",
            "uniqueness-probe", "oracle-comparison",
            "value-identity"}.issubset(names)


def test_custom_tabular_problem(tmp_path):
    # tabulated constant coefficients reproducing the scalar instance
    for name, cols in (("a.csv", "0"), ("b.csv", "1")):
        rows = []
        for tv in (0.0, 0.5, 1.0):
            for sv in (0.0, 0.5, 1.0):
                rows.append(f"{tv},{sv},{cols}")
        (tmp_path / name).write_text("\n".join(rows) + "\n")
    (tmp_path / "q.csv").write_text("0.0,1\n1.0,1\n")
    (tmp_path / "r.csv").write_text("0.0,1\n1.0,1\n")
    (tmp_path / "x0.csv").write_text("0.0,1\n1.0,1\n")
    cfg = _config(tmp_path, """
[problem]
type = custom-tabular
n = 1
m = 1
gamma = 2.0
g0 = 0.0
a_csv = a.csv
b_csv = b.csv
q_csv = q.csv
r_csv = r.csv
x0_csv = x0.csv

[grid]
horizon = 1.0
intervals = 32
""")
    out = tmp_path / "custom"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    data = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
    exact = np.cosh(1.0 - data[:, 0]) / np.cosh(1.0)
    assert np.max(np.abs(data[:, 1] - exact)) <= 1e-3
