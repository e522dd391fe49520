import csv
import io
import json
import subprocess
import sys

import pytest

from irflab import cli
from irflab import runner as Rn

AFFINE = """\
experiment: {name}
seed: 5
model: {{family: affine}}
noise:
  kind: matrixPair
  law:
    type: affine
    dim: 1
    A: {A}
    B: {{kind: iid, entry: {{law: normal}}}}
checks:
{checks}
"""


def _write(tmp_path, checks, A="{kind: constant, matrix: [[0.5]]}", name="t"):
    path = tmp_path / f"{name}.yaml"
    path.write_text(AFFINE.format(name=name, A=A, checks=checks))
    return str(path)


def _run(*argv):
    return cli.main(list(argv))


def test_list_names_every_preset(capsys):
    assert _run("list") == 0
    out = capsys.readouterr().out
    for name in ("honig", "affine-var", "lindley-mm1", "gwi-drift", "langevin-quadratic", "sg-bias",
                 "forward-backward"):
        assert name in out


def test_exit_0_and_report_shape(tmp_path, capsys):
    cfg = _write(tmp_path, "  - check: lyapunov\n    horizons: [100, 1000]\n    replicas: 4")
    out = tmp_path / "r.json"
    assert _run("run", cfg, "--out", str(out)) == Rn.EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["format"] == "irflab-report" and rep["version"] == 1
    assert rep["summary"]["exit_code"] == 0 and rep["summary"]["overall"] == "satisfied"
    assert rep["checks"][0]["result"]["provenance"]["streams"] == [0, 3]
    timings = json.loads((tmp_path / "r.json.timings.json").read_text())
    assert set(timings["checks"]) == {"lyapunov"}
    assert "1 satisfied" in capsys.readouterr().err


def test_exit_1_violated(tmp_path):
    cfg = _write(tmp_path, "  - check: one_step\n    samples: 1000", A="{kind: constant, matrix: [[1.5]]}")
    assert _run("run", cfg, "--out", str(tmp_path / "r.json")) == Rn.EXIT_FAIL


def test_exit_2_inconclusive(tmp_path):
    # |A| = e |U| with U uniform on (-1, 1): E log|A| = 0, so the sign cannot be resolved
    A = "{kind: scaled, matrix: [[2.718281828459045]], scale: {law: uniform, low: -1, high: 1}}"
    cfg = _write(tmp_path, "  - check: one_step\n    samples: 20000", A=A)
    assert _run("run", cfg, "--out", str(tmp_path / "r.json")) == Rn.EXIT_INCONCLUSIVE


@pytest.mark.parametrize("argv", [
    ["run", "no-such-preset"],
    ["run", "honig", "--parallel", "0"],
    ["run", "honig", "--seed", "-3"],
    ["run", "honig", "--format", "xml"],
    ["frobnicate"],
    [],
])
def test_exit_3_usage_and_config(argv):
    with pytest.raises(SystemExit) as e:
        sys.exit(_run(*argv))
    assert e.value.code == Rn.EXIT_CONFIG


def test_exit_3_reports_line(tmp_path, capsys):
    cfg = _write(tmp_path, "  - check: lyapunov\n    horizon: [10]")
    assert _run("run", cfg) == Rn.EXIT_CONFIG
    # the missing field is reported at the line of its check item
    assert "line 12: check lyapunov: missing required field 'horizons'" in capsys.readouterr().err


def test_exit_4_budget(tmp_path):
    cfg = _write(tmp_path, "  - check: time_average\n    horizon: 2000000000")
    assert _run("run", cfg, "--budget", "0.5") == Rn.EXIT_BUDGET


def test_exit_5_library_failure(tmp_path, capsys):
    # x -> x + B with A = 1 has no backward limit
    cfg = _write(tmp_path, "  - check: vstar\n    samples: 3\n    max_depth: 256", A="{kind: constant, matrix: [[1.0]]}")
    assert _run("run", cfg) == Rn.EXIT_RUNTIME
    assert "NotConverged" in capsys.readouterr().err


def test_csv_output(tmp_path):
    cfg = _write(tmp_path, "  - check: vstar\n    samples: 50\n    expect: {mean: {value: 0.0, tol: 1.0}}")
    out = tmp_path / "r.csv"
    assert _run("run", cfg, "--format", "csv", "--out", str(out)) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["check", "label", "field", "value"]
    fields = {r[2] for r in rows[1:]}
    assert "result.mean[0]" in fields and "verdicts[0].status" in fields


def test_seed_override_and_determinism(tmp_path):
    cfg = _write(tmp_path, "  - check: vstar\n    samples: 200\n  - check: lyapunov\n    horizons: [10, 100]\n"
                           "    replicas: 3")
    paths = [tmp_path / f"{k}.json" for k in range(4)]
    _run("run", cfg, "--out", str(paths[0]))
    _run("run", cfg, "--out", str(paths[1]), "--parallel", "2")
    _run("run", cfg, "--out", str(paths[2]), "--seed", "99")
    _run("run", cfg, "--out", str(paths[3]), "--seed", "99")
    text = [p.read_bytes() for p in paths]
    assert text[0] == text[1] and text[2] == text[3] and text[0] != text[2]
    assert json.loads(text[2])["seed"] == 99


def test_stdout_report_and_preset_by_name(capsys):
    assert _run("run", "forward-backward", "--timings") == 0
    cap = capsys.readouterr()
    assert json.loads(cap.out)["experiment"] == "forward-backward"
    assert "total_seconds" in cap.err


def test_console_script_and_parallel_budget(tmp_path):
    cfg = _write(tmp_path, "  - check: time_average\n    horizon: 2000000000\n  - check: vstar\n    samples: 10")
    r = subprocess.run([sys.executable, "-m", "irflab.cli", "run", cfg, "--parallel", "2", "--budget", "1"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == Rn.EXIT_BUDGET
    assert "budget" in r.stderr
