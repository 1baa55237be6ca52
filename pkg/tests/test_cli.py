import subprocess
import sys

import pytest

from sparsecomm.bounds import m0
from sparsecomm.cli import main
from sparsecomm.harness import read_csv

SETTING1_SMALL = """\
# Setting 1 shape at a small dimension
algorithms = topk, topl, threshold-a, threshold-b
d = 2^9
M = 64
K = 1
L = 10
r_grid = 0.3, 0.6, 0.9
trials = 4
master_seed = 5
"""


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bounds_m0(capsys):
    code, out, _ = run_cli(capsys, "bounds", "m0", "--d", "4096", "--r", "0.6")
    assert code == 0
    assert out.strip() == f"m0={m0(4096, 0.6)}" == "m0=1389"


def test_bounds_params_and_single_machine(capsys):
    code, out, _ = run_cli(capsys, "bounds", "threshold_small", "--d", "1024", "--K", "2", "--r", "0.5")
    assert code == 0 and "m_eff=111" in out and "feasible=True" in out
    code, out, _ = run_cli(capsys, "bounds", "m0", "--d", "4096", "--r", "1.0")
    assert code == 0 and "single_machine_regime" in out


def test_bounds_missing_argument(capsys):
    code, _, err = run_cli(capsys, "bounds", "m0", "--d", "4096")
    assert code == 2
    assert len(err.strip().splitlines()) == 1 and "--r" in err


def test_tune(capsys):
    code, out, _ = run_cli(capsys, "tune", "--alg", "threshold-b", "--d", "2^12", "--K", "1",
                           "--r", "0.8", "--M", "64")
    assert code == 0
    fields = dict(line.split("=", 1) for line in out.strip().splitlines())
    assert fields["algorithm"] == "ThresholdB" and fields["m_eff"] == "21"


def test_run_prints_one_row(capsys):
    code, out, _ = run_cli(capsys, "run", "--alg", "threshold-a", "--d", "1024", "--K", "2",
                           "--r", "0.5", "--M", "128", "--trials", "20")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 2 and lines[0].startswith("algorithm,")
    (row,) = read_csv(out)
    assert row.algorithm == "threshold-a" and row.trials == 20


def test_sweep_rows_and_outputs(tmp_path, capsys):
    cfg = tmp_path / "setting1.cfg"
    cfg.write_text(SETTING1_SMALL)
    out_csv = tmp_path / "s1.csv"
    code, _, _ = run_cli(capsys, "sweep", "--config", str(cfg), "--out", str(out_csv),
                         "--plot", str(tmp_path / "s1_plot.py"), "--trace", str(tmp_path / "s1.trace"))
    assert code == 0
    rows = read_csv(out_csv)
    assert len(rows) == 4 * 3
    assert "s1.csv" in (tmp_path / "s1_plot.py").read_text()
    trace = (tmp_path / "s1.trace").read_text().splitlines()
    assert sum(int(line.split("\t")[4]) for line in trace if not line.startswith("#")) == \
        pytest.approx(sum(r.mean_total_bits * r.trials for r in rows))


def test_sweep_threads_identical(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(SETTING1_SMALL)
    _, one, _ = run_cli(capsys, "sweep", "--config", str(cfg), "--threads", "1")
    _, many, _ = run_cli(capsys, "sweep", "--config", str(cfg), "--threads", "3")
    assert one == many


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("algorithms = topk\nd = 100\n")
    code, _, err = run_cli(capsys, "sweep", "--config", str(cfg))
    assert code == 2 and "missing required keys" in err
    code, _, err = run_cli(capsys, "sweep", "--config", str(tmp_path / "nope.cfg"))
    assert code == 2 and len(err.strip().splitlines()) == 1
    code, _, _ = run_cli(capsys, "run", "--alg", "nonsense")
    assert code == 2


def test_infeasible_only_sweep_exit_code(tmp_path, capsys):
    cfg = tmp_path / "inf.cfg"
    cfg.write_text("algorithms = thm3b\nd = 2^10\nM = 16\nK = 1\nr_grid = 0.5\ntrials = 1\n")
    code, out, _ = run_cli(capsys, "sweep", "--config", str(cfg))
    assert code == 3
    assert len(read_csv(out)) == 1


def test_regimes(capsys):
    code, out, _ = run_cli(capsys, "regimes", "--d", "4096", "--points", "7")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "M,r_information,r_log_line,r_necessary,r_sublinear"
    for line in lines[1:]:
        M, info, log_line, nec, sub = line.split(",")
        assert float(nec) == max(float(info), float(log_line))
        if sub:
            assert m0(4096, float(sub)) <= int(M)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sparsecomm", "bounds", "index_bits", "--d", "1000"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "index_bits=10"
