import csv
import json
import math
import shutil
import subprocess
import sys

import pytest

from vind import __version__
from vind.cli import main
from vind.config import parse_config
from vind.data import load_returns_csv
from vind.errors import DomainError

SMALL_MSE = '''
experiment = "gamma-normal-mse"
seed = 5
[sweep]
epsilons = [1.0, 10.0]
iterations = 3
n_reps = 100
'''

SMALL_LINREG = '''
experiment = "linreg-fit"
seed = 2
[data]
n = 80
d = 3
n_train = 60
[fit]
iterations = 25
n_elbo = 5
'''


def config_file(tmp_path, text, out="out", name="run.toml"):
    p = tmp_path / name
    # top-level keys must precede the first table
    p.write_text(f'output_dir = "{tmp_path / out}"\n' + text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def assert_rectangular(rows):
    assert len({len(r) for r in rows}) == 1
    assert all(not cell.replace("_", "").replace(".", "").isdigit() for cell in rows[0])


def test_version(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_entry_points():
    out = subprocess.run([sys.executable, "-m", "vind.cli", "version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == __version__
    exe = shutil.which("vind")
    if exe is None:
        pytest.skip("console script not on PATH")
    out = subprocess.run([exe, "version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == __version__


def test_validate_prints_filled_config(tmp_path, capsys):
    p = config_file(tmp_path, "seed = 9\n")
    assert main(["validate", str(p)]) == 0
    echoed = parse_config(capsys.readouterr().out)
    assert echoed.seed == 9 and echoed.sweep.n_reps == 1000


def test_config_errors_exit_1(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "missing.toml")]) == 1
    bad = config_file(tmp_path, '[epsilon]\n"tau.alpha" = -1\n')
    assert main(["run", str(bad)]) == 1
    assert "epsilon.tau.alpha" in capsys.readouterr().err
    broken = tmp_path / "broken.toml"
    broken.write_text("seed = \n")
    assert main(["validate", str(broken)]) == 1
    assert "line 1" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("date,x0,y\nt0,1.0,2.0\nt1,NA,1.0\n")
    p = config_file(tmp_path, f'experiment = "linreg-fit"\n[data]\nsource = "csv"\npath = "{data}"\n')
    assert main(["run", str(p)]) == 2
    assert "line 3, column 2" in capsys.readouterr().err
    data.write_text("date,x0,y\nt0,1.0,2.0\nt1,0.5,1.0\n")
    p = config_file(tmp_path, f'experiment = "linreg-fit"\n[data]\nsource = "csv"\npath = "{data}"\n'
                              f'target_column = "z"\n', name="run2.toml")
    assert main(["run", str(p)]) == 2


def test_runtime_errors_exit_3(tmp_path, monkeypatch, capsys):
    import vind.experiments

    def boom(cfg):
        raise DomainError("precision matrix must be positive definite")

    monkeypatch.setattr(vind.experiments, "run_experiment", boom)
    assert main(["run", str(config_file(tmp_path, "seed = 1\n"))]) == 3
    assert "positive definite" in capsys.readouterr().err


def test_gamma_normal_mse_outputs(tmp_path):
    p = config_file(tmp_path, SMALL_MSE)
    assert main(["run", str(p)]) == 0
    out = tmp_path / "out"
    stats = read_csv(out / "stats.csv")
    assert stats[0][:7] == ["iter", "estimator", "epsilon", "block", "bias", "variance", "mse"]
    assert_rectangular(stats)
    assert len(stats) - 1 == 3 * (2 + 1)
    for row in stats[1:]:
        bias, var, mse = (float(row[i]) for i in (4, 5, 6))
        assert mse == pytest.approx(bias**2 + var, rel=1e-9)
    trace = read_csv(out / "trace.csv")
    assert trace[0][:2] == ["iter", "tau.alpha"] and len(trace) == 4
    meta = json.loads((out / "run.json").read_text())
    assert meta["seed"] == 5 and meta["status"] == 0
    assert meta["config"]["sweep"]["epsilons"] == [1.0, 10.0]
    assert parse_config(meta["config_toml"]).sweep.iterations == 3
    assert {"vind", "numpy", "python"} <= set(meta["versions"])
    assert meta["wall_clock_seconds"] >= 0


def test_runs_are_byte_identical(tmp_path):
    for text in (SMALL_MSE, SMALL_LINREG):
        a = config_file(tmp_path, text, out="a", name="a.toml")
        b = config_file(tmp_path, text, out="b", name="b.toml")
        assert main(["run", str(a)]) == 0 and main(["run", str(b)]) == 0
        for f in ("trace.csv",) + (("stats.csv",) if "mse" in text else ()):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_and_out_overrides(tmp_path):
    p = config_file(tmp_path, SMALL_LINREG)
    assert main(["run", str(p), "--out", str(tmp_path / "s2")]) == 0
    assert main(["run", str(p), "--seed", "3", "--out", str(tmp_path / "s3")]) == 0
    assert json.loads((tmp_path / "s3" / "run.json").read_text())["seed"] == 3
    assert (tmp_path / "s2" / "trace.csv").read_bytes() != (tmp_path / "s3" / "trace.csv").read_bytes()
    assert not (tmp_path / "out").exists()


def test_linreg_fit_outputs(tmp_path):
    assert main(["run", str(config_file(tmp_path, SMALL_LINREG))]) == 0
    out = tmp_path / "out"
    trace = read_csv(out / "trace.csv")
    assert_rectangular(trace)
    assert trace[0][:3] == ["iter", "neg_elbo", "neg_elbo_smoothed"]
    assert "tau.alpha" in trace[0] and "w.loc[2]" in trace[0]
    assert [int(r[0]) for r in trace[1:]] == list(range(26))
    assert all(math.isfinite(float(x)) for r in trace[1:] for x in r)
    summary = json.loads((out / "run.json").read_text())["summary"]
    assert summary["methods"]["tau.alpha"] == "vind"
    assert math.isfinite(summary["heldout_log_loss_per_observation"])


def test_variance_probe_outputs(tmp_path):
    text = '''
experiment = "variance-probe"
seed = 4
[data]
n = 40
d = 2
[fit]
iterations = 4
n_elbo = 2
[probe]
every = 2
n_probe = 50
'''
    assert main(["run", str(config_file(tmp_path, text))]) == 0
    stats = read_csv(tmp_path / "out" / "stats.csv")
    assert_rectangular(stats)
    iters = sorted({int(r[0]) for r in stats[1:]})
    assert iters == [0, 2, 4]
    assert {r[1] for r in stats[1:]} == {"vind", "vind_uncoupled", "bbvi_rb"}
    for r in stats[1:]:
        assert float(r[5]) >= 0


def test_synth_then_fit_from_csv(tmp_path, capsys):
    spec = tmp_path / "spec.toml"
    spec.write_text(f'kind = "linreg"\nn = 50\nd = 3\nseed = 1\noutput = "{tmp_path / "lin.csv"}"\n')
    assert main(["synth", str(spec)]) == 0
    table = load_returns_csv(tmp_path / "lin.csv")
    assert table.n == 50 and table.columns[-1] == "y"
    p = config_file(tmp_path, f'experiment = "linreg-fit"\n[data]\nsource = "csv"\npath = "{tmp_path / "lin.csv"}"\n'
                              f'n_train = 40\n[fit]\niterations = 5\n')
    assert main(["run", str(p)]) == 0
    spec.write_text('kind = "student"\nn = 30\nd = 4\n')
    assert main(["synth", str(spec), "--out", str(tmp_path / "st.csv"), "--seed", "2"]) == 0
    assert load_returns_csv(tmp_path / "st.csv").d == 4
