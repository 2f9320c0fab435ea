import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from preavgcov.cli import main
from preavgcov.core import PreAvgConfig
from preavgcov.estimators import hy_preavg, mrc_balanced
from preavgcov.inference import avar_mrc, ci_beta, ci_corr, ci_cov
from preavgcov.ingest import write_tick_series
from preavgcov.sim import Scenario, SvModelConfig, simulate_observations
from preavgcov.sync import refresh_time

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def tick_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("ticks")
    obs = simulate_observations(SvModelConfig(grid_N=23400), Scenario(0.001, (3, 6)), rep=0,
                                master_seed=17)
    paths = []
    for k, s in enumerate(obs.series):
        p = d / f"asset{k}.csv"
        write_tick_series(p, s)
        paths.append(str(p))
    return paths, obs.series


def _rows(text, section):
    return [ln.split("\t") for ln in text.splitlines() if ln.startswith(section + "\t")]


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_estimate_hy_preavg_matches_library(capsys, tick_files):
    paths, series = tick_files
    code, out, _ = _run(capsys, ["estimate", *paths, "--estimator", "hy-preavg"])
    assert code == 0
    lib = hy_preavg(series, PreAvgConfig(theta=1.0)).matrix
    cov = _rows(out, "cov")
    assert [r[3] for r in cov] == [repr(float(x)) for x in lib.ravel()]


def test_estimate_mrc_matches_library(capsys, tick_files):
    paths, series = tick_files
    code, out, _ = _run(capsys, ["estimate", *paths, "--estimator", "mrc", "--sync", "refresh",
                                 "--theta", "1"])
    assert code == 0
    est = mrc_balanced(refresh_time(series), PreAvgConfig(theta=1.0))
    cov = _rows(out, "cov")
    assert [float(r[3]) for r in cov] == list(est.matrix.ravel())
    assert f"# kn={est.kn_used}" in out and f"# n={est.n_used}" in out
    assert "# sync=refresh_time" in out
    corr = _rows(out, "corr")[0]
    assert float(corr[3]) == est.matrix[0, 1] / np.sqrt(est.matrix[0, 0] * est.matrix[1, 1])
    assert _rows(out, "psd")[0][3] in ("true", "false")


def test_infer_matches_library(capsys, tick_files):
    paths, series = tick_files
    code, out, _ = _run(capsys, ["infer", *paths, "--level", "0.9"])
    assert code == 0
    panel = refresh_time(series)
    est = mrc_balanced(panel, PreAvgConfig())
    av = avar_mrc(panel, PreAvgConfig())
    rows = {(r[1], r[2], r[3]): r for r in _rows(out, "ci")}
    for kind, fn in (("covariance", ci_cov), ("beta", ci_beta), ("correlation", ci_corr)):
        ci = fn(est, av, 0, 1, 0.9)
        r = rows[(kind, "0", "1")]
        assert float(r[4]) == ci.point and float(r[5]) == ci.half_width
        assert r[8] == "0.9" and r[9] == str(ci.valid).lower()
    assert "# level=0.9" in out and "# triple=min;sine(1);sine(2)" in out


def test_infer_default_level(capsys, tick_files):
    code, out, _ = _run(capsys, ["infer", *tick_files[0]])
    assert code == 0 and "# level=0.95" in out


def test_estimate_with_infer_flag(capsys, tick_files):
    code, out, _ = _run(capsys, ["estimate", *tick_files[0], "--infer"])
    assert code == 0 and _rows(out, "cov") and _rows(out, "ci")


def test_calendar_sync_and_other_estimators(capsys, tick_files):
    for extra in (["--estimator", "rv", "--sync", "calendar:390"], ["--estimator", "mrc-psd"],
                  ["--estimator", "hy"]):
        code, out, _ = _run(capsys, ["estimate", *tick_files[0], *extra])
        assert code == 0 and len(_rows(out, "cov")) == 4


def test_output_is_deterministic(capsys, tick_files, tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert main(["estimate", *tick_files[0], "-o", str(a)]) == 0
    assert main(["estimate", *tick_files[0], "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("argv", [
    ["estimate", "X", "--estimator", "rv", "--infer"],
    ["infer", "X", "--estimator", "hy"],
    ["estimate", "X", "--estimator", "mrc", "--delta", "0.1"],
    ["estimate", "X", "--estimator", "mrc-psd", "--delta", "0.7"],
    ["estimate", "X", "--sync", "weekly"],
    ["estimate", "X", "--level", "1.5"],
    ["estimate", "X", "--weight", "gauss"],
    ["simulate", "--scenario", "gamma2=0"],
    ["simulate", "--estimators", "nope"],
    ["simulate", "--reps", "0"],
    ["clean", "-o", "x.csv"],
    ["frobnicate"],
])
def test_usage_errors(capsys, argv, tick_files):
    argv = [tick_files[0][0] if a == "X" else a for a in argv]
    if argv[0] in ("estimate", "infer") and argv[1] == tick_files[0][0]:
        argv.insert(2, tick_files[0][1])
    code, _, err = _run(capsys, argv)
    assert code == 1
    assert err


def test_data_errors(capsys, tmp_path):
    code, _, err = _run(capsys, ["estimate", str(tmp_path / "missing.csv"), str(tmp_path / "m2.csv")])
    assert code == 2 and "data error" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("time_fraction,log_price\n0.5,1\n0.2,2\n")
    code, _, err = _run(capsys, ["estimate", str(bad), str(bad)])
    assert code == 2


def test_numerical_error_exit(capsys, tick_files):
    code, _, err = _run(capsys, ["infer", *tick_files[0], "--triple", "min;min;sine:1"])
    assert code == 3 and "singular" in err


def test_clean_trades(capsys, tmp_path):
    out, rep = tmp_path / "t.csv", tmp_path / "r.txt"
    code, _, _ = _run(capsys, ["clean", "--trades", str(FIXTURES / "trades.csv"), "--exchange", "N",
                               "--asset-id", "XYZ", "-o", str(out), "--report", str(rep)])
    assert code == 0
    text = rep.read_text()
    assert "deleted.exchange=4" in text and "aggregated=1" in text and "output=6" in text
    assert out.read_text().startswith("# asset_id=XYZ\ntime_fraction,log_price\n")


def test_clean_quotes_report_to_stdout(capsys, tmp_path):
    code, out, _ = _run(capsys, ["clean", "--quotes", str(FIXTURES / "quotes.csv"), "--exchange", "N",
                                 "-o", str(tmp_path / "q.csv")])
    assert code == 0 and "deleted.wide_spread=1" in out and "output=9" in out


def test_clean_data_error(capsys, tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("timestamp,price,size,exch,corr,cond\n10:00:00,0,1,N,0,\n")
    code, _, err = _run(capsys, ["clean", "--trades", str(p), "-o", str(tmp_path / "o.csv")])
    assert code == 2


def test_simulate_deterministic(capsys):
    argv = ["simulate", "--reps", "1", "--seed", "7", "--scenario", "gamma2=0.001,lambda=10",
            "--estimators", "cov5m,mrc,hy"]
    code1, out1, _ = _run(capsys, argv)
    code2, out2, _ = _run(capsys, argv)
    assert code1 == code2 == 0 and out1 == out2
    assert "# reps=1" in out1 and "# seed=7" in out1
    assert "gamma2=0.001;lambda=(10,20)" in out1


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "preavgcov.cli", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
