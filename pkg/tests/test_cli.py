import csv
import io as stdio
import shutil
import subprocess

import numpy as np
import pytest

from nsreg import io
from nsreg.cli import EXIT_CAP, EXIT_ERROR, EXIT_OK, build_parser, main, spec_from_values


def run(argv):
    out = stdio.StringIO()
    code = main(argv, stream=out)
    return code, out.getvalue()


def test_subcommands_registered():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == {"solve-integral", "solve-poisson", "deblur", "deautoconv", "denoise-tv",
                        "sweep"}


def test_solve_integral(tmp_path):
    code, out = run(["solve-integral", "--penalty", "l1", "--delta", "1e-3",
                     "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert "termination=DiscrepancySatisfied" in out
    meta = io.read_keyvalue(tmp_path / "metrics.txt")
    assert meta["penalty"] == "l1" and float(meta["delta"]) == 1e-3
    assert io.read_signal_csv(tmp_path / "reconstruction.csv").shape == (401,)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("penalty = l1\ndelta = 1e-2\nseed = 3\nmu0 = 0.05\nmax-iters = 40\n")
    code, _ = run(["solve-integral", "--config", str(cfg), "--delta", "1e-3",
                   "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    meta = io.read_keyvalue(tmp_path / "o" / "metrics.txt")
    assert float(meta["delta"]) == 1e-3          # flag wins
    assert meta["seed"] == "3" and float(meta["mu0"]) == 0.05
    assert meta["max_outer_iters"] == "40"


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run(["solve-integral", "--config", str(cfg)])[0] == EXIT_ERROR


def test_cap_reached_exit_code(tmp_path):
    code, out = run(["solve-poisson", "--max-iters", "2", "--out", str(tmp_path)])
    assert code == EXIT_CAP
    assert "CapReached" in out
    assert (tmp_path / "trajectory.csv").exists()


def test_missing_phantom_is_error(tmp_path):
    code, _ = run(["solve-integral", "--phantom", str(tmp_path / "nope.csv")])
    assert code == EXIT_ERROR


def test_nsit_mode(tmp_path):
    code, _ = run(["solve-integral", "--penalty", "l2", "--fixed-step", "1.0",
                   "--out", str(tmp_path)])
    assert code == EXIT_OK
    t = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1, comments="#",
                   usecols=2)
    assert np.all(t[:-1] == 1.0)


def test_deblur_motion_runs(tmp_path):
    code, out = run(["deblur", "--psf", "motion", "--penalty", "l2", "--max-iters", "2",
                     "--out", str(tmp_path)])
    assert code == EXIT_CAP and "psnr_db=" in out
    assert (tmp_path / "reconstruction.pgm").exists()


def test_deautoconv_runs(tmp_path):
    code, _ = run(["deautoconv", "--penalty", "l2", "--max-iters", "3", "--out", str(tmp_path)])
    assert code in (EXIT_OK, EXIT_CAP)
    assert io.read_signal_csv(tmp_path / "reconstruction.csv").shape == (401,)


def test_denoise_csv(tmp_path):
    src = tmp_path / "b.csv"
    io.write_signal_csv(src, [0.0, 1.0])
    dst = tmp_path / "z.csv"
    code, _ = run(["denoise-tv", str(src), "--lam", "0.1", "--inner-tol", "0",
                   "--max-inner", "20000", "--out", str(dst)])
    assert code == EXIT_OK
    np.testing.assert_allclose(io.read_signal_csv(dst), [0.1, 0.9], atol=1e-6)


def test_denoise_pgm(tmp_path):
    src = tmp_path / "b.pgm"
    io.write_pgm(src, np.random.default_rng(0).uniform(size=(16, 16)), vmin=0, vmax=1)
    dst = tmp_path / "z.pgm"
    assert run(["denoise-tv", str(src), "--lam", "0.05", "--out", str(dst)])[0] == EXIT_OK
    assert io.read_pgm(dst).shape == (16, 16)
    assert run(["denoise-tv", str(tmp_path / "missing.csv"), "--lam", "0.1",
                "--out", str(dst)])[0] == EXIT_ERROR


def test_sweep(tmp_path):
    code, _ = run(["sweep", "solve-integral", "--penalty", "l1", "--deltas", "1e-2,1e-3",
                   "--seeds", "0,1", "--jobs", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert {r["seed"] for r in rows} == {"0", "1"}
    assert (tmp_path / "delta_0.001_seed_1" / "metrics.txt").exists()


def test_default_noise_levels():
    assert spec_from_values("Integral1D", {}).delta == 1e-3
    assert spec_from_values("Deblur", {}).delta_rel == 0.0125


@pytest.mark.skipif(shutil.which("nsreg") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["nsreg", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "solve-integral" in proc.stdout
