import csv
import json

import numpy as np
import pytest

from dropsense import cli, reference as ref


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def fig3f(tmp_path):
    p = tmp_path / "fig3f.cfg"
    p.write_text("# 15 s, f_D = 29 Hz, f_MW = 1 kHz\nacquisition.duration = 15.0\ndroplets.f_D = 29.0\n"
                 "mw.f_MW = 1000.0\nmw.contrast = 0.056\n")
    return p


@pytest.mark.parametrize("cmd", [[], ["synth"], ["analyze"], ["allan"], ["titrate"], ["brownian"], ["replay"]])
def test_help_exits_zero(cmd, capsys):
    assert run(*cmd, "--help") == 0
    assert "--" in capsys.readouterr().out


def test_synth_analyze_peaks_and_sidecar(fig3f, tmp_path):
    out = tmp_path / "t.bin"
    assert run("synth", "--config", fig3f, "--out", out) == 0
    truth = json.loads((tmp_path / "t.truth.json").read_text())
    assert truth["true_contrast"] == 0.056 and truth["f_D_nominal"] == 29.0
    from dropsense import io
    from dropsense.dsp import window_spectrum
    w = window_spectrum(io.read_trace(out), 15.0, 15.0)
    m = w.magnitudes
    peaks = {int(round(w.freqs[i])) for i in range(1, m.size - 1)
             if m[i] > m[i - 1] and m[i] > m[i + 1] and m[i] > 1e-3 * m.max()}
    assert {29, 971, 1000, 1029} <= peaks


def test_analyze_per_estimator(fig3f, tmp_path):
    run("synth", "--config", fig3f, "--out", tmp_path / "t.bin")
    expect = {"exact": 0.056, "si": 0.028, "paper": 0.056 * 2 / 29}
    for name, val in expect.items():
        out = tmp_path / f"{name}.csv"
        assert run("analyze", tmp_path / "t.bin", "--out", out, "--estimator", name, "--window-s", 1.0) == 0
        s = json.loads((tmp_path / f"{name}.summary.json").read_text())
        assert s["mean"] == pytest.approx(val, rel=1e-6)


def test_analyze_both(fig3f, tmp_path):
    run("synth", "--config", fig3f, "--out", tmp_path / "t.bin")
    assert run("analyze", tmp_path / "t.bin", "--out", tmp_path / "c.csv", "--estimator", "both") == 0
    s = json.loads((tmp_path / "c.summary.json").read_text())
    assert set(s) == {"dual", "conventional"}
    assert (tmp_path / "c_dual.csv").exists() and (tmp_path / "c_conventional.csv").exists()


def test_analyze_without_droplets_exit3(tmp_path):
    cfg = tmp_path / "nod.cfg"
    cfg.write_text("acquisition.duration = 5.0\ndroplets.g0 = 0.0\nnoise.background_white_sigma = 0.01\n")
    run("synth", "--config", cfg, "--out", tmp_path / "t.bin")
    assert run("analyze", tmp_path / "t.bin", "--out", tmp_path / "c.csv") == 3


def test_exit_codes(tmp_path):
    z = tmp_path / "z.cfg"
    z.write_text("acquisition.duration = 0\n")
    assert run("synth", "--config", z, "--out", tmp_path / "z.bin") == 2
    bad = tmp_path / "b.cfg"
    bad.write_text("mw.what = 3\n")
    assert run("synth", "--config", bad, "--out", tmp_path / "z.bin") == 2
    assert run("synth", "--config", tmp_path / "missing.cfg", "--out", tmp_path / "z.bin") == 4
    assert run("analyze", tmp_path / "missing.bin", "--out", tmp_path / "c.csv") == 4
    assert run("allan", tmp_path / "missing.csv", "--out", tmp_path / "a.csv") == 4
    assert run("synth", "--format", "xml", "--out", tmp_path / "z.bin") == 2


def test_determinism_and_replay(fig3f, tmp_path):
    for name in ("a.bin", "b.bin"):
        assert run("synth", "--config", fig3f, "--out", tmp_path / name, "--seed", 5) == 0
    ma = json.loads((tmp_path / "a.bin.manifest.json").read_text())
    mb = json.loads((tmp_path / "b.bin.manifest.json").read_text())
    assert ma["outputs"][str(tmp_path / "a.bin")] == mb["outputs"][str(tmp_path / "b.bin")]
    assert ma["seed"] == 5 and ma["command"] == "synth" and "tool_version" in ma
    assert "mw.contrast = 0.056" in ma["config"]["experiment"]
    assert run("replay", tmp_path / "a.bin.manifest.json") == 0
    (tmp_path / "a.bin").write_bytes(b"tampered")
    assert run("replay", tmp_path / "a.bin.manifest.json") == 0  # replay rewrites, then verifies


def test_csv_format(fig3f, tmp_path):
    assert run("synth", "--config", fig3f, "--out", tmp_path / "t.csv", "--format", "csv") == 0
    with open(tmp_path / "t.csv") as fh:
        assert next(csv.reader(fh)) == ["t", "value"]
    assert run("analyze", tmp_path / "t.csv", "--out", tmp_path / "c.csv", "--config", fig3f) == 0


def test_allan_command(tmp_path):
    from dropsense.core import ContrastSeries, EstimatorId
    from dropsense.duallock import write_series_csv
    y = 0.056 + 0.001 * np.random.default_rng(0).standard_normal(20_000)
    write_series_csv(ContrastSeries(0.5 * np.arange(y.size), y, np.ones(y.size, bool), EstimatorId.PAPER_MAIN),
                     tmp_path / "c.csv")
    assert run("allan", tmp_path / "c.csv", "--out", tmp_path / "a.csv", "--taus", "1,10,100,1000") == 0
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert [float(r["tau_s"]) for r in rows] == [1.0, 10.0, 100.0, 1000.0]


def test_titrate_command(tmp_path):
    out = tmp_path / "t.csv"
    assert run("titrate", "--out", out, "--conc", "0,1e-6,1e-5", "--duration-s", 5, "--settling-s", 1,
               "--seed", 2) == 0
    js = json.loads((tmp_path / "t.summary.json").read_text())
    assert js["lod_convention"] == "3-sigma" and js["n_points"] == 3


def test_brownian_command(tmp_path):
    out = tmp_path / "traj.csv"
    assert run("brownian", "--out", out, "--n-particles", 5, "--duration-s", 2) == 0
    assert (tmp_path / "traj.hist.csv").exists()
    assert run("brownian", "--out", out, "--diffusion", 1000, "--radius", 1, "--dt", 1) == 2


@pytest.mark.slow
def test_pipeline_one_hour_allan_slope(tmp_path):
    from dropsense import configfile
    from dropsense.stability import AllanCurve
    configfile.dump(ref.matched_budget(3600.0), tmp_path / "ref.cfg")
    assert run("synth", "--config", tmp_path / "ref.cfg", "--out", tmp_path / "t.bin") == 0
    assert run("analyze", tmp_path / "t.bin", "--out", tmp_path / "c.csv", "--estimator", "paper",
               "--window-s", 0.5) == 0
    assert run("allan", tmp_path / "c.csv", "--out", tmp_path / "a.csv", "--fractional",
               "--taus", "1,2,5,10,20,50,100,200,500,1000") == 0
    (tmp_path / "t.bin").unlink()
    assert AllanCurve.from_csv(tmp_path / "a.csv").slope(1.0, 1000.0) == pytest.approx(-0.5, abs=0.05)
