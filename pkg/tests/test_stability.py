import math

import numpy as np
import pytest

from dropsense import reference as ref
from dropsense.core import ContrastSeries, EstimatorId
from dropsense.dsp import BandSpec, spectrogram
from dropsense.stability import (AllanCurve, VariationBound, allan_deviation, histogram_fit, log_taus,
                                 nd_variation_bound)
from dropsense.synth import synthesize


def series(v, dt=1.0, valid=None):
    v = np.asarray(v, float)
    return ContrastSeries(dt * np.arange(v.size), v, np.ones(v.size, bool) if valid is None else valid,
                          EstimatorId.PAPER_MAIN)


def two_sample_oracle(y, m):
    # textbook non-overlapping Allan variance, written out longhand
    blocks = [sum(y[i * m:(i + 1) * m]) / m for i in range(len(y) // m)]
    d = [(blocks[i + 1] - blocks[i]) ** 2 for i in range(len(blocks) - 1)]
    return math.sqrt(0.5 * sum(d) / len(d))


def test_white_noise_slope():
    y = np.random.default_rng(0).standard_normal(200_000)
    curve = allan_deviation(series(y), log_taus(1.0, y.size))
    assert curve.slope(2.0, 2000.0) == pytest.approx(-0.5, abs=0.05)


def test_matches_brute_force_two_sample_variance():
    y = np.random.default_rng(1).standard_normal(20_000)
    taus = [2, 5, 10, 50, 100, 500]
    ov = allan_deviation(series(y), taus)
    nov = allan_deviation(series(y), taus, overlapping=False)
    for t, a, b in zip(ov.taus, ov.deviations, nov.deviations):
        assert b == pytest.approx(two_sample_oracle(list(y), int(t)), rel=1e-9)
        assert a == pytest.approx(b, rel=0.10)


def test_constant_series_zero():
    curve = allan_deviation(series(np.full(1000, 0.056)), [2, 10, 100])
    assert np.all(curve.deviations == 0.0)


def test_short_taus_omitted_and_small_tau_rejected():
    curve = allan_deviation(series(np.arange(30.0)), [2, 5, 10, 11, 20])
    assert list(curve.taus) == [2, 5, 10]
    with pytest.raises(ValueError):
        allan_deviation(series(np.arange(30.0)), [1.0])


def test_gaps_interpolated_or_rejected():
    y = np.random.default_rng(2).standard_normal(500)
    ok = np.ones(500, bool)
    ok[10:20] = False
    y2 = y.copy()
    y2[~ok] = np.nan
    s = series(y2, valid=ok)
    assert np.all(np.isfinite(allan_deviation(s, [2, 10]).deviations))
    with pytest.raises(ValueError):
        allan_deviation(s, [2, 10], gaps="reject")


def test_allan_csv_roundtrip(tmp_path):
    y = np.random.default_rng(3).standard_normal(1000)
    c = allan_deviation(series(y, 0.5), [1.0, 5.0, 50.0])
    c.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().startswith("tau_s,sigma,n")
    back = AllanCurve.from_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.deviations, c.deviations)
    assert np.all(np.diff(back.taus) > 0)


def test_histogram_fit_recovers_two_percent():
    v = np.random.default_rng(4).normal(0.056, 0.00112, 20_000)
    fit = histogram_fit(series(v))
    assert fit.percent_error == pytest.approx(2.0, abs=0.2)


def test_histogram_fit_delta_and_errors():
    assert histogram_fit(series(np.full(200, 0.03))).sigma == 0.0
    with pytest.raises(ValueError):
        histogram_fit(series(np.ones(50)))
    with pytest.raises(ValueError):
        histogram_fit(series(np.random.default_rng(0).normal(-1.0, 0.01, 500)))


def test_histogram_fit_error_shrinks_with_n():
    errs = {}
    for n in (10**3, 10**5):
        e = []
        for seed in range(10):
            v = np.random.default_rng(seed).normal(0.056, 0.00112, n)
            f = histogram_fit(series(v))
            e.append(abs(f.sigma - 0.00112) + abs(f.mu - 0.056))
        errs[n] = np.mean(e)
    assert errs[10**5] < errs[10**3]


def test_variation_bound_identity():
    vb = VariationBound(7.0, 0.01, 0.01 * math.sqrt(7.0 / 1000.0), 1000.0, 10)
    assert vb.extrapolated_sigma == pytest.approx(0.01 * math.sqrt(0.007))
    with pytest.raises(AssertionError):
        VariationBound(7.0, 0.01, 0.02, 1000.0, 10)


def test_variation_bound_noiseless_zero():
    ts, _ = synthesize(ref.noiseless(77.0, f_D=34.0))
    band = BandSpec(1000.0)
    vb = nd_variation_bound(spectrogram(ts, 0.7, [band]), band, 7.0, 1000.0)
    assert vb.n_bins == 11
    assert vb.extrapolated_sigma <= 1e-6


def test_variation_bound_needs_ten_bins_and_signal():
    ts, _ = synthesize(ref.noiseless(40.0, f_D=34.0))
    band = BandSpec(1000.0)
    with pytest.raises(ValueError, match="10 bins"):
        nd_variation_bound(spectrogram(ts, 0.7, [band]), band)
    ts0, _ = synthesize(ref.noiseless(77.0, f_D=34.0, contrast=0.0).with_(noise={"background_white_sigma": 0.01}))
    with pytest.raises(ValueError, match="noise floor"):
        nd_variation_bound(spectrogram(ts0, 0.7, [band]), band)


@pytest.mark.parametrize("sigma_d", [0.0023, 0.01])
def test_per_droplet_spread_visible_at_droplet_line(sigma_d):
    # loading scales the droplet term, so its spread shows up in F(f_D); one
    # droplet per 1/f_D, so extrapolating to a single droplet period recovers sigma_d
    cfg = ref.noiseless(147.0, f_D=34.0).with_(droplets={"per_droplet_sigma": sigma_d})
    ts, _ = synthesize(cfg)
    band = BandSpec(34.0)
    vb = nd_variation_bound(spectrogram(ts, 0.7, [band], "rect"), band, 7.0, 1.0 / 34.0)
    assert vb.extrapolated_sigma == pytest.approx(sigma_d, rel=0.35)
