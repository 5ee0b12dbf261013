"""Ratiometric dual lock-in contrast from windowed Fourier amplitudes.

Per window, with F(f) the band amplitude around f:

* ``PAPER_MAIN``:  [F(f_MW) + F(f_MW + f_D) + F(f_MW - f_D)] / F(f_D) / f_D
  (carries units of seconds; map to contrast with :func:`calibrate`)
* ``SI_VARIANT``:  [F(f_MW + f_D) + F(f_MW - f_D)] / (2 F(f_D))
* ``EXACT_RECOVERY``: [F(f_MW) + F(f_MW + f_D) + F(f_MW - f_D)] / (M + F(f_D))
  with M the window mean minus the known background level.

For a noiseless sinusoidal droplet profile these give C (m0 + g0) / (g0 f_D),
C / 2 and C respectively.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import ContrastSeries, EstimatorId, TimeSeries
from .dsp import (DEFAULT_HALF_WIDTH, DEFAULT_TAPER, DEFAULT_WINDOW, BandSpec, WindowedSpectra,
                  _parabolic_peak, band_amplitudes, noise_floor)

log = logging.getLogger(__name__)


class RateSource(str, enum.Enum):
    NOMINAL = "nominal"
    TRACKED = "tracked"


@dataclass(frozen=True)
class EstimatorConfig:
    estimator_id: EstimatorId = EstimatorId.PAPER_MAIN
    f_D: float = 29.0
    f_MW: float = 1000.0
    delta_t: float = DEFAULT_WINDOW
    droplet_half_width: float = DEFAULT_HALF_WIDTH
    mw_half_width: float = DEFAULT_HALF_WIDTH
    f_D_source: RateSource = RateSource.NOMINAL
    taper: str = DEFAULT_TAPER
    background_level: float = 0.0  # subtracted from the window mean (EXACT_RECOVERY)
    min_snr: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "estimator_id", EstimatorId(self.estimator_id))
        object.__setattr__(self, "f_D_source", RateSource(self.f_D_source))
        if self.estimator_id is EstimatorId.CONVENTIONAL:
            raise ValueError("the conventional estimator lives in dropsense.lockin")

    @property
    def bands(self) -> dict[str, BandSpec]:
        return {
            "droplet": BandSpec(self.f_D, self.droplet_half_width),
            "mw": BandSpec(self.f_MW, self.mw_half_width),
            "upper": BandSpec(self.f_MW + self.f_D, self.mw_half_width),
            "lower": BandSpec(self.f_MW - self.f_D, self.mw_half_width),
        }

    def check(self) -> list[str]:
        problems = []
        b = list(self.bands.values())
        for i in range(len(b)):
            for j in range(i + 1, len(b)):
                if b[i].overlaps(b[j]):
                    problems.append(f"bands {b[i]} and {b[j]} overlap")
        if self.delta_t < 10.0 / self.f_D:
            problems.append("delta_t holds fewer than 10 droplets")
        return problems


def estimate_contrast(ts: TimeSeries, cfg: EstimatorConfig) -> ContrastSeries:
    """Contrast estimate for every aligned window of ``ts``.

    Windows whose droplet line does not clear ``min_snr`` times the noise floor
    are flagged invalid (no droplets). With ``f_D_source=TRACKED`` the sideband
    bands and the 1/f_D factor follow the per-window droplet-rate estimate; an
    invalid estimate inherits the last valid one. The droplet band is
    recentred along with the sidebands.
    """
    for p in cfg.check():
        if "overlap" in p:
            raise ValueError(p)
        log.warning(p)
    spectra = WindowedSpectra(ts, cfg.delta_t, cfg.taper)
    bands = cfg.bands
    for b in bands.values():
        b.check(spectra.nyquist)
    res = spectra.resolution
    enbw = spectra.enbw_bins
    sl_d = spectra.band_slice(bands["droplet"])
    sl_mw = spectra.band_slice(bands["mw"])
    n_db = sl_d.stop - sl_d.start

    nw = spectra.n_windows
    values = np.empty(nw)
    valid = np.empty(nw, dtype=bool)
    tracked = cfg.f_D_source is RateSource.TRACKED
    last_f = cfg.f_D
    for b in spectra:
        mags = b.magnitudes
        rows = slice(b.first_index, b.first_index + mags.shape[0])
        F_d = band_amplitudes(mags, sl_d, enbw)
        ok = F_d >= cfg.min_snr * noise_floor(mags, n_db, enbw)
        F_mw = band_amplitudes(mags, sl_mw, enbw)
        if tracked:
            f_d = np.empty(mags.shape[0])
            kk = np.argmax(mags[:, sl_d], axis=1) + sl_d.start
            kk = np.clip(kk, 1, mags.shape[1] - 2)
            est = (kk + _parabolic_peak(mags, kk)) * res
            for i in range(mags.shape[0]):
                if ok[i]:
                    last_f = est[i]
                f_d[i] = last_f
            F_up = np.empty(mags.shape[0])
            F_lo = np.empty(mags.shape[0])
            for i in range(mags.shape[0]):
                # the droplet band moves too, so all three bands keep the same bin geometry
                sf = spectra.band_slice(BandSpec(f_d[i], cfg.droplet_half_width))
                su = spectra.band_slice(BandSpec(cfg.f_MW + f_d[i], cfg.mw_half_width))
                sd = spectra.band_slice(BandSpec(cfg.f_MW - f_d[i], cfg.mw_half_width))
                F_d[i] = band_amplitudes(mags[i], sf, enbw)
                F_up[i] = band_amplitudes(mags[i], su, enbw)
                F_lo[i] = band_amplitudes(mags[i], sd, enbw)
        else:
            f_d = np.full(mags.shape[0], cfg.f_D)
            F_up = band_amplitudes(mags, spectra.band_slice(bands["upper"]), enbw)
            F_lo = band_amplitudes(mags, spectra.band_slice(bands["lower"]), enbw)

        with np.errstate(divide="ignore", invalid="ignore"):
            if cfg.estimator_id is EstimatorId.PAPER_MAIN:
                v = (F_mw + F_up + F_lo) / F_d / f_d
            elif cfg.estimator_id is EstimatorId.SI_VARIANT:
                v = (F_up + F_lo) / (2.0 * F_d)
            else:
                v = (F_mw + F_up + F_lo) / (b.means - cfg.background_level + F_d)
        ok &= np.isfinite(v)
        values[rows] = np.where(ok, v, np.nan)
        valid[rows] = ok

    return ContrastSeries(spectra.t_centers(), values, valid, cfg.estimator_id,
                          uncalibrated=cfg.estimator_id is EstimatorId.PAPER_MAIN)


def calibrate(series: ContrastSeries, reference_C: float) -> float:
    """Scale factor ``k`` with ``k * series.mean == reference_C``."""
    if series.n_valid == 0:
        raise ValueError("cannot calibrate: no valid windows")
    m = series.mean
    if not math.isfinite(m) or m <= 0:
        raise ValueError(f"cannot calibrate: mean {m} is not positive")
    return reference_C / m


def write_series_csv(series: ContrastSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "C_hat", "valid_flag"])
        for t, v, ok in zip(series.times, series.values, series.valid):
            w.writerow([repr(float(t)), repr(float(v)) if ok else "nan", int(ok)])


def read_series_csv(path, estimator_id=EstimatorId.PAPER_MAIN) -> ContrastSeries:
    t, v, ok = [], [], []
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        for row in r:
            t.append(float(row["t"]))
            v.append(float(row["C_hat"]))
            ok.append(bool(int(row["valid_flag"])))
    return ContrastSeries(np.array(t), np.array(v), np.array(ok, dtype=bool), estimator_id)


def summary(series: ContrastSeries) -> dict:
    return {
        "estimator_id": series.estimator_id.value,
        "mean": series.mean,
        "percent_error": series.percent_error if series.n_valid > 1 else None,
        "n_windows": len(series),
        "n_valid": series.n_valid,
        "uncalibrated": series.uncalibrated,
    }
