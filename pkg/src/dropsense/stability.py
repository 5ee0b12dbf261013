"""Long-run stability: Allan deviation, histogram Gaussian fits, ND-variation bound.

Contrast samples are treated as fractional-frequency data: the Allan
deviation at averaging time tau = m tau0 is

    sigma(tau) = sqrt( 1/2 < (ybar_{k+m} - ybar_k)^2 > )

over the m-sample running means ybar (overlapping estimator). The
non-overlapping two-sample form is kept alongside as a brute-force cross-check.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .core import ContrastSeries
from .dsp import BandSpec, Spectrogram


@dataclass(frozen=True)
class AllanCurve:
    taus: np.ndarray
    deviations: np.ndarray
    n_samples_per_tau: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_s", "sigma", "n"])
            for t, s, n in zip(self.taus, self.deviations, self.n_samples_per_tau):
                w.writerow([repr(float(t)), repr(float(s)), int(n)])

    @classmethod
    def from_csv(cls, path) -> "AllanCurve":
        rows = list(csv.DictReader(open(path, newline="")))
        return cls(np.array([float(r["tau_s"]) for r in rows]),
                   np.array([float(r["sigma"]) for r in rows]),
                   np.array([int(r["n"]) for r in rows]))

    def at(self, tau: float) -> float:
        """Deviation at the tabulated tau closest to ``tau`` (log distance)."""
        i = int(np.argmin(np.abs(np.log(self.taus / tau))))
        return float(self.deviations[i])

    def slope(self, tau_min: float = 0.0, tau_max: float = np.inf) -> float:
        """Least-squares log-log slope over taus in [tau_min, tau_max]."""
        sel = (self.taus >= tau_min * (1 - 1e-9)) & (self.taus <= tau_max * (1 + 1e-9)) & (self.deviations > 0)
        if sel.sum() < 2:
            raise ValueError("need at least two taus to fit a slope")
        return float(np.polyfit(np.log10(self.taus[sel]), np.log10(self.deviations[sel]), 1)[0])


def log_taus(tau0: float, t_total: float, per_decade: int = 5, start: Optional[float] = None) -> np.ndarray:
    """Log-spaced averaging times from ``start`` (default 2 tau0) up to a third of the record."""
    lo = start if start is not None else 2.0 * tau0
    hi = t_total / 3.0
    if hi < lo:
        return np.array([])
    k = np.arange(0, int(math.floor(per_decade * math.log10(hi / lo) + 1e-9)) + 1)
    m = np.unique(np.round(lo * 10.0 ** (k / per_decade) / tau0).astype(np.int64))
    return m * tau0


def _prepare(series: ContrastSeries, gaps: str, fractional: bool) -> tuple[np.ndarray, float]:
    t = series.times
    if t.size < 3:
        raise ValueError("series too short")
    d = np.diff(t)
    tau0 = float(np.median(d))
    if not np.allclose(d, tau0, rtol=1e-6, atol=1e-9 * tau0):
        raise ValueError("series is not uniformly sampled")
    y = np.array(series.values, dtype=np.float64)
    bad = ~series.valid | ~np.isfinite(y)
    if bad.any():
        if gaps == "reject":
            raise ValueError("series contains invalid points")
        if bad.all():
            raise ValueError("series has no valid points")
        y[bad] = np.interp(t[bad], t[~bad], y[~bad])
    if fractional:
        y = y / y.mean()
    return y, tau0


def allan_deviation(series: ContrastSeries, taus: Optional[Sequence[float]] = None, *, overlapping: bool = True,
                    fractional: bool = False, gaps: str = "interpolate") -> AllanCurve:
    """Allan deviation of a uniformly sampled contrast series.

    Invalid points are linearly interpolated (``gaps="interpolate"``) or make
    the call fail (``gaps="reject"``). ``fractional`` divides by the mean first.
    Taus that fit fewer than three blocks into the record are left out.
    """
    y, tau0 = _prepare(series, gaps, fractional)
    n = y.size
    if taus is None:
        taus = log_taus(tau0, n * tau0)
    c = np.concatenate(([0.0], np.cumsum(y - y.mean())))
    out_t, out_s, out_n = [], [], []
    for tau in taus:
        m = int(round(tau / tau0))
        if m < 1 or tau < 2.0 * tau0 * (1 - 1e-9):
            raise ValueError(f"tau={tau} is below twice the series spacing {tau0}")
        if n // m < 3:
            continue
        if overlapping:
            ybar = (c[m:] - c[:-m]) / m
            diff = ybar[m:] - ybar[:-m]
        else:
            blocks = y[: (n // m) * m].reshape(-1, m).mean(axis=1)
            diff = np.diff(blocks)
        out_t.append(m * tau0)
        out_s.append(math.sqrt(0.5 * float(np.mean(diff**2))))
        out_n.append(diff.size)
    return AllanCurve(np.array(out_t), np.array(out_s), np.array(out_n, dtype=np.int64))


@dataclass(frozen=True)
class HistogramFit:
    mu: float
    sigma: float
    percent_error: float


def _gauss(x, amp, mu, sigma):
    return amp * np.exp(-0.5 * ((x - mu) / sigma) ** 2)


def histogram_fit(series: ContrastSeries, n_bins: int = 40) -> HistogramFit:
    """Gaussian least-squares fit to the histogram of the valid values."""
    v = series.valid_values
    if v.size < 100:
        raise ValueError("histogram_fit needs at least 100 valid points")
    if np.ptp(v) == 0.0:
        mu = float(v[0])
        if mu <= 0:
            raise ValueError("mean contrast must be positive")
        return HistogramFit(mu, 0.0, 0.0)
    counts, edges = np.histogram(v, bins=n_bins)
    x = 0.5 * (edges[:-1] + edges[1:])
    p0 = (float(counts.max()), float(v.mean()), float(v.std()))
    popt, _ = curve_fit(_gauss, x, counts, p0=p0, maxfev=5000)
    mu, sigma = float(popt[1]), abs(float(popt[2]))
    if mu <= 0:
        raise ValueError("fitted mean is not positive")
    return HistogramFit(mu, sigma, 100.0 * sigma / mu)


@dataclass(frozen=True)
class VariationBound:
    bin_duration: float
    sigma_at_bin: float
    extrapolated_sigma: float
    extrapolation_tau: float
    n_bins: int

    def __post_init__(self):
        expect = self.sigma_at_bin * math.sqrt(self.bin_duration / self.extrapolation_tau)
        assert math.isclose(self.extrapolated_sigma, expect, rel_tol=1e-12, abs_tol=1e-300)


def nd_variation_bound(spec: Spectrogram, band: BandSpec, bin_duration: float = 7.0,
                       extrapolation_tau: float = 1000.0) -> VariationBound:
    """Relative spread of the band amplitude over ``bin_duration`` bins, scaled by 1/sqrt(t).

    Window amplitudes are averaged within each bin; the relative standard
    deviation across bins is extrapolated to ``extrapolation_tau`` assuming
    white averaging.
    """
    amp = spec.band_amplitudes(band)
    per_bin = int(round(bin_duration / spec.delta_t))
    if per_bin < 1:
        raise ValueError("bin_duration shorter than one window")
    n_bins = amp.size // per_bin
    if n_bins < 10:
        raise ValueError("spectrogram covers fewer than 10 bins")
    floor = float(np.mean(spec.band_noise_floor(band)))
    if amp.mean() <= floor:
        raise ValueError("band amplitude does not clear the noise floor")
    means = amp[: n_bins * per_bin].reshape(n_bins, per_bin).mean(axis=1)
    sigma = float(means.std(ddof=1) / means.mean())
    t_bin = per_bin * spec.delta_t
    return VariationBound(t_bin, sigma, sigma * math.sqrt(t_bin / extrapolation_tau), extrapolation_tau, n_bins)
