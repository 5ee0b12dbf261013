"""Windowed spectra, band amplitudes, Lorentzian peak fits and droplet-rate tracking.

Magnitude convention: single-sided, divided by the taper's coherent gain, so
an in-bin cosine ``A cos(2 pi f t)`` reads ``A`` at its bin. Band amplitudes
are the root-sum-square of the band's magnitudes divided by the square root of
the taper's equivalent noise bandwidth (in bins). For the rectangular taper
that factor is 1; for the periodic Hann taper it is 1.5, which makes an in-bin
line's three non-zero bins (A, A/2, A/2) add back up to exactly A.

Analysis windows are aligned to the trace: window ``i`` spans samples
``[i n, (i + 1) n)`` with ``n = round(delta_t * sample_rate)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .core import SpectrumWindow, TimeSeries

DEFAULT_TAPER = "hann"
DEFAULT_WINDOW = 0.7  # s
DEFAULT_HALF_WIDTH = 2.0  # Hz
LN2 = math.log(2.0)


class FitError(RuntimeError):
    """Lorentzian fit failed; ``best`` holds the best parameters seen, if any."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class BandSpec:
    center: float
    half_width: float = DEFAULT_HALF_WIDTH

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be > 0")

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width

    def overlaps(self, other: "BandSpec") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def check(self, nyquist: float) -> None:
        if self.lo <= 0 or self.hi >= nyquist:
            raise ValueError(f"band {self.lo:g}-{self.hi:g} Hz not within (0, {nyquist:g}) Hz")


def taper(name: str, n: int) -> np.ndarray:
    if name in ("hann", "hanning"):
        # periodic (DFT-even) form: an in-bin line leaks into exactly two neighbours
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if name in ("rect", "rectangular", "boxcar", "none"):
        return np.ones(n)
    raise ValueError(f"unknown taper {name!r}")


def _taper_constants(w: np.ndarray) -> tuple[float, float]:
    s1 = float(w.sum())
    enbw = w.size * float(np.dot(w, w)) / s1**2
    return s1, enbw


def _single_sided(X: np.ndarray, n: int, s1: float) -> np.ndarray:
    mag = np.abs(X) * (2.0 / s1)
    mag[..., 0] *= 0.5
    if n % 2 == 0:
        mag[..., -1] *= 0.5
    return mag


def window_length(ts: TimeSeries, delta_t: float) -> int:
    n = int(round(delta_t / ts.dt))
    if n < 2:
        raise ValueError("delta_t shorter than two samples")
    return n


def window_spectrum(ts: TimeSeries, t_i: float, delta_t: float, taper_name: str = DEFAULT_TAPER,
                    window_index: int = 0) -> SpectrumWindow:
    """Spectrum of the samples in ``[t_i - delta_t, t_i)`` after mean removal and tapering."""
    n = window_length(ts, delta_t)
    start = int(round((t_i - delta_t - ts.t_start) / ts.dt))
    if start < 0 or start + n > len(ts):
        raise ValueError("window exceeds trace bounds")
    x = ts.samples[start:start + n]
    w = taper(taper_name, n)
    s1, enbw = _taper_constants(w)
    mean = float(x.mean())
    X = np.fft.rfft((x - mean) * w)
    return SpectrumWindow(
        window_index=window_index,
        t_center=ts.t_start + (start + n / 2.0) * ts.dt,
        delta_t=n * ts.dt,
        freqs=np.fft.rfftfreq(n, ts.dt),
        magnitudes=_single_sided(X, n, s1),
        mean=mean,
        n_samples=n,
        coherent_sum=s1,
        enbw_bins=enbw,
        taper=taper_name,
    )


@dataclass
class WindowBatch:
    """Magnitudes of consecutive aligned windows, as a 2-D array (window, bin)."""

    first_index: int
    magnitudes: np.ndarray
    means: np.ndarray
    t_centers: np.ndarray


class WindowedSpectra:
    """Iterates aligned windows of a trace in batches; shared by every estimator."""

    def __init__(self, ts: TimeSeries, delta_t: float, taper_name: str = DEFAULT_TAPER, batch: int = 32):
        self.ts = ts
        self.n = window_length(ts, delta_t)
        self.delta_t = self.n * ts.dt
        self.n_windows = len(ts) // self.n
        if self.n_windows < 1:
            raise ValueError("trace shorter than one analysis window")
        self.taper_name = taper_name
        self.w = taper(taper_name, self.n)
        self.coherent_sum, self.enbw_bins = _taper_constants(self.w)
        self.freqs = np.fft.rfftfreq(self.n, ts.dt)
        self.batch = batch

    @property
    def nyquist(self) -> float:
        return 0.5 / self.ts.dt

    @property
    def resolution(self) -> float:
        return 1.0 / self.delta_t

    def band_slice(self, band: BandSpec) -> slice:
        lo = int(math.ceil(band.lo / self.resolution - 1e-9))
        hi = int(math.floor(band.hi / self.resolution + 1e-9))
        return slice(max(lo, 0), min(hi, self.freqs.size - 1) + 1)

    def t_centers(self) -> np.ndarray:
        return self.ts.t_start + (np.arange(self.n_windows) + 0.5) * self.delta_t

    def __iter__(self) -> Iterator[WindowBatch]:
        x = self.ts.samples
        n = self.n
        for i0 in range(0, self.n_windows, self.batch):
            i1 = min(i0 + self.batch, self.n_windows)
            seg = x[i0 * n:i1 * n].reshape(i1 - i0, n)
            means = seg.mean(axis=1)
            X = np.fft.rfft((seg - means[:, None]) * self.w, axis=1)
            mags = _single_sided(X, n, self.coherent_sum)
            tc = self.ts.t_start + (np.arange(i0, i1) + 0.5) * self.delta_t
            yield WindowBatch(i0, mags, means, tc)

    def window(self, i: int) -> SpectrumWindow:
        return window_spectrum(self.ts, self.ts.t_start + (i + 1) * self.delta_t, self.delta_t, self.taper_name, i)


def band_amplitude(win: SpectrumWindow, band: BandSpec) -> float:
    """Amplitude of the content inside ``band``; 0 if the band holds no bins."""
    band.check(win.nyquist)
    sel = (win.freqs >= band.lo - 1e-9 * win.resolution) & (win.freqs <= band.hi + 1e-9 * win.resolution)
    if not np.any(sel):
        return 0.0
    return float(math.sqrt(np.sum(win.magnitudes[sel] ** 2) / win.enbw_bins))


def band_amplitudes(mags: np.ndarray, sl: slice, enbw_bins: float) -> np.ndarray:
    """Vectorized band amplitude over a batch of windows."""
    return np.sqrt(np.sum(mags[..., sl] ** 2, axis=-1) / enbw_bins)


def noise_floor(mags: np.ndarray, n_bins: int, enbw_bins: float) -> np.ndarray:
    """Expected band amplitude of pure noise for a band of ``n_bins`` bins.

    Noise power per bin comes from the median of |mag|^2 (robust to the few
    line bins); for complex Gaussian noise the mean is median / ln 2.
    """
    p = np.median(mags[..., 1:] ** 2, axis=-1) / LN2
    return np.sqrt(n_bins * p / enbw_bins)


def window_noise_floor(win: SpectrumWindow, band: BandSpec) -> float:
    sel = (win.freqs >= band.lo) & (win.freqs <= band.hi)
    return float(noise_floor(win.magnitudes, int(sel.sum()), win.enbw_bins))


# ---------------------------------------------------------------------------
# Lorentzian fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LorentzFit:
    center: float
    fwhm: float
    height: float
    offset: float
    residual_norm: float


def lorentzian(f, center, fwhm, height, offset=0.0):
    return height / (1.0 + ((f - center) / (0.5 * fwhm)) ** 2) + offset


def fit_lorentzian(win: SpectrumWindow, band: BandSpec, max_iter: int = 2000) -> LorentzFit:
    """Least-squares Lorentzian (plus constant offset) over the band's magnitudes."""
    sel = (win.freqs >= band.lo) & (win.freqs <= band.hi)
    f, y = win.freqs[sel], win.magnitudes[sel]
    if f.size < 7:
        raise ValueError("need at least 7 bins in the band")
    base = float(np.median(y))
    k = int(np.argmax(y))
    peak = float(y[k] - base)
    spread = float(np.std(y))
    if peak <= 0 or spread == 0.0:
        raise FitError("no peak in band (flat spectrum)", best=None)
    res = f[1] - f[0]
    p0 = (f[k], 2.0 * res, peak, base)
    bounds = ([band.lo, 0.1 * res, 0.0, -np.inf], [band.hi, 2.0 * (band.hi - band.lo), np.inf, np.inf])
    try:
        popt, _ = curve_fit(lorentzian, f, y, p0=p0, bounds=bounds, maxfev=max_iter)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Lorentzian fit did not converge: {exc}", best=p0) from exc
    resid = y - lorentzian(f, *popt)
    fit = LorentzFit(float(popt[0]), float(popt[1]), float(popt[2]), float(popt[3]), float(np.linalg.norm(resid)))
    # a peak no taller than the residual scatter is not a peak
    if fit.height <= 3.0 * np.std(resid) or fit.fwhm >= 0.99 * bounds[1][1]:
        raise FitError("fit converged to a degenerate solution (no resolvable peak)", best=fit)
    return fit


# ---------------------------------------------------------------------------
# droplet-rate tracking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateTrack:
    times: np.ndarray
    f_hat: np.ndarray
    valid: np.ndarray


def _parabolic_peak(mags: np.ndarray, k: np.ndarray) -> np.ndarray:
    # three-point parabola on log magnitude; returns fractional bin offset
    rows = np.arange(mags.shape[0])
    lo = np.log(np.maximum(mags[rows, k - 1], 1e-300))
    c = np.log(np.maximum(mags[rows, k], 1e-300))
    hi = np.log(np.maximum(mags[rows, k + 1], 1e-300))
    den = lo - 2.0 * c + hi
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(den < 0, 0.5 * (lo - hi) / den, 0.0)
    return np.clip(d, -0.5, 0.5)


def track_droplet_rate(ts: TimeSeries, delta_t: float, search_band: BandSpec, taper_name: str = DEFAULT_TAPER,
                       min_snr: float = 3.0) -> RateTrack:
    """Per-window droplet-rate estimate: band argmax refined by a 3-point parabola."""
    spectra = WindowedSpectra(ts, delta_t, taper_name)
    search_band.check(spectra.nyquist)
    sl = spectra.band_slice(search_band)
    lo = max(sl.start, 1)
    hi = min(sl.stop, spectra.freqs.size - 1)
    n_bins = hi - lo
    f_hat = np.empty(spectra.n_windows)
    valid = np.empty(spectra.n_windows, dtype=bool)
    for b in spectra:
        sub = b.magnitudes[:, lo:hi]
        k = lo + np.argmax(sub, axis=1)
        k = np.clip(k, 1, spectra.freqs.size - 2)
        d = _parabolic_peak(b.magnitudes, k)
        rows = slice(b.first_index, b.first_index + sub.shape[0])
        f_hat[rows] = (k + d) * spectra.resolution
        amp = band_amplitudes(b.magnitudes, slice(lo, hi), spectra.enbw_bins)
        floor = noise_floor(b.magnitudes, n_bins, spectra.enbw_bins)
        valid[rows] = amp >= min_snr * floor
    return RateTrack(spectra.t_centers(), f_hat, valid)


# ---------------------------------------------------------------------------
# spectrogram
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrogram:
    """Band-restricted magnitudes of consecutive, gap-free windows."""

    t_centers: np.ndarray
    delta_t: float
    bands: tuple[BandSpec, ...]
    freqs: tuple[np.ndarray, ...]  # per band
    magnitudes: tuple[np.ndarray, ...]  # per band, (n_windows, n_bins)
    enbw_bins: float
    noise_power: np.ndarray  # per window, mean |mag|^2 of the noise (median estimate)

    def band_index(self, band: BandSpec) -> int:
        for i, b in enumerate(self.bands):
            if b == band:
                return i
        raise KeyError(f"band {band} not in spectrogram")

    def band_amplitudes(self, band: BandSpec) -> np.ndarray:
        i = self.band_index(band)
        return np.sqrt(np.sum(self.magnitudes[i] ** 2, axis=1) / self.enbw_bins)

    def band_noise_floor(self, band: BandSpec) -> np.ndarray:
        n_bins = self.magnitudes[self.band_index(band)].shape[1]
        return np.sqrt(n_bins * self.noise_power / self.enbw_bins)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_center", "frequency", "magnitude"])
            for k, t in enumerate(self.t_centers):
                for f, m in zip(self.freqs, self.magnitudes):
                    for fj, mj in zip(f, m[k]):
                        w.writerow([repr(float(t)), repr(float(fj)), repr(float(mj))])


def spectrogram(ts: TimeSeries, delta_t: float, bands: Sequence[BandSpec], taper_name: str = DEFAULT_TAPER) -> Spectrogram:
    spectra = WindowedSpectra(ts, delta_t, taper_name)
    for b in bands:
        b.check(spectra.nyquist)
    slices = [spectra.band_slice(b) for b in bands]
    mags = [np.empty((spectra.n_windows, sl.stop - sl.start)) for sl in slices]
    noise = np.empty(spectra.n_windows)
    for batch in spectra:
        rows = slice(batch.first_index, batch.first_index + batch.magnitudes.shape[0])
        for m, sl in zip(mags, slices):
            m[rows] = batch.magnitudes[:, sl]
        noise[rows] = np.median(batch.magnitudes[:, 1:] ** 2, axis=1) / LN2
    return Spectrogram(spectra.t_centers(), spectra.delta_t, tuple(bands),
                       tuple(spectra.freqs[sl] for sl in slices), tuple(mags), spectra.enbw_bins, noise)
