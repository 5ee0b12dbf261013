"""Synthetic photoluminescence traces from the double-modulation signal model.

    S(t) = [m0 + g0 l(t) P(theta_D(t))] [1 - C W(2 pi f_MW t + phi)] L(t) B(t)
           + b0 exp(-t / tau) + shot + white

``P`` is the droplet profile, ``theta_D`` integrates the (optionally jittered)
droplet rate, ``l`` is the loading factor of the droplet currently in the
spot, ``L`` the slow laser drift and ``B`` the optional Brownian fluctuation.
The laser and Brownian factors act on the nanodiamond signal only; the
background is laser-independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels, rng
from .brownian import KineticsParams, fluorescence_trace, simulate
from .core import (ConfigError, ExperimentConfig, Profile, TimeSeries, Waveform,
                   validate)

JITTER_GRID = 1e-3  # s, control-point spacing of the droplet-rate random walk
# Hz/sqrt(s); gives a ~1 Hz Lorentzian linewidth of the droplet line over 15 s
DEFAULT_RATE_JITTER = 0.3
PROFILE_TABLE_MIN = 1 << 14


@dataclass(frozen=True)
class GroundTruth:
    true_contrast: float
    f_D_nominal: float
    grid_h: float
    f_D_dev: np.ndarray  # rate deviation at each grid node, Hz
    cycles_dev: np.ndarray  # integrated deviation at each node, cycles
    per_droplet_loading: np.ndarray
    n_droplets: int

    def cycles_at(self, t) -> np.ndarray:
        """Droplet phase in cycles at time(s) ``t``."""
        t = np.asarray(t, dtype=np.float64)
        h = self.grid_h
        j = np.minimum((t / h).astype(np.int64), self.f_D_dev.size - 2)
        s = t - j * h
        fa, fb = self.f_D_dev[j], self.f_D_dev[j + 1]
        return self.f_D_nominal * t + self.cycles_dev[j] + fa * s + (fb - fa) * s * s / (2 * h)

    def mean_rate(self, t0, t1) -> np.ndarray:
        """Average droplet rate over [t0, t1]."""
        return (self.cycles_at(t1) - self.cycles_at(t0)) / (np.asarray(t1) - np.asarray(t0))

    @property
    def f_D_path(self) -> tuple[np.ndarray, np.ndarray]:
        t = self.grid_h * np.arange(self.f_D_dev.size)
        return t, self.f_D_nominal + self.f_D_dev

    def summary(self) -> dict:
        _, f = self.f_D_path
        return {
            "true_contrast": self.true_contrast,
            "f_D_nominal": self.f_D_nominal,
            "f_D_mean": float(f.mean()),
            "f_D_min": float(f.min()),
            "f_D_max": float(f.max()),
            "n_droplets": self.n_droplets,
            "loading_mean": float(self.per_droplet_loading.mean()),
            "loading_std": float(self.per_droplet_loading.std()),
        }


def _fold(u: np.ndarray, half: float) -> np.ndarray:
    # reflect an unconstrained walk into [-half, half]; equals stepwise mirroring
    v = np.mod(u + half, 4.0 * half)
    v = np.where(v > 2.0 * half, 4.0 * half - v, v)
    return v - half


def _rate_path(config: ExperimentConfig, duration: float):
    sigma = config.droplets.rate_jitter_sigma
    if sigma == 0.0:
        h = duration + 1.0
        return h, np.zeros(3), np.zeros(3)
    h = JITTER_GRID
    n_nodes = int(math.ceil(duration / h)) + 2
    z = rng.stream(config.acquisition.rng_seed, rng.JITTER).standard_normal(n_nodes - 1)
    u = np.concatenate(([0.0], np.cumsum(sigma * math.sqrt(h) * z)))
    # bounded walk: reflected at +/- 3 sigma (sigma taken over 1 s)
    fdev = _fold(u, 3.0 * sigma)
    dev = np.concatenate(([0.0], np.cumsum(0.5 * h * (fdev[:-1] + fdev[1:]))))
    return h, dev, fdev


def _harmonic_table(coeffs: np.ndarray, size: int) -> np.ndarray:
    """Tabulate sum_k coeffs[k-1] cos(2 pi k x) on ``size`` points plus a wrap point."""
    spec = np.zeros(size // 2 + 1, dtype=np.complex128)
    spec[1:coeffs.size + 1] = coeffs * size / 2.0
    tab = np.fft.irfft(spec, n=size)
    return np.append(tab, tab[0])


def _table_size(n_harm: int) -> int:
    return max(PROFILE_TABLE_MIN, 1 << int(math.ceil(math.log2(8 * n_harm + 1))))


def profile_coefficients(profile: Profile, n_harm: int, duty: float = 0.5, edge_fraction: float = 0.25) -> np.ndarray:
    """Cosine-series amplitudes of the zero-mean droplet profile (peak-to-peak about 2).

    Square: ``2 (rect_duty - duty)`` centred on the droplet.
    RaisedCosine: 50% duty pulse whose edges are half-cosine ramps occupying
    ``edge_fraction`` of the period; 0 reduces to the square, 1 to a pure cosine.
    """
    k = np.arange(1, n_harm + 1)
    profile = Profile(profile)
    if profile is Profile.SINUSOID:
        c = np.zeros(n_harm)
        c[0] = 1.0
        return c
    if profile is Profile.SQUARE or edge_fraction == 0.0:
        d = duty if profile is Profile.SQUARE else 0.5
        return 2.0 * 2.0 / (k * np.pi) * np.sin(k * np.pi * d)
    # dense numerical transform; the shape is C1 so aliasing is negligible
    n = 1 << 18
    u = (np.arange(n) / n + 0.5) % 1.0 - 0.5
    a = np.abs(u)
    lo, hi = (1.0 - edge_fraction) / 4.0, (1.0 + edge_fraction) / 4.0
    shape = np.where(a <= lo, 1.0, np.where(a >= hi, 0.0,
                     0.5 * (1.0 + np.cos(np.pi * (a - lo) / (hi - lo)))))
    spec = np.fft.rfft(2.0 * (shape - shape.mean())) * 2.0 / n
    return spec.real[1:n_harm + 1]


def _square_am_coefficients(n_harm: int) -> np.ndarray:
    k = np.arange(1, n_harm + 1)
    # +/-1 square wave, 50% duty, centred on the cosine maximum
    return np.where(k % 2 == 1, 4.0 / (k * np.pi) * np.sin(k * np.pi / 2.0), 0.0)


def brownian_modulation(config: ExperimentConfig, duration: float) -> Optional[TimeSeries]:
    br = config.brownian
    if br.depth == 0.0:
        return None
    params = KineticsParams(br.diffusion_coeff, br.droplet_radius, br.n_particles,
                            br.dt_step, duration + 2.0 * br.dt_step, br.heavy_tail_alpha)
    ens = simulate(params, rng.derive_seed(config.acquisition.rng_seed, rng.BROWNIAN))
    return fluorescence_trace(ens, br.beam_radius)


def synthesize(config: ExperimentConfig) -> tuple[TimeSeries, GroundTruth]:
    """Generate the PL trace for ``config``; bit-identical for identical configs."""
    report = validate(config)
    if not report.ok:
        raise ConfigError(report)
    acq, dr, mw, nz = config.acquisition, config.droplets, config.mw, config.noise
    n = acq.n_samples
    if n < 1:
        raise ConfigError(report)
    dt = acq.dt
    duration = n * dt
    fs = acq.sample_rate

    h, dev, fdev = _rate_path(config, duration)
    path = GroundTruth(mw.contrast, dr.f_D, h, fdev, dev, np.empty(0), 0)
    total_cycles = float(path.cycles_at(duration))
    n_loading = int(math.floor(total_cycles + 0.5)) + 2
    if dr.per_droplet_sigma > 0:
        z = rng.stream(acq.rng_seed, rng.LOADING).standard_normal(n_loading)
        loading = 1.0 + dr.per_droplet_sigma * np.clip(z, -4.0, 4.0)
    else:
        loading = np.ones(n_loading)

    profile = Profile(dr.profile)
    if profile is Profile.SINUSOID:
        prof_kind, prof_table = 0, np.zeros(2)
    else:
        n_harm = max(1, int((fs / 4.0) // dr.f_D))
        coeffs = profile_coefficients(profile, n_harm, dr.duty, dr.edge_fraction)
        prof_kind, prof_table = 1, _harmonic_table(coeffs, _table_size(n_harm))

    if Waveform(mw.waveform) is Waveform.COSINE:
        wave_kind, wave_table = 0, np.zeros(2)
    else:
        n_harm = max(1, int((fs / 4.0) // mw.f_MW))
        wave_kind, wave_table = 1, _harmonic_table(_square_am_coefficients(n_harm), _table_size(n_harm))

    br_ts = brownian_modulation(config, duration)
    br_trace = np.ascontiguousarray(br_ts.samples) if br_ts is not None else np.ones(2)

    p = np.zeros(_kernels.N_PARAMS)
    p[_kernels.P_DT] = dt
    p[_kernels.P_F0] = dr.f_D
    p[_kernels.P_GRID_H] = h
    p[_kernels.P_M0] = dr.m0
    p[_kernels.P_G0] = dr.g0
    p[_kernels.P_C] = mw.contrast
    p[_kernels.P_FMW] = mw.f_MW
    p[_kernels.P_PHI_CYC] = mw.phase / (2.0 * math.pi)
    p[_kernels.P_LASER_FRAC] = nz.laser_drift_fraction
    p[_kernels.P_LASER_PERIOD] = nz.laser_drift_period if nz.laser_drift_period > 0 else 1.0
    p[_kernels.P_BR_DEPTH] = config.brownian.depth
    p[_kernels.P_BR_DT] = br_ts.dt if br_ts is not None else 1.0
    p[_kernels.P_B0] = nz.background_b0
    p[_kernels.P_BG_TAU] = nz.background_decay_tau if nz.background_decay_tau > 0 else 1.0
    p[_kernels.P_SHOT] = nz.shot_scale
    p[_kernels.P_WHITE] = nz.background_white_sigma

    out = np.empty(n)
    empty = np.empty(0)
    for c, k0 in enumerate(range(0, n, rng.CHUNK)):
        m = min(rng.CHUNK, n - k0)
        z_shot = rng.stream(acq.rng_seed, rng.NOISE, c, 0).standard_normal(m) if nz.shot_scale else empty
        z_white = rng.stream(acq.rng_seed, rng.NOISE, c, 1).standard_normal(m) if nz.background_white_sigma else empty
        _kernels.synth_chunk(out[k0:k0 + m], k0, p, prof_kind, prof_table, wave_kind, wave_table,
                             dev, fdev, loading, br_trace, z_shot, z_white)

    truth = replace(path, per_droplet_loading=loading, n_droplets=int(round(total_cycles)))
    return TimeSeries(0.0, dt, out), truth


def inject_brownian_noise(ts: TimeSeries, trace: TimeSeries, depth: float) -> TimeSeries:
    """Multiply the nanodiamond signal ``ts`` by ``1 - depth + depth * trace``.

    ``ts`` must hold only the nanodiamond-dependent part (background-free and
    noiseless); :func:`synthesize` applies the same factor internally before
    adding background and noise. ``trace`` must be mean-normalized, share the
    sample rate and cover ``ts``.
    """
    if not math.isclose(ts.dt, trace.dt, rel_tol=1e-12):
        raise ValueError("sample-rate mismatch between trace and fluctuation trace")
    if len(trace) < len(ts):
        raise ValueError("fluctuation trace is shorter than the signal")
    if depth == 0.0:
        return ts
    factor = 1.0 - depth + depth * trace.samples[:len(ts)]
    return TimeSeries(ts.t_start, ts.dt, ts.samples * factor)
