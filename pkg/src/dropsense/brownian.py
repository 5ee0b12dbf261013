"""Intra-droplet particle motion: 2-D reflected random walks in a disc.

Positions are in micrometres, times in seconds. Every particle draws from its
own counter-based stream (Philox keyed by ``(seed, particle index)``), so an
ensemble is reproducible regardless of how the work is split up.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .core import TimeSeries
from .rng import particle_stream


class KineticsError(ValueError):
    pass


@dataclass(frozen=True)
class KineticsParams:
    diffusion_coeff: float = 4.0  # um^2/s; Stokes-Einstein for 100 nm spheres in water
    droplet_radius: float = 25.0  # um
    n_particles: int = 200
    dt_step: float = 0.1  # s
    duration: float = 30.0  # s
    heavy_tail_alpha: Optional[float] = None

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt_step))

    def check(self) -> None:
        if self.diffusion_coeff < 0:
            raise KineticsError("diffusion_coeff must be >= 0")
        if self.droplet_radius <= 0 or self.dt_step <= 0 or self.duration <= 0:
            raise KineticsError("droplet_radius, dt_step and duration must be > 0")
        if self.n_particles < 1:
            raise KineticsError("n_particles must be >= 1")
        if self.heavy_tail_alpha is not None and not 1.0 < self.heavy_tail_alpha <= 2.0:
            raise KineticsError("heavy_tail_alpha must be in (1, 2]")
        if math.sqrt(4.0 * self.diffusion_coeff * self.dt_step) > self.droplet_radius:
            raise KineticsError("time step too coarse: rms step exceeds droplet_radius")


@dataclass(frozen=True)
class TrajectoryEnsemble:
    positions: np.ndarray  # (n_steps + 1, n_particles, 2), um
    dt_step: float
    droplet_radius: float

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt_step * np.arange(self.positions.shape[0])

    def to_csv(self, path) -> None:
        """Write ``particle_id,t,x_um,y_um`` rows, particle-major."""
        t = self.times
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["particle_id", "t", "x_um", "y_um"])
            for q in range(self.n_particles):
                xy = self.positions[:, q, :]
                for k in range(t.size):
                    w.writerow([q, repr(float(t[k])), repr(float(xy[k, 0])), repr(float(xy[k, 1]))])


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo_um", "bin_hi_um", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def _stable_steps(rng: np.random.Generator, alpha: float, scale: float, shape) -> np.ndarray:
    # Chambers-Mallows-Stuck, symmetric case; alpha = 2 gives N(0, 2 scale^2)
    v = rng.uniform(-np.pi / 2, np.pi / 2, size=shape)
    w = rng.standard_exponential(size=shape)
    x = np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha) * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    return scale * x


def simulate(params: KineticsParams, seed: int = 0) -> TrajectoryEnsemble:
    """Simulate ``n_particles`` independent reflected walks in a disc.

    Gaussian steps have per-axis variance ``2 D dt``. With ``heavy_tail_alpha``
    set, per-axis steps are symmetric alpha-stable with the same scale and each
    step vector is truncated at the droplet diameter.
    """
    params.check()
    n, n_steps = params.n_particles, params.n_steps
    R = params.droplet_radius
    pos0 = np.empty((n, 2))
    steps = np.empty((n_steps, n, 2))
    sigma = math.sqrt(2.0 * params.diffusion_coeff * params.dt_step)
    for q in range(n):
        rng = particle_stream(seed, q)
        r = R * math.sqrt(rng.uniform())
        a = rng.uniform(0.0, 2.0 * np.pi)
        pos0[q] = (r * math.cos(a), r * math.sin(a))
        if params.heavy_tail_alpha is None or params.heavy_tail_alpha == 2.0:
            steps[:, q, :] = sigma * rng.standard_normal((n_steps, 2))
        else:
            steps[:, q, :] = _stable_steps(rng, params.heavy_tail_alpha, sigma / math.sqrt(2.0), (n_steps, 2))
    if params.heavy_tail_alpha is not None:
        length = np.hypot(steps[..., 0], steps[..., 1])
        too_long = length > 2.0 * R
        if np.any(too_long):
            steps[too_long] *= (2.0 * R / length[too_long])[:, None]
    if params.diffusion_coeff == 0:
        steps[:] = 0.0
    positions = _kernels.reflect_walk(pos0, steps, R)
    return TrajectoryEnsemble(positions, params.dt_step, R)


def displacements(ensemble: TrajectoryEnsemble, lag: float) -> np.ndarray:
    """|r(t + lag) - r(t)| pooled over particles and all start times."""
    m = int(round(lag / ensemble.dt_step))
    if m < 1 or m >= ensemble.positions.shape[0]:
        raise ValueError("lag must be between one step and the trajectory duration")
    d = ensemble.positions[m:] - ensemble.positions[:-m]
    return np.hypot(d[..., 0], d[..., 1]).ravel()


def displacement_histogram(ensemble: TrajectoryEnsemble, lag: float, n_bins: int = 30) -> Histogram:
    d = displacements(ensemble, lag)
    hi = float(d.max())
    counts, edges = np.histogram(d, bins=n_bins, range=(0.0, hi if hi > 0 else 1.0))
    return Histogram(edges, counts)


def net_displacements(ensemble: TrajectoryEnsemble) -> np.ndarray:
    """Start-to-end displacement of each trajectory."""
    d = ensemble.positions[-1] - ensemble.positions[0]
    return np.hypot(d[:, 0], d[:, 1])


def mean_squared_displacement(ensemble: TrajectoryEnsemble, max_lag_steps: int) -> tuple[np.ndarray, np.ndarray]:
    lags = np.arange(1, max_lag_steps + 1)
    msd = np.empty(lags.size)
    p = ensemble.positions
    for i, m in enumerate(lags):
        d = p[m:] - p[:-m]
        msd[i] = np.mean(d[..., 0] ** 2 + d[..., 1] ** 2)
    return lags * ensemble.dt_step, msd


def fit_diffusion(ensemble: TrajectoryEnsemble, max_lag: float) -> float:
    """Diffusion coefficient from a through-origin fit of MSD = 4 D t."""
    t, msd = mean_squared_displacement(ensemble, int(round(max_lag / ensemble.dt_step)))
    return float(np.dot(t, msd) / np.dot(t, t) / 4.0)


def fluorescence_trace(ensemble: TrajectoryEnsemble, beam_radius: float, sample_rate: Optional[float] = None) -> TimeSeries:
    """Collected PL of the ensemble under a Gaussian beam centred on the droplet.

    Each particle contributes ``exp(-|r|^2 / (2 w^2))``; the sum is linearly
    resampled to ``sample_rate`` (default: one sample per step) and divided by
    its mean.
    """
    if beam_radius > ensemble.droplet_radius:
        raise ValueError("beam_radius must not exceed droplet_radius")
    p = ensemble.positions
    r2 = p[..., 0] ** 2 + p[..., 1] ** 2
    w = np.exp(-r2 / (2.0 * beam_radius**2)).sum(axis=1)
    if sample_rate is None or sample_rate == 1.0 / ensemble.dt_step:
        y, dt = w, ensemble.dt_step
    else:
        t_src = ensemble.times
        dt = 1.0 / sample_rate
        t_new = dt * np.arange(int(math.floor(t_src[-1] / dt)) + 1)
        y = np.interp(t_new, t_src, w)
    return TimeSeries(0.0, dt, y / y.mean())
