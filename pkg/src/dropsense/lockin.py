"""Software single-reference lock-in and the ratiometric (R / PL) contrast baseline.

Mixer convention: the input is multiplied by unit cos/sin at the reference
frequency, so ``A cos(2 pi f_ref t + phi)`` settles to ``R = A / 2``. Each arm
is low-passed by ``filter_order`` cascaded one-pole stages with
``alpha = 1 - exp(-dt / time_constant)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import gamma

from . import _kernels
from .core import ContrastSeries, EstimatorId, TimeSeries

SETTLE_TIME_CONSTANTS = 5.0  # minimum
SETTLE_TOLERANCE = 1e-4
CHUNK = 1 << 20


@dataclass(frozen=True)
class DemodConfig:
    reference_freq: float = 1000.0
    time_constant: float = 0.03
    filter_order: int = 2

    def __post_init__(self):
        if self.time_constant <= 0:
            raise ValueError("time_constant must be > 0")
        if self.filter_order not in (1, 2, 3, 4):
            raise ValueError("filter_order must be in 1..4")

    def alpha(self, dt: float) -> float:
        return -math.expm1(-dt / self.time_constant)

    def settle_time(self) -> float:
        # step response of n cascaded poles is the gamma(n) CDF in units of tau
        n_tau = max(SETTLE_TIME_CONSTANTS, float(gamma.isf(SETTLE_TOLERANCE, self.filter_order)))
        return n_tau * self.time_constant

    def settle_samples(self, dt: float) -> int:
        return int(math.ceil(self.settle_time() / dt))


def stage_response(cfg: DemodConfig, f: float, dt: float) -> float:
    """|H| of the discrete filter chain at frequency ``f``."""
    a = cfg.alpha(dt)
    z = np.exp(-2j * np.pi * f * dt)
    return float(abs(a / (1.0 - (1.0 - a) * z)) ** cfg.filter_order)


def _mix(x: np.ndarray, k0: int, dt: float, t_start: float, f_ref: float):
    t = t_start + (k0 + np.arange(x.size)) * dt
    cyc = f_ref * t
    ph = 2.0 * np.pi * (cyc - np.floor(cyc))
    return x * np.cos(ph), x * np.sin(ph)


def demodulate_iq(ts: TimeSeries, cfg: DemodConfig) -> tuple[np.ndarray, np.ndarray]:
    """Low-passed in-phase and quadrature outputs (linear in the input)."""
    if cfg.reference_freq >= 0.5 / ts.dt:
        raise ValueError("reference_freq must be below Nyquist")
    x = ts.samples
    a = cfg.alpha(ts.dt)
    si, sq = np.zeros(cfg.filter_order), np.zeros(cfg.filter_order)
    I, Q = np.empty(x.size), np.empty(x.size)
    for k0 in range(0, x.size, CHUNK):
        xi, xq = _mix(x[k0:k0 + CHUNK], k0, ts.dt, ts.t_start, cfg.reference_freq)
        I[k0:k0 + CHUNK] = _kernels.onepole_cascade(xi, a, cfg.filter_order, si)
        Q[k0:k0 + CHUNK] = _kernels.onepole_cascade(xq, a, cfg.filter_order, sq)
    return I, Q


def demodulate(ts: TimeSeries, cfg: DemodConfig) -> TimeSeries:
    """R = sqrt(I^2 + Q^2). The first ``settle_samples`` outputs are still settling."""
    I, Q = demodulate_iq(ts, cfg)
    return TimeSeries(ts.t_start, ts.dt, np.hypot(I, Q))


def ratiometric_contrast(ts: TimeSeries, cfg: DemodConfig, pl_smooth_tau: float = 0.1,
                         sample_every: float = 0.1, pl_floor: float = 1e-9) -> ContrastSeries:
    """Conventional contrast ``2 R / <PL>`` sampled every ``sample_every`` seconds.

    ``<PL>`` is the trace through the same filter order with time constant
    ``pl_smooth_tau``. The factor 2 undoes the mixer gain. Output starts after
    both filters have settled; points where ``<PL>`` falls below
    ``pl_floor`` times the trace mean are flagged invalid.
    """
    if cfg.reference_freq >= 0.5 / ts.dt:
        raise ValueError("reference_freq must be below Nyquist")
    x = ts.samples
    dt = ts.dt
    pl_cfg = DemodConfig(0.0, pl_smooth_tau, cfg.filter_order)
    a, a_pl = cfg.alpha(dt), pl_cfg.alpha(dt)
    order = cfg.filter_order
    si, sq, sp = np.zeros(order), np.zeros(order), np.zeros(order)
    step = max(1, int(round(sample_every / dt)))
    settle = max(cfg.settle_samples(dt), pl_cfg.settle_samples(dt))
    first = int(math.ceil(settle / step)) * step
    floor = pl_floor * abs(float(x.mean()))

    times, vals, ok = [], [], []
    for k0 in range(0, x.size, CHUNK):
        seg = x[k0:k0 + CHUNK]
        xi, xq = _mix(seg, k0, dt, ts.t_start, cfg.reference_freq)
        fi = _kernels.onepole_cascade(xi, a, order, si)
        fq = _kernels.onepole_cascade(xq, a, order, sq)
        fp = _kernels.onepole_cascade(seg, a_pl, order, sp)
        k1 = k0 + seg.size
        start = max(first, int(math.ceil(k0 / step)) * step)
        idx = np.arange(start, k1, step) - k0
        if idx.size == 0:
            continue
        r = 2.0 * np.hypot(fi[idx], fq[idx])
        pl = fp[idx]
        good = pl > floor
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(good, r / pl, np.nan)
        times.append(ts.t_start + (idx + k0) * dt)
        vals.append(v)
        ok.append(good)
    if not times:
        raise ValueError("trace shorter than the settling time")
    return ContrastSeries(np.concatenate(times), np.concatenate(vals), np.concatenate(ok),
                          EstimatorId.CONVENTIONAL)
