"""Domain types shared by every module: configuration, traces, spectra, contrast series.

All types are frozen dataclasses. Array-valued fields are stored as read-only
numpy arrays so instances can be shared freely.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

MAX_U64 = 2**64 - 1
# Largest sample count addressable by a 64-bit signed index.
MAX_SAMPLES = 2**63 - 1


class Profile(str, enum.Enum):
    SINUSOID = "sinusoid"
    SQUARE = "square"
    RAISED_COSINE = "raised_cosine"


class Waveform(str, enum.Enum):
    COSINE = "cosine"
    SQUARE_AM = "square_am"


class EstimatorId(str, enum.Enum):
    PAPER_MAIN = "paper_main"
    SI_VARIANT = "si_variant"
    EXACT_RECOVERY = "exact_recovery"
    CONVENTIONAL = "conventional"


def _readonly(a, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(a, dtype=dtype).view()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AcquisitionConfig:
    sample_rate: float = 50_000.0
    duration: float = 15.0
    rng_seed: int = 0

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass(frozen=True)
class DropletTrain:
    f_D: float = 29.0
    profile: Profile = Profile.SINUSOID
    duty: float = 0.5
    edge_fraction: float = 0.25
    g0: float = 1.0
    m0: float = 1.0
    rate_jitter_sigma: float = 0.0
    per_droplet_sigma: float = 0.0


@dataclass(frozen=True)
class MwModulation:
    f_MW: float = 1000.0
    phase: float = 0.0
    contrast: float = 0.056
    waveform: Waveform = Waveform.COSINE


@dataclass(frozen=True)
class NoiseBudget:
    shot_scale: float = 0.0
    background_b0: float = 0.0
    background_decay_tau: float = 60.0
    background_white_sigma: float = 0.0
    laser_drift_fraction: float = 0.0
    laser_drift_period: float = 600.0

    @property
    def is_silent(self) -> bool:
        return self.shot_scale == 0.0 and self.background_white_sigma == 0.0


@dataclass(frozen=True)
class BrownianNoise:
    """Optional multiplicative PL fluctuation driven by a simulated particle ensemble.

    ``depth`` = 0 disables it. The remaining fields parameterize the ensemble
    (see :class:`dropsense.brownian.KineticsParams`).
    """

    depth: float = 0.0
    diffusion_coeff: float = 4.0
    droplet_radius: float = 25.0
    beam_radius: float = 10.0
    n_particles: int = 100
    dt_step: float = 0.05
    heavy_tail_alpha: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    droplets: DropletTrain = field(default_factory=DropletTrain)
    mw: MwModulation = field(default_factory=MwModulation)
    noise: NoiseBudget = field(default_factory=NoiseBudget)
    brownian: BrownianNoise = field(default_factory=BrownianNoise)

    def with_(self, **sections) -> "ExperimentConfig":
        """Return a copy with some fields of some sections replaced.

        ``cfg.with_(mw={"contrast": 0.02}, acquisition={"duration": 60})``
        """
        updates = {}
        for name, changes in sections.items():
            updates[name] = replace(getattr(self, name), **changes)
        return replace(self, **updates)


SECTIONS = ("acquisition", "droplets", "mw", "noise", "brownian")


@dataclass(frozen=True)
class Issue:
    level: str  # "error" | "warning"
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.key}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def errors(self) -> list[Issue]:
        return [i for i in self.issues if i.level == "error"]

    @property
    def warnings(self) -> list[Issue]:
        return [i for i in self.issues if i.level == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self) -> int:
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def __str__(self) -> str:
        return "\n".join(str(i) for i in self.issues) or "valid"


class ConfigError(ValueError):
    """Raised when an operation receives a configuration that fails validation."""

    def __init__(self, report: ValidationReport):
        super().__init__(str(report))
        self.report = report


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate(config: ExperimentConfig) -> ValidationReport:
    """Check every type invariant of ``config``; never raises."""
    issues: list[Issue] = []

    def err(key, msg):
        issues.append(Issue("error", key, msg))

    def warn(key, msg):
        issues.append(Issue("warning", key, msg))

    for section in SECTIONS:
        obj = getattr(config, section)
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                err(f"{section}.{f.name}", "must be finite")
    if issues:
        return ValidationReport(tuple(issues))

    acq, dr, mw, nz, br = config.acquisition, config.droplets, config.mw, config.noise, config.brownian

    if acq.sample_rate <= 0:
        err("acquisition.sample_rate", "must be > 0")
    if acq.duration <= 0:
        err("acquisition.duration", "must be > 0")
    if not (isinstance(acq.rng_seed, int) and 0 <= acq.rng_seed <= MAX_U64):
        err("acquisition.rng_seed", "must be an unsigned 64-bit integer")
    if acq.sample_rate > 0 and acq.duration > 0 and acq.duration * acq.sample_rate > MAX_SAMPLES:
        err("acquisition.duration", "duration x sample_rate exceeds the addressable index range")

    if dr.f_D <= 0:
        err("droplets.f_D", "must be > 0")
    elif not 1.0 <= dr.f_D <= 1000.0:
        warn("droplets.f_D", f"{dr.f_D} Hz is outside the demonstrated 1-1000 Hz range")
    try:
        Profile(dr.profile)
    except ValueError:
        err("droplets.profile", f"unknown profile {dr.profile!r}")
    if not 0.0 < dr.duty < 1.0:
        err("droplets.duty", "must be in (0, 1)")
    if not 0.0 <= dr.edge_fraction <= 1.0:
        err("droplets.edge_fraction", "must be in [0, 1]")
    if dr.g0 < 0:
        err("droplets.g0", "must be >= 0")
    if dr.m0 < 0:
        err("droplets.m0", "must be >= 0")
    if dr.rate_jitter_sigma < 0:
        err("droplets.rate_jitter_sigma", "must be >= 0")
    if not 0.0 <= dr.per_droplet_sigma <= 0.1:
        err("droplets.per_droplet_sigma", "must be in [0, 0.1]")

    if mw.f_MW <= 0:
        err("mw.f_MW", "must be > 0")
    if not 0.0 <= mw.contrast <= 1.0:
        err("mw.contrast", "must be in [0, 1]")
    elif mw.contrast > 0.2:
        warn("mw.contrast", f"{mw.contrast} exceeds the usual 0-0.2 range")
    try:
        Waveform(mw.waveform)
    except ValueError:
        err("mw.waveform", f"unknown waveform {mw.waveform!r}")
    if mw.f_MW > 0 and dr.f_D > 0 and mw.f_MW < 10.0 * dr.f_D:
        err("mw.f_MW", "f_MW must be >= 10 x f_D")
    if mw.f_MW > 0 and acq.sample_rate > 0 and acq.sample_rate < 10.0 * mw.f_MW:
        err("acquisition.sample_rate", "sample_rate must be >= 10 x f_MW")

    for name in ("shot_scale", "background_b0", "background_decay_tau",
                 "background_white_sigma", "laser_drift_fraction", "laser_drift_period"):
        if getattr(nz, name) < 0:
            err(f"noise.{name}", "must be >= 0")
    if nz.background_b0 > 0 and nz.background_decay_tau <= 0:
        err("noise.background_decay_tau", "must be > 0 when background_b0 > 0")
    if nz.laser_drift_fraction > 0 and nz.laser_drift_period <= 0:
        err("noise.laser_drift_period", "must be > 0 when laser drift is enabled")
    if nz.laser_drift_fraction >= 2.0:
        err("noise.laser_drift_fraction", "peak-to-peak drift must be < 2")

    if not 0.0 <= br.depth <= 1.0:
        err("brownian.depth", "must be in [0, 1]")
    if br.depth > 0:
        if br.diffusion_coeff < 0:
            err("brownian.diffusion_coeff", "must be >= 0")
        if br.droplet_radius <= 0:
            err("brownian.droplet_radius", "must be > 0")
        if not 0 < br.beam_radius <= br.droplet_radius:
            err("brownian.beam_radius", "must be in (0, droplet_radius]")
        if br.n_particles < 1:
            err("brownian.n_particles", "must be >= 1")
        if br.dt_step <= 0:
            err("brownian.dt_step", "must be > 0")
        if br.heavy_tail_alpha is not None and not 1.0 < br.heavy_tail_alpha <= 2.0:
            err("brownian.heavy_tail_alpha", "must be in (1, 2]")

    return ValidationReport(tuple(issues))


@dataclass(frozen=True)
class TimeSeries:
    t_start: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if s.ndim != 1 or s.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.isfinite(s).all():
            raise ValueError("samples must be finite")
        # read-only view, no copy: traces can be ~1e8 samples
        s = s.view()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.samples.size)

    def __len__(self) -> int:
        return self.samples.size

    def scaled(self, alpha: float) -> "TimeSeries":
        return TimeSeries(self.t_start, self.dt, self.samples * alpha)


@dataclass(frozen=True)
class SpectrumWindow:
    """Single-sided amplitude spectrum of one analysis window.

    ``magnitudes[k]`` is scaled so that an in-bin cosine ``A cos(2 pi f t)``
    reads ``A`` at its bin. ``enbw_bins`` is the equivalent noise bandwidth of
    the taper in bins; band energies are divided by it to recover amplitudes.
    """

    window_index: int
    t_center: float
    delta_t: float
    freqs: np.ndarray
    magnitudes: np.ndarray
    mean: float
    n_samples: int
    coherent_sum: float  # sum of taper weights
    enbw_bins: float
    taper: str = "hann"

    @property
    def resolution(self) -> float:
        return 1.0 / self.delta_t

    @property
    def nyquist(self) -> float:
        return 0.5 * self.n_samples / self.delta_t

    def two_sided_energy(self) -> float:
        """Energy of the tapered samples, sum(y^2), rebuilt from the single-sided magnitudes (Parseval)."""
        x = self.magnitudes * self.coherent_sum
        e = x[0] ** 2
        if self.n_samples % 2 == 0:
            e += x[-1] ** 2 + 2.0 * np.sum((x[1:-1] / 2.0) ** 2)
        else:
            e += 2.0 * np.sum((x[1:] / 2.0) ** 2)
        return float(e) / self.n_samples


@dataclass(frozen=True)
class ContrastSeries:
    times: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    estimator_id: EstimatorId
    uncalibrated: bool = False

    def __post_init__(self):
        t = _readonly(self.times)
        v = _readonly(self.values)
        ok = _readonly(self.valid if self.valid is not None else np.ones(v.size), dtype=bool)
        if not (t.shape == v.shape == ok.shape):
            raise ValueError("times, values and valid must have equal length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", ok)
        object.__setattr__(self, "estimator_id", EstimatorId(self.estimator_id))

    @property
    def valid_values(self) -> np.ndarray:
        return self.values[self.valid & np.isfinite(self.values)]

    @property
    def n_valid(self) -> int:
        return int(self.valid_values.size)

    @property
    def mean(self) -> float:
        v = self.valid_values
        return float(v.mean()) if v.size else float("nan")

    @property
    def std(self) -> float:
        v = self.valid_values
        return float(v.std(ddof=1)) if v.size > 1 else float("nan")

    @property
    def std_err(self) -> float:
        return self.std / math.sqrt(self.n_valid) if self.n_valid > 1 else float("nan")

    @property
    def percent_error(self) -> float:
        """Delta C: standard deviation as a percentage of the mean."""
        return 100.0 * self.std / self.mean

    def scaled(self, k: float) -> "ContrastSeries":
        return replace(self, values=self.values * k, uncalibrated=False)

    def __len__(self) -> int:
        return self.values.size
