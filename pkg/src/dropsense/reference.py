"""The frozen reference noise budget and configurations.

The budget was calibrated once, on a 10 min run at f_D = 34 Hz and C = 0.056,
so that the ratiometric single lock-in lands near 13 % percent error (100 ms
samples) and the dual lock-in estimator near 2 % (0.7 s windows). Every
acceptance run that asks for the reference noise budget uses these numbers unchanged.
"""
from __future__ import annotations

from .core import (AcquisitionConfig, BrownianNoise, DropletTrain, ExperimentConfig, MwModulation,
                   NoiseBudget)
from .lockin import DemodConfig

F_D = 34.0
F_MW = 1000.0
CONTRAST = 0.056
SAMPLE_RATE = 50_000.0

NOISE = NoiseBudget(
    shot_scale=0.007,
    background_b0=0.5,
    background_decay_tau=60.0,
    background_white_sigma=0.03,
    laser_drift_fraction=0.01,
    laser_drift_period=600.0,
)
BROWNIAN = BrownianNoise(depth=0.3)

DEMOD = DemodConfig(reference_freq=F_MW, time_constant=0.012, filter_order=2)
PL_SMOOTH_TAU = 0.1
DUAL_WINDOW = 0.7


def matched_budget(duration: float, seed: int = 0, contrast: float = CONTRAST, f_D: float = F_D,
                  **noise_overrides) -> ExperimentConfig:
    """Reference configuration with the frozen budget; ``noise_overrides`` patch NoiseBudget fields."""
    cfg = ExperimentConfig(
        acquisition=AcquisitionConfig(SAMPLE_RATE, duration, seed),
        droplets=DropletTrain(f_D=f_D),
        mw=MwModulation(f_MW=F_MW, contrast=contrast),
        noise=NOISE,
        brownian=BROWNIAN,
    )
    if noise_overrides:
        cfg = cfg.with_(noise=noise_overrides)
    return cfg


def noiseless(duration: float = 15.0, f_D: float = 29.0, contrast: float = CONTRAST, seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig(
        acquisition=AcquisitionConfig(SAMPLE_RATE, duration, seed),
        droplets=DropletTrain(f_D=f_D),
        mw=MwModulation(f_MW=F_MW, contrast=contrast),
    )
