"""Concentration-to-contrast model, simulated titrations and limits of detection.

Contrast falls hyperbolically from ``C_zero`` towards ``C_floor``:

    C(c) = C_floor + (C_zero - C_floor) / (1 + c / K_half)

The LOD is the smallest concentration whose contrast drop equals three blank
standard deviations on the fitted curve.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, curve_fit

from . import rng
from .core import EstimatorId, ExperimentConfig
from .duallock import EstimatorConfig, calibrate, estimate_contrast
from .synth import synthesize

log = logging.getLogger(__name__)

LOD_CONVENTION = "3-sigma"
DEFAULT_SETTLING_GAP = 5.0  # s discarded at the start of each point
REFERENCE_INDEX = 1 << 20  # titration stream index of the calibration run


class LodError(ValueError):
    pass


@dataclass(frozen=True)
class RelaxometryModel:
    C_zero: float = 0.056
    C_floor: float = 0.028
    K_half: float = 2e-6  # M

    def __post_init__(self):
        # C_floor == C_zero is tolerated: it is the flat (no-response) control
        if not (0.0 <= self.C_floor <= self.C_zero <= 0.2):
            raise ValueError("need 0 <= C_floor <= C_zero <= 0.2")
        if self.K_half <= 0:
            raise ValueError("K_half must be > 0")

    @property
    def span(self) -> float:
        return self.C_zero - self.C_floor


GD = RelaxometryModel(0.056, 0.028, 2e-6)
TEMPOL = RelaxometryModel(0.056, 0.028, 1e-5)


def expected_contrast(model: RelaxometryModel, conc):
    c = np.asarray(conc, dtype=np.float64)
    if np.any(c < 0):
        raise ValueError("concentration must be >= 0")
    out = model.C_floor + model.span / (1.0 + c / model.K_half)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TitrationPoint:
    concentration: float
    mean_contrast: float
    std_err: float
    n_windows: int
    std: float


@dataclass(frozen=True)
class TitrationCurve:
    points: tuple[TitrationPoint, ...]
    model: RelaxometryModel  # the model used to synthesize
    fitted: Optional[RelaxometryModel]
    slope: float  # least-squares dC/dconc, per M
    blank_sigma: float
    lod: Optional[float]
    lod_convention: str = LOD_CONVENTION
    estimator_id: EstimatorId = EstimatorId.PAPER_MAIN
    scale_factor: float = 1.0

    @property
    def concentrations(self) -> np.ndarray:
        return np.array([p.concentration for p in self.points])

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean_contrast for p in self.points])

    @property
    def std_errs(self) -> np.ndarray:
        return np.array([p.std_err for p in self.points])

    def point(self, conc: float) -> TitrationPoint:
        for p in self.points:
            if math.isclose(p.concentration, conc, rel_tol=1e-9, abs_tol=1e-18):
                return p
        raise KeyError(conc)

    def separation(self, c1: float, c2: float) -> float:
        """|mean difference| in units of the combined standard error."""
        a, b = self.point(c1), self.point(c2)
        return abs(a.mean_contrast - b.mean_contrast) / math.hypot(a.std_err, b.std_err)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["concentration_M", "mean_contrast", "std_err", "n_windows"])
            for p in self.points:
                w.writerow([repr(p.concentration), repr(p.mean_contrast), repr(p.std_err), p.n_windows])

    def summary(self) -> dict:
        return {
            "model": asdict(self.model),
            "fitted": asdict(self.fitted) if self.fitted else None,
            "slope_per_M": self.slope,
            "blank_sigma": self.blank_sigma,
            "lod_M": self.lod,
            "lod_convention": self.lod_convention,
            "estimator_id": self.estimator_id.value,
            "scale_factor": self.scale_factor,
            "n_points": len(self.points),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def _hyperbola(c, c0, cf, k):
    return cf + (c0 - cf) / (1.0 + c / k)


def fit_model(conc: np.ndarray, means: np.ndarray, errs: np.ndarray) -> Optional[RelaxometryModel]:
    """Weighted least-squares fit of the hyperbolic curve; None if ill-posed."""
    conc = np.asarray(conc, float)
    pos = conc[conc > 0]
    if pos.size == 0:
        return None
    sigma = np.asarray(errs, float) if np.all(np.asarray(errs) > 0) else None
    k0 = float(np.median(pos))
    p0 = (float(means[0]), float(means[-1]), k0)
    try:
        popt, _ = curve_fit(_hyperbola, conc, means, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
                            bounds=([0.0, 0.0, pos.min() * 1e-3], [0.2, 0.2, pos.max() * 1e3]), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        log.warning("titration fit failed: %s", exc)
        return None
    c0, cf, k = (float(v) for v in popt)
    if cf > c0:
        return None
    return RelaxometryModel(c0, cf, k)


def lod_closed_form(model: RelaxometryModel, blank_sigma: float) -> float:
    d = 3.0 * blank_sigma
    if d >= model.span:
        raise LodError("LOD beyond model range")
    return model.K_half * d / (model.span - d)


def lod(curve_or_model, blank_sigma: float) -> float:
    """Smallest concentration whose drop from C_zero equals 3 blank_sigma (root-found)."""
    model = curve_or_model.fitted if isinstance(curve_or_model, TitrationCurve) else curve_or_model
    if model is None:
        raise LodError("no fitted model")
    if not blank_sigma > 0:
        raise ValueError("blank_sigma must be > 0")
    d = 3.0 * blank_sigma
    if d >= model.span:
        raise LodError("LOD beyond model range")

    def f(c):
        return model.C_zero - expected_contrast(model, c) - d

    hi = model.K_half
    while f(hi) <= 0:
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=1e-30, rtol=1e-14)


def _point_series(template: ExperimentConfig, contrast: float, duration: float, seed: int,
                  est: EstimatorConfig, settling_gap: float):
    cfg = template.with_(mw={"contrast": contrast},
                         acquisition={"duration": duration + settling_gap, "rng_seed": seed})
    ts, _ = synthesize(cfg)
    series = estimate_contrast(ts, est)
    keep = series.times >= settling_gap
    return type(series)(series.times[keep], series.values[keep], series.valid[keep],
                        series.estimator_id, series.uncalibrated)


def run_titration(model: RelaxometryModel, concentrations: Sequence[float], per_point_duration: float,
                  template: ExperimentConfig, estimator: Optional[EstimatorConfig] = None, *,
                  settling_gap: float = DEFAULT_SETTLING_GAP, seed: Optional[int] = None,
                  blank_sigma: Optional[float] = None) -> TitrationCurve:
    """Simulate one trace per concentration and summarize the contrast at each.

    Each point gets its own seed derived from the master seed and the point
    index. The first ``settling_gap`` seconds of every point are discarded.
    PaperMain output is mapped to contrast with one extra calibration run at
    ``C_zero``. ``blank_sigma`` defaults to the standard error of the lowest
    concentration's mean (the blank when 0 is in the list).
    """
    conc = np.asarray(concentrations, dtype=np.float64)
    if conc.size < 3:
        raise ValueError("run_titration needs at least 3 concentrations")
    if np.any(np.diff(conc) <= 0) or np.any(conc < 0):
        raise ValueError("concentrations must be >= 0 and strictly increasing")
    master = template.acquisition.rng_seed if seed is None else seed
    if estimator is None:
        estimator = EstimatorConfig(f_D=template.droplets.f_D, f_MW=template.mw.f_MW)

    k = 1.0
    if estimator.estimator_id is EstimatorId.PAPER_MAIN:
        ref = _point_series(template, model.C_zero, per_point_duration,
                            rng.derive_seed(master, rng.TITRATION, REFERENCE_INDEX), estimator, settling_gap)
        k = calibrate(ref, model.C_zero)

    points = []
    for i, c in enumerate(conc):
        s = _point_series(template, expected_contrast(model, c), per_point_duration,
                          rng.derive_seed(master, rng.TITRATION, i), estimator, settling_gap)
        if s.n_valid < 2:
            raise ValueError(f"concentration {c:g} M produced fewer than 2 valid windows")
        v = s.valid_values * k
        sd = float(v.std(ddof=1))
        points.append(TitrationPoint(float(c), float(v.mean()), sd / math.sqrt(v.size), int(v.size), sd))
        log.info("titration point %d: %.3g M -> %.6g +/- %.2g", i, c, points[-1].mean_contrast, points[-1].std_err)

    means = np.array([p.mean_contrast for p in points])
    errs = np.array([p.std_err for p in points])
    slope = float(np.polyfit(conc, means, 1)[0])
    fitted = fit_model(conc, means, errs)
    if blank_sigma is None:
        blank_sigma = float(errs[0])
    curve = TitrationCurve(tuple(points), model, fitted, slope, blank_sigma, None,
                           estimator_id=estimator.estimator_id, scale_factor=k)
    if fitted is not None and blank_sigma > 0:
        try:
            curve = replace(curve, lod=lod(fitted, blank_sigma))
        except LodError as exc:
            log.warning("%s", exc)
    return curve


@dataclass(frozen=True)
class CostReport:
    n_droplets: float
    total_volume_L: float
    total_nd_mass_g: float
    total_cost: float

    def to_dict(self) -> dict:
        return asdict(self)


def cost_volume_report(f_D: float, duration: float, droplet_volume: float, nd_mass_per_droplet: float,
                       nd_price_per_mg: float) -> CostReport:
    """Consumables for a run: droplets, sample volume, nanodiamond mass and cost."""
    for name, v in (("f_D", f_D), ("duration", duration), ("droplet_volume", droplet_volume),
                    ("nd_mass_per_droplet", nd_mass_per_droplet), ("nd_price_per_mg", nd_price_per_mg)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0")
    n = f_D * duration
    mass = n * nd_mass_per_droplet
    return CostReport(n, n * droplet_volume, mass, mass * 1e3 * nd_price_per_mg)
