"""Command-line pipelines: synth, analyze, allan, titrate, brownian, replay.

Exit codes: 0 success, 1 replay digest mismatch, 2 config error,
3 analysis degenerate (e.g. every window invalid), 4 I/O error.
Each command writes ``<out>.manifest.json`` next to its main output.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, configfile, io
from . import reference as ref
from .brownian import KineticsError, KineticsParams, displacement_histogram, simulate
from .core import ConfigError, EstimatorId, ExperimentConfig, validate
from .duallock import EstimatorConfig, estimate_contrast, read_series_csv, summary, write_series_csv
from .lockin import DemodConfig, ratiometric_contrast
from .stability import allan_deviation
from .synth import synthesize
from .titration import GD, TEMPOL, LodError, RelaxometryModel, run_titration

log = logging.getLogger("dropsense")

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 1, 2, 3, 4

ESTIMATORS = {
    "paper": EstimatorId.PAPER_MAIN,
    "si": EstimatorId.SI_VARIANT,
    "exact": EstimatorId.EXACT_RECOVERY,
}


class Degenerate(RuntimeError):
    pass


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seed: Optional[int]
    tool_version: str = __version__
    outputs: dict = field(default_factory=dict)

    def add(self, path) -> None:
        self.outputs[str(path)] = sha256(path)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _manifest_path(out) -> Path:
    return Path(str(out) + ".manifest.json")


def _sidecar(out, tag: str, ext: str) -> Path:
    p = Path(out)
    return p.with_name(f"{p.stem}.{tag}.{ext}")


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(type(o))


def _load_config(path) -> tuple[ExperimentConfig, dict]:
    if path is None:
        return ExperimentConfig(), {}
    return configfile.load(path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg, extra = _load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_(acquisition={"rng_seed": args.seed})
    report = validate(cfg)
    for w in report.warnings:
        log.warning("%s", w)
    if not report.ok:
        raise ConfigError(report)
    ts, truth = synthesize(cfg)
    io.write_trace(ts, args.out, args.format)
    side = _sidecar(args.out, "truth", "json")
    info = truth.summary()
    info.update(f_MW=cfg.mw.f_MW, sample_rate=cfg.acquisition.sample_rate, n_samples=len(ts))
    _write_json(side, info)
    m = RunManifest("synth", args.argv, {"experiment": configfile.dumps(cfg, extra)}, cfg.acquisition.rng_seed)
    m.add(args.out)
    m.add(side)
    m.write(_manifest_path(args.out))
    return EXIT_OK


def _analysis_params(args, trace_path) -> tuple[float, float, float]:
    """(f_D, f_MW, background level) from --config, else the synth sidecar, else defaults."""
    if args.config is not None:
        cfg, extra = configfile.load(args.config)
        bg = float(extra.get("analysis.background_level", 0.0))
        return cfg.droplets.f_D, cfg.mw.f_MW, bg
    side = _sidecar(trace_path, "truth", "json")
    if side.exists():
        info = json.loads(side.read_text())
        return float(info["f_D_nominal"]), float(info["f_MW"]), 0.0
    d = ExperimentConfig()
    return d.droplets.f_D, d.mw.f_MW, 0.0


def _out_with(out, suffix: str) -> Path:
    p = Path(out)
    return p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}")


def cmd_analyze(args) -> int:
    ts = io.read_trace(args.trace)
    f_D, f_MW, bg = _analysis_params(args, args.trace)
    runs = []
    if args.estimator in ESTIMATORS or args.estimator == "both":
        eid = ESTIMATORS.get(args.estimator, EstimatorId.PAPER_MAIN)
        cfg = EstimatorConfig(eid, f_D=f_D, f_MW=f_MW, delta_t=args.window_s, droplet_half_width=args.band_hz,
                              mw_half_width=args.band_hz, background_level=bg)
        runs.append(("dual", estimate_contrast(ts, cfg)))
    if args.estimator in ("conventional", "both"):
        demod = DemodConfig(f_MW, ref.DEMOD.time_constant, ref.DEMOD.filter_order)
        runs.append(("conventional", ratiometric_contrast(ts, demod, ref.PL_SMOOTH_TAU)))

    m = RunManifest("analyze", args.argv, {"f_D": f_D, "f_MW": f_MW, "background_level": bg,
                                           "estimator": args.estimator, "window_s": args.window_s,
                                           "band_hz": args.band_hz}, None)
    summaries = {}
    for name, series in runs:
        path = args.out if len(runs) == 1 else _out_with(args.out, name)
        write_series_csv(series, path)
        m.add(path)
        summaries[name] = summary(series)
    js = _sidecar(args.out, "summary", "json")
    _write_json(js, summaries if len(runs) > 1 else next(iter(summaries.values())))
    m.add(js)
    m.write(_manifest_path(args.out))
    if any(s["n_valid"] == 0 for s in summaries.values()):
        raise Degenerate("no valid windows (no droplet modulation found)")
    return EXIT_OK


def cmd_allan(args) -> int:
    series = read_series_csv(args.contrast_csv)
    taus = configfile.as_list(args.taus) if args.taus else None
    if series.n_valid < 3:
        raise Degenerate("fewer than 3 valid points")
    curve = allan_deviation(series, taus, fractional=args.fractional,
                            overlapping=not args.non_overlapping)
    if curve.taus.size == 0:
        raise Degenerate("series too short for any tau")
    curve.to_csv(args.out)
    m = RunManifest("allan", args.argv, {"taus": taus, "fractional": args.fractional,
                                         "overlapping": not args.non_overlapping}, None)
    m.add(args.out)
    m.write(_manifest_path(args.out))
    if curve.taus.size >= 2:
        print(json.dumps({"slope": curve.slope()}))
    return EXIT_OK


def cmd_titrate(args) -> int:
    base = {"gd": GD, "tempol": TEMPOL}[args.model]
    model = RelaxometryModel(
        base.C_zero if args.c_zero is None else args.c_zero,
        base.C_floor if args.c_floor is None else args.c_floor,
        base.K_half if args.k_half is None else args.k_half,
    )
    conc = configfile.as_list(args.conc)
    if args.config is not None:
        template, _ = configfile.load(args.config)
    else:
        template = ref.matched_budget(args.duration_s)
    seed = args.seed if args.seed is not None else template.acquisition.rng_seed
    est = EstimatorConfig(ESTIMATORS[args.estimator], f_D=template.droplets.f_D, f_MW=template.mw.f_MW,
                          delta_t=args.window_s, droplet_half_width=args.band_hz, mw_half_width=args.band_hz)
    curve = run_titration(model, conc, args.duration_s, template, est, settling_gap=args.settling_s, seed=seed)
    curve.to_csv(args.out)
    js = _sidecar(args.out, "summary", "json")
    curve.to_json(js)
    m = RunManifest("titrate", args.argv, {"model": asdict(model), "concentrations": conc,
                                           "template": configfile.dumps(template)}, seed)
    m.add(args.out)
    m.add(js)
    m.write(_manifest_path(args.out))
    return EXIT_OK


def cmd_brownian(args) -> int:
    params = KineticsParams(args.diffusion, args.radius, args.n_particles, args.dt, args.duration_s, args.alpha)
    ens = simulate(params, args.seed if args.seed is not None else 0)
    ens.to_csv(args.out)
    hist_path = _sidecar(args.out, "hist", "csv")
    lag = args.lag if args.lag is not None else params.dt_step
    displacement_histogram(ens, lag, args.bins).to_csv(hist_path)
    m = RunManifest("brownian", args.argv, asdict(params), args.seed if args.seed is not None else 0)
    m.add(args.out)
    m.add(hist_path)
    m.write(_manifest_path(args.out))
    return EXIT_OK


def cmd_replay(args) -> int:
    """Re-run the command recorded in a manifest and compare output digests."""
    recorded = json.loads(Path(args.manifest).read_text())
    code = main(recorded["argv"])
    if code != EXIT_OK:
        return code
    bad = [p for p, d in recorded["outputs"].items() if sha256(p) != d]
    for p in bad:
        print(f"digest mismatch: {p}", file=sys.stderr)
    return EXIT_MISMATCH if bad else EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _u64(raw: str) -> int:
    v = int(raw)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(raw: str) -> float:
    v = float(raw)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dropsense", description="Dual lock-in droplet ODMR toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a PL trace from a config file")
    s.add_argument("--config", metavar="PATH", help="flat key = value config (defaults if omitted)")
    s.add_argument("--out", metavar="PATH", required=True)
    s.add_argument("--seed", type=_u64, metavar="U64", help="master seed (overrides the config)")
    s.add_argument("--format", choices=("csv", "bin"), default="bin")
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("analyze", help="contrast time series from a trace")
    a.add_argument("trace", metavar="TRACE")
    a.add_argument("--out", metavar="PATH", required=True)
    a.add_argument("--config", metavar="PATH", help="config giving f_D and f_MW (else the synth sidecar)")
    a.add_argument("--estimator", choices=("paper", "si", "exact", "both", "conventional"), default="paper")
    a.add_argument("--window-s", type=_positive, default=ref.DUAL_WINDOW, metavar="F64")
    a.add_argument("--band-hz", type=_positive, default=2.0, metavar="F64", help="band half-width")
    a.set_defaults(func=cmd_analyze)

    al = sub.add_parser("allan", help="Allan deviation of a contrast CSV")
    al.add_argument("contrast_csv", metavar="CONTRAST_CSV")
    al.add_argument("--out", metavar="PATH", required=True)
    al.add_argument("--taus", metavar="LIST", help="comma list of averaging times (s)")
    al.add_argument("--fractional", action="store_true", help="normalize by the mean first")
    al.add_argument("--non-overlapping", action="store_true")
    al.set_defaults(func=cmd_allan)

    t = sub.add_parser("titrate", help="simulated titration with LOD")
    t.add_argument("--out", metavar="PATH", required=True)
    t.add_argument("--config", metavar="PATH", help="template config (reference budget if omitted)")
    t.add_argument("--model", choices=("gd", "tempol"), default="gd")
    t.add_argument("--c-zero", type=float)
    t.add_argument("--c-floor", type=float)
    t.add_argument("--k-half", type=_positive, metavar="M")
    t.add_argument("--conc", required=True, metavar="LIST", help="comma list of concentrations (M)")
    t.add_argument("--duration-s", type=_positive, default=120.0, metavar="F64", help="seconds per point")
    t.add_argument("--settling-s", type=float, default=5.0, metavar="F64")
    t.add_argument("--seed", type=_u64, metavar="U64")
    t.add_argument("--estimator", choices=("paper", "si", "exact"), default="paper")
    t.add_argument("--window-s", type=_positive, default=ref.DUAL_WINDOW, metavar="F64")
    t.add_argument("--band-hz", type=_positive, default=2.0, metavar="F64")
    t.set_defaults(func=cmd_titrate)

    b = sub.add_parser("brownian", help="particle trajectories and displacement histogram")
    b.add_argument("--out", metavar="PATH", required=True)
    b.add_argument("--n-particles", type=int, default=200)
    b.add_argument("--duration-s", type=_positive, default=30.0, metavar="F64")
    b.add_argument("--dt", type=_positive, default=0.1, metavar="F64")
    b.add_argument("--diffusion", type=float, default=4.0, metavar="UM2_PER_S")
    b.add_argument("--radius", type=_positive, default=25.0, metavar="UM")
    b.add_argument("--alpha", type=float, default=None, help="stable index for heavy-tailed steps")
    b.add_argument("--lag", type=_positive, default=None, metavar="S")
    b.add_argument("--bins", type=int, default=30)
    b.add_argument("--seed", type=_u64, metavar="U64")
    b.set_defaults(func=cmd_brownian)

    r = sub.add_parser("replay", help="re-run a manifest and verify output digests")
    r.add_argument("manifest", metavar="MANIFEST")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error:\n{exc.report}", file=sys.stderr)
        return EXIT_CONFIG
    except (configfile.ConfigParseError, KineticsError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Degenerate, LodError) as exc:
        print(f"degenerate analysis: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, io.TraceFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
