"""Time the hot kernels under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py --duration 60 --repeat 3

Each backend runs once untimed first so JIT compilation is excluded.
"""
import argparse
import time

import numpy as np

from dropsense import _kernels
from dropsense import reference as ref
from dropsense.brownian import KineticsParams, simulate
from dropsense.lockin import ratiometric_contrast
from dropsense.synth import synthesize


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=60.0, help="trace length in seconds")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cfg = ref.matched_budget(args.duration)
    ts, _ = synthesize(cfg)
    walk = KineticsParams(n_particles=2000, duration=30.0)
    cases = {
        "synthesize": lambda: synthesize(cfg),
        "onepole x2": lambda: _kernels.onepole_cascade(ts.samples, 0.01, 2, np.zeros(2)),
        "ratiometric": lambda: ratiometric_contrast(ts, ref.DEMOD),
        "reflect_walk": lambda: simulate(walk, 0),
    }
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    old = _kernels.backend()
    rows = {}
    try:
        for b in backends:
            _kernels.set_backend(b)
            for name, fn in cases.items():
                fn()  # warm-up
                rows.setdefault(name, {})[b] = _best(fn, args.repeat)
    finally:
        _kernels.set_backend(old)

    print(f"{len(ts):.2e} samples, best of {args.repeat}")
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, r in rows.items():
        sp = r["numpy"] / r["numba"] if "numba" in r else float("nan")
        print(f"{name:<14}" + "".join(f"{r[b]:>11.3f}s" for b in backends) + f"{sp:>9.1f}x")


if __name__ == "__main__":
    main()
