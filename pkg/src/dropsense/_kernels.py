"""Hot inner loops: trace synthesis, one-pole filter cascades, reflected random walks.

Each kernel exists twice: a numba ``@njit`` version and a pure numpy/scipy
fallback with the same arithmetic. ``DROPSENSE_NO_NUMBA=1`` (or a missing
numba install) selects the fallback at import time; ``set_backend`` switches
at runtime, which the benchmark and the cross-backend tests use.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.signal import lfilter

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_env_off = os.environ.get("DROPSENSE_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
_backend = "numba" if (HAVE_NUMBA and not _env_off) else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


TWO_PI = 2.0 * np.pi

# ---------------------------------------------------------------------------
# trace synthesis
# ---------------------------------------------------------------------------
# Parameter bundle layout (float64 vector ``p``), shared by both backends:
P_DT, P_F0, P_GRID_H, P_M0, P_G0, P_C, P_FMW, P_PHI_CYC, P_LASER_FRAC, P_LASER_PERIOD, \
    P_BR_DEPTH, P_BR_DT, P_B0, P_BG_TAU, P_SHOT, P_WHITE = range(16)
N_PARAMS = 16


def _synth_numpy(out, k0, p, prof_kind, prof_table, wave_kind, wave_table,
                 dev_nodes, fdev_nodes, loading, br_trace, z_shot, z_white):
    n = out.size
    dt = p[P_DT]
    t = (k0 + np.arange(n, dtype=np.float64)) * dt

    h = p[P_GRID_H]
    j = (t / h).astype(np.int64)
    s = t - j * h
    fa = fdev_nodes[j]
    fb = fdev_nodes[j + 1]
    cyc = p[P_F0] * t + (dev_nodes[j] + fa * s + (fb - fa) * s * s / (2.0 * h))
    frac = cyc - np.floor(cyc)
    if prof_kind == 0:
        prof = np.cos(TWO_PI * frac)
    else:
        tl = prof_table.size - 1
        x = frac * tl
        i = x.astype(np.int64)
        w = x - i
        prof = prof_table[i] * (1.0 - w) + prof_table[i + 1] * w
    drop = np.floor(cyc + 0.5).astype(np.int64)
    ell = loading[drop]

    mcyc = p[P_FMW] * t + p[P_PHI_CYC]
    mfrac = mcyc - np.floor(mcyc)
    if wave_kind == 0:
        wave = np.cos(TWO_PI * mfrac)
    else:
        tl = wave_table.size - 1
        x = mfrac * tl
        i = x.astype(np.int64)
        w = x - i
        wave = wave_table[i] * (1.0 - w) + wave_table[i + 1] * w

    nd = (p[P_M0] + p[P_G0] * ell * prof) * (1.0 - p[P_C] * wave)
    if p[P_LASER_FRAC] != 0.0:
        nd *= 1.0 + 0.5 * p[P_LASER_FRAC] * np.sin(TWO_PI * t / p[P_LASER_PERIOD])
    if p[P_BR_DEPTH] != 0.0:
        u = t / p[P_BR_DT]
        i = np.minimum(u.astype(np.int64), br_trace.size - 2)
        b = br_trace[i] + (br_trace[i + 1] - br_trace[i]) * (u - i)
        nd *= 1.0 - p[P_BR_DEPTH] + p[P_BR_DEPTH] * b
    clean = nd
    if p[P_B0] != 0.0:
        clean = nd + p[P_B0] * np.exp(-t / p[P_BG_TAU])
    res = clean
    if p[P_SHOT] != 0.0:
        res = res + np.sqrt(p[P_SHOT] * np.maximum(clean, 0.0)) * z_shot
    if p[P_WHITE] != 0.0:
        res = res + p[P_WHITE] * z_white
    out[:] = res


def _onepole_numpy(x, alpha, order, state):
    """Cascade of ``order`` one-pole low-pass stages; ``state`` holds each stage's last output."""
    b = np.array([alpha])
    a = np.array([1.0, -(1.0 - alpha)])
    y = np.asarray(x, dtype=np.float64)
    for s in range(order):
        y, zf = lfilter(b, a, y, zi=np.array([(1.0 - alpha) * state[s]]))
        state[s] = y[-1]
    return y


def _reflect_walk_numpy(pos, steps, radius, out):
    n_steps = steps.shape[0]
    out[0] = pos
    cur = pos.copy()
    for k in range(n_steps):
        cur = cur + steps[k]
        r = np.hypot(cur[:, 0], cur[:, 1])
        outside = r > radius
        while np.any(outside):
            rr = r[outside]
            scale = np.abs(2.0 * radius - rr) / rr
            cur[outside] *= scale[:, None]
            r = np.hypot(cur[:, 0], cur[:, 1])
            outside = r > radius
        out[k + 1] = cur


if HAVE_NUMBA:

    @njit(cache=True)
    def _synth_numba(out, k0, p, prof_kind, prof_table, wave_kind, wave_table,
                     dev_nodes, fdev_nodes, loading, br_trace, z_shot, z_white):
        n = out.size
        dt = p[P_DT]
        h = p[P_GRID_H]
        f0 = p[P_F0]
        m0 = p[P_M0]
        g0 = p[P_G0]
        c = p[P_C]
        fmw = p[P_FMW]
        phi = p[P_PHI_CYC]
        lfrac = p[P_LASER_FRAC]
        lper = p[P_LASER_PERIOD]
        depth = p[P_BR_DEPTH]
        brdt = p[P_BR_DT]
        b0 = p[P_B0]
        tau = p[P_BG_TAU]
        shot = p[P_SHOT]
        white = p[P_WHITE]
        ptl = prof_table.size - 1
        wtl = wave_table.size - 1
        nbr = br_trace.size
        for k in range(n):
            t = (k0 + k) * dt
            j = np.int64(t / h)
            s = t - j * h
            fa = fdev_nodes[j]
            fb = fdev_nodes[j + 1]
            cyc = f0 * t + (dev_nodes[j] + fa * s + (fb - fa) * s * s / (2.0 * h))
            frac = cyc - np.floor(cyc)
            if prof_kind == 0:
                prof = np.cos(TWO_PI * frac)
            else:
                x = frac * ptl
                i = np.int64(x)
                w = x - i
                prof = prof_table[i] * (1.0 - w) + prof_table[i + 1] * w
            ell = loading[np.int64(np.floor(cyc + 0.5))]
            mcyc = fmw * t + phi
            mfrac = mcyc - np.floor(mcyc)
            if wave_kind == 0:
                wave = np.cos(TWO_PI * mfrac)
            else:
                x = mfrac * wtl
                i = np.int64(x)
                w = x - i
                wave = wave_table[i] * (1.0 - w) + wave_table[i + 1] * w
            nd = (m0 + g0 * ell * prof) * (1.0 - c * wave)
            if lfrac != 0.0:
                nd *= 1.0 + 0.5 * lfrac * np.sin(TWO_PI * t / lper)
            if depth != 0.0:
                u = t / brdt
                i = min(np.int64(u), nbr - 2)
                b = br_trace[i] + (br_trace[i + 1] - br_trace[i]) * (u - i)
                nd *= 1.0 - depth + depth * b
            clean = nd
            if b0 != 0.0:
                clean = nd + b0 * np.exp(-t / tau)
            res = clean
            if shot != 0.0:
                res = res + np.sqrt(shot * max(clean, 0.0)) * z_shot[k]
            if white != 0.0:
                res = res + white * z_white[k]
            out[k] = res

    @njit(cache=True)
    def _onepole_numba(x, alpha, order, state):
        n = x.size
        y = np.empty(n)
        beta = 1.0 - alpha
        for k in range(n):
            v = x[k]
            for s in range(order):
                v = alpha * v + beta * state[s]
                state[s] = v
            y[k] = v
        return y

    @njit(cache=True)
    def _reflect_walk_numba(pos, steps, radius, out):
        n_steps = steps.shape[0]
        npart = pos.shape[0]
        for q in range(npart):
            x = pos[q, 0]
            y = pos[q, 1]
            out[0, q, 0] = x
            out[0, q, 1] = y
            for k in range(n_steps):
                x += steps[k, q, 0]
                y += steps[k, q, 1]
                r = np.hypot(x, y)
                while r > radius:
                    scale = abs(2.0 * radius - r) / r
                    x *= scale
                    y *= scale
                    r = np.hypot(x, y)
                out[k + 1, q, 0] = x
                out[k + 1, q, 1] = y


def synth_chunk(out, k0, p, prof_kind, prof_table, wave_kind, wave_table,
                dev_nodes, fdev_nodes, loading, br_trace, z_shot, z_white):
    if _backend == "numba":
        _synth_numba(out, np.int64(k0), p, prof_kind, prof_table, wave_kind, wave_table,
                     dev_nodes, fdev_nodes, loading, br_trace, z_shot, z_white)
    else:
        _synth_numpy(out, k0, p, prof_kind, prof_table, wave_kind, wave_table,
                     dev_nodes, fdev_nodes, loading, br_trace, z_shot, z_white)


def onepole_cascade(x, alpha: float, order: int, state: np.ndarray) -> np.ndarray:
    """Run ``x`` through ``order`` identical one-pole stages ``y += alpha (x - y)``.

    ``state`` (length ``order``) carries each stage's previous output and is
    updated in place, so long inputs can be streamed chunk by chunk.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if _backend == "numba":
        return _onepole_numba(x, float(alpha), int(order), state)
    return _onepole_numpy(x, float(alpha), int(order), state)


def reflect_walk(pos, steps, radius: float) -> np.ndarray:
    """Integrate ``steps`` (n_steps, n, 2) from ``pos`` (n, 2) inside a reflecting disc."""
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    steps = np.ascontiguousarray(steps, dtype=np.float64)
    out = np.empty((steps.shape[0] + 1,) + pos.shape)
    if _backend == "numba":
        _reflect_walk_numba(pos, steps, float(radius), out)
    else:
        _reflect_walk_numpy(pos, steps, float(radius), out)
    return out
