"""Hot numeric kernels with optional numba acceleration.

Three inner loops dominate the toolkit's runtime: phasor-sum powers over
many random phase draws (Monte-Carlo moment checks), phasor powers over
the (link, channel) lattice (scene simulation), and the weighted grid
vote map (coarse position estimation). Each has a compiled numba version
and a pure-numpy fallback producing the same values.

Backend selection happens once at import via the DFLKIT_BACKEND
environment variable:

    DFLKIT_BACKEND=numpy   force the pure-numpy path
    DFLKIT_BACKEND=numba   require numba (ImportError if unavailable)
    unset / auto           numba when importable, else numpy

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

_requested = os.environ.get("DFLKIT_BACKEND", "auto").strip().lower()
if _requested in ("", "auto"):
    USE_NUMBA = _HAVE_NUMBA
elif _requested == "numpy":
    USE_NUMBA = False
elif _requested == "numba":
    if not _HAVE_NUMBA:
        raise ImportError("DFLKIT_BACKEND=numba but numba is not importable")
    USE_NUMBA = True
else:
    raise ValueError(f"DFLKIT_BACKEND must be 'numpy', 'numba' or 'auto', got {_requested!r}")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# phasor powers over N independent phase draws
# ---------------------------------------------------------------------------

def _phasor_powers_np(amplitudes, phases, los_gain):
    """|los_gain*A_0*e^{j p_0} + sum_i A_i e^{j p_i}|^2 per draw.

    amplitudes: (P,) linear volts, index 0 is the line-of-sight path.
    phases: (N, P) radians. Returns (N,) linear power.
    """
    scaled = np.asarray(amplitudes, dtype=np.float64).copy()
    scaled[0] *= los_gain
    re = np.cos(phases) @ scaled
    im = np.sin(phases) @ scaled
    return re * re + im * im


if _HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _phasor_powers_nb(amplitudes, phases, los_gain):  # pragma: no cover - compiled
        n, p = phases.shape
        out = np.empty(n, dtype=np.float64)
        for k in prange(n):
            re = los_gain * amplitudes[0] * np.cos(phases[k, 0])
            im = los_gain * amplitudes[0] * np.sin(phases[k, 0])
            for i in range(1, p):
                re += amplitudes[i] * np.cos(phases[k, i])
                im += amplitudes[i] * np.sin(phases[k, i])
            out[k] = re * re + im * im
        return out


def phasor_powers(amplitudes, phases, los_gain=1.0):
    amplitudes = np.ascontiguousarray(amplitudes, dtype=np.float64)
    phases = np.ascontiguousarray(phases, dtype=np.float64)
    if USE_NUMBA:
        return _phasor_powers_nb(amplitudes, phases, float(los_gain))
    return _phasor_powers_np(amplitudes, phases, float(los_gain))


# ---------------------------------------------------------------------------
# phasor powers on the (link, channel) lattice
# ---------------------------------------------------------------------------

def _link_channel_powers_np(amplitudes, phases, los_gains):
    """Received power per (link, channel).

    amplitudes: (L, P); phases: (L, P, C); los_gains: (L,) linear
    amplitude factor applied to path 0 of each link. Returns (L, C) mW.
    """
    scaled = amplitudes.copy()
    scaled[:, 0] *= los_gains
    re = np.einsum("lp,lpc->lc", scaled, np.cos(phases))
    im = np.einsum("lp,lpc->lc", scaled, np.sin(phases))
    return re * re + im * im


if _HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _link_channel_powers_nb(amplitudes, phases, los_gains):  # pragma: no cover - compiled
        n_links, n_paths, n_channels = phases.shape
        out = np.empty((n_links, n_channels), dtype=np.float64)
        for l in prange(n_links):
            for c in range(n_channels):
                re = los_gains[l] * amplitudes[l, 0] * np.cos(phases[l, 0, c])
                im = los_gains[l] * amplitudes[l, 0] * np.sin(phases[l, 0, c])
                for i in range(1, n_paths):
                    re += amplitudes[l, i] * np.cos(phases[l, i, c])
                    im += amplitudes[l, i] * np.sin(phases[l, i, c])
                out[l, c] = re * re + im * im
        return out


def link_channel_powers(amplitudes, phases, los_gains):
    amplitudes = np.ascontiguousarray(amplitudes, dtype=np.float64)
    phases = np.ascontiguousarray(phases, dtype=np.float64)
    los_gains = np.ascontiguousarray(los_gains, dtype=np.float64)
    if USE_NUMBA:
        return _link_channel_powers_nb(amplitudes, phases, los_gains)
    return _link_channel_powers_np(amplitudes, phases, los_gains)


# ---------------------------------------------------------------------------
# weighted vote map over grid cells
# ---------------------------------------------------------------------------

def _vote_map_np(x1, y1, x2, y2, weights, centers_x, centers_y, radius, clamp):
    a = y2 - y1
    b = x1 - x2
    e = x1 * y2 - x2 * y1
    norm = np.hypot(a, b)
    gx = centers_x[None, :]
    gy = centers_y[:, None]
    votes = np.zeros((centers_y.size, centers_x.size), dtype=np.float64)
    for k in range(a.size):
        if clamp:
            dx = x2[k] - x1[k]
            dy = y2[k] - y1[k]
            t = ((gx - x1[k]) * dx + (gy - y1[k]) * dy) / (dx * dx + dy * dy)
            t = np.clip(t, 0.0, 1.0)
            d = np.hypot(gx - (x1[k] + t * dx), gy - (y1[k] + t * dy))
        else:
            d = np.abs(e[k] - a[k] * gx - b[k] * gy) / norm[k]
        votes += weights[k] * (d < radius)
    return votes


if _HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _vote_map_nb(x1, y1, x2, y2, weights, centers_x, centers_y, radius, clamp):  # pragma: no cover - compiled
        m = x1.size
        a = np.empty(m)
        b = np.empty(m)
        e = np.empty(m)
        norm = np.empty(m)
        for k in range(m):
            a[k] = y2[k] - y1[k]
            b[k] = x1[k] - x2[k]
            e[k] = x1[k] * y2[k] - x2[k] * y1[k]
            norm[k] = np.sqrt(a[k] * a[k] + b[k] * b[k])
        n_y = centers_y.size
        n_x = centers_x.size
        votes = np.zeros((n_y, n_x), dtype=np.float64)
        for r in prange(n_y):
            gy = centers_y[r]
            for c in range(n_x):
                gx = centers_x[c]
                acc = 0.0
                for k in range(m):
                    if clamp:
                        dx = x2[k] - x1[k]
                        dy = y2[k] - y1[k]
                        t = ((gx - x1[k]) * dx + (gy - y1[k]) * dy) / (dx * dx + dy * dy)
                        if t < 0.0:
                            t = 0.0
                        elif t > 1.0:
                            t = 1.0
                        px = x1[k] + t * dx
                        py = y1[k] + t * dy
                        d = np.sqrt((gx - px) ** 2 + (gy - py) ** 2)
                    else:
                        d = abs(e[k] - a[k] * gx - b[k] * gy) / norm[k]
                    if d < radius:
                        acc += weights[k]
                votes[r, c] = acc
        return votes


def vote_map(x1, y1, x2, y2, weights, centers_x, centers_y, radius, clamp=False):
    """Accumulate per-cell weighted votes from line segments.

    A cell votes for line k when its center lies within ``radius`` of the
    line (infinite line by default, segment when ``clamp``). Returns a
    (len(centers_y), len(centers_x)) float array.
    """
    args = [np.ascontiguousarray(v, dtype=np.float64) for v in (x1, y1, x2, y2, weights)]
    cx = np.ascontiguousarray(centers_x, dtype=np.float64)
    cy = np.ascontiguousarray(centers_y, dtype=np.float64)
    if USE_NUMBA:
        return _vote_map_nb(*args, cx, cy, float(radius), bool(clamp))
    return _vote_map_np(*args, cx, cy, float(radius), bool(clamp))
