"""Hot Monte Carlo kernels: Gaussian cell noise -> Brownian pillow -> per-path statistics.

Each kernel has a numba implementation and a pure-numpy one.  Setting the
environment variable ``PILLOWBOUND_NUMBA=0`` (or running without numba
installed) selects the numpy path.  Both paths produce the same values up to
floating-point summation order.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("PILLOWBOUND_NUMBA", "1").strip().lower()

# tbb in this image is too old for numba; prefer the quiet layers
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# numpy path


def pillow_paths_numpy(z: np.ndarray) -> np.ndarray:
    """Paths (m, n+1, n+1) from cell noise z (m, n, n) of unit variance."""
    m, n, _ = z.shape
    w = np.zeros((m, n + 1, n + 1))
    w[:, 1:, 1:] = np.cumsum(np.cumsum(z, axis=1), axis=2) / n
    s = np.arange(n + 1, dtype=float) / n
    b = (
        w
        - s[None, :, None] * w[:, -1:, :]
        - s[None, None, :] * w[:, :, -1:]
        + (s[:, None] * s[None, :])[None] * w[:, -1:, -1:]
    )
    b[:, 0, :] = b[:, -1, :] = b[:, :, 0] = b[:, :, -1] = 0.0
    return b


def sheet_paths_numpy(z: np.ndarray) -> np.ndarray:
    m, n, _ = z.shape
    w = np.zeros((m, n + 1, n + 1))
    w[:, 1:, 1:] = np.cumsum(np.cumsum(z, axis=1), axis=2) / n
    return w


def path_stats_numpy(z, upper, lower, atoms):
    """Per path: max(B0 - upper), min(B0 - lower), sum(B0 * atoms)."""
    b = pillow_paths_numpy(z)
    m = b.shape[0]
    flat = b.reshape(m, -1)
    exceed = np.max(flat - upper.ravel()[None, :], axis=1)
    slack = np.min(flat - lower.ravel()[None, :], axis=1)
    ito = flat @ atoms.ravel()
    return exceed, slack, ito


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @nb.njit(cache=True)
    def _fill_pillow(zp, b):
        n = zp.shape[0]
        inv = 1.0 / n
        b[:, :] = 0.0
        for i in range(n):
            run = 0.0
            for j in range(n):
                run += zp[i, j] * inv
                b[i + 1, j + 1] = b[i, j + 1] + run
        wnn = b[n, n]
        for i in range(1, n):
            si = i * inv
            win = b[i, n]
            for j in range(1, n):
                tj = j * inv
                b[i, j] = b[i, j] - si * b[n, j] - tj * win + si * tj * wnn
        for k in range(n + 1):
            b[0, k] = 0.0
            b[n, k] = 0.0
            b[k, 0] = 0.0
            b[k, n] = 0.0

    @nb.njit(parallel=True, cache=True)
    def pillow_paths_numba(z):
        m, n, _ = z.shape
        out = np.empty((m, n + 1, n + 1))
        for p in nb.prange(m):
            _fill_pillow(z[p], out[p])
        return out

    @nb.njit(parallel=True, cache=True)
    def path_stats_numba(z, upper, lower, atoms):
        m, n, _ = z.shape
        exceed = np.empty(m)
        slack = np.empty(m)
        ito = np.empty(m)
        for p in nb.prange(m):
            b = np.empty((n + 1, n + 1))
            _fill_pillow(z[p], b)
            mx = -np.inf
            mn = np.inf
            acc = 0.0
            for i in range(n + 1):
                for j in range(n + 1):
                    v = b[i, j]
                    d = v - upper[i, j]
                    if d > mx:
                        mx = d
                    e = v - lower[i, j]
                    if e < mn:
                        mn = e
                    acc += v * atoms[i, j]
            exceed[p] = mx
            slack[p] = mn
            ito[p] = acc
        return exceed, slack, ito


def pillow_paths(z: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=float)
    if USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA):
        return pillow_paths_numba(z)
    return pillow_paths_numpy(z)


def path_stats(z, upper, lower, atoms, use_numba: bool | None = None):
    z = np.ascontiguousarray(z, dtype=float)
    upper = np.ascontiguousarray(upper, dtype=float)
    lower = np.ascontiguousarray(lower, dtype=float)
    atoms = np.ascontiguousarray(atoms, dtype=float)
    if USE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA):
        return path_stats_numba(z, upper, lower, atoms)
    return path_stats_numpy(z, upper, lower, atoms)
