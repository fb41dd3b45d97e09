"""Monte Carlo estimators of the discrete non-crossing probability of the pillow.

All estimators evaluate the event at the grid nodes only, so they estimate
the discrete probability P{B0 + h <= u at every node}, which is an upper
approximation of the continuum probability.

Reductions are done over per-path statistics concatenated in block order,
so results are bitwise reproducible for a fixed (seed, stream_id, block_size).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import DimensionError, DomainError
from .gridfn import GridFn2D, measure_atoms, mixed_second_diff, rkhs_inner, stieltjes_integral_2d
from .pillow_sim import DEFAULT_BLOCK, noise_blocks

__all__ = [
    "McEstimate",
    "SweepRow",
    "path_statistics",
    "estimate_direct",
    "estimate_cm",
    "cm_weight_mean",
    "estimate_band",
    "estimate_small_ball",
    "estimate_contact_band",
    "estimate_refinement",
    "gamma_sweep",
    "ito_sum_cells",
    "ito_sum_nodes",
]

MIN_PATHS = 100
MIN_ESS = 50.0


@dataclass
class McEstimate:
    p_hat: float
    std_err: float
    n_paths: int
    n_grid: int
    seed: int
    log_p_hat: float | None = None
    ess: float | None = None
    flags: list = field(default_factory=list)

    @property
    def ci95(self) -> tuple:
        return (max(0.0, self.p_hat - 1.96 * self.std_err), min(1.0, self.p_hat + 1.96 * self.std_err))

    @property
    def log_std_err(self) -> float:
        """Delta-method standard error of log p_hat."""
        if self.p_hat <= 0.0:
            return math.inf
        return self.std_err / self.p_hat

    @property
    def log_p(self) -> float:
        if self.log_p_hat is not None:
            return self.log_p_hat
        return math.log(self.p_hat) if self.p_hat > 0 else -math.inf

    def to_dict(self) -> dict:
        d = {
            "p_hat": self.p_hat,
            "std_err": self.std_err,
            "ci95": list(self.ci95),
            "n_paths": self.n_paths,
            "n_grid": self.n_grid,
            "seed": self.seed,
            "flags": list(self.flags),
        }
        if self.log_p_hat is not None:
            d["log_p_hat"] = self.log_p_hat
            d["log_std_err"] = self.log_std_err
        if self.ess is not None:
            d["ess"] = self.ess
        return d


@dataclass
class SweepRow:
    gamma: float
    log_psi_hat: float
    rate_hat: float
    remainder_hat: float
    std_err: float  # of log_psi_hat
    flags: list = field(default_factory=list)

    @property
    def rate_std_err(self) -> float:
        return 2.0 * self.std_err / self.gamma**2


def _check_args(n_paths, *fns):
    if n_paths < MIN_PATHS:
        raise DomainError(f"n_paths must be >= {MIN_PATHS}, got {n_paths}")
    n = fns[0].n
    for f in fns[1:]:
        if f.n != n:
            raise DimensionError(f"grid size mismatch: n={n} vs n={f.n}")
    return n


def path_statistics(n, upper, lower, atoms, n_paths, seed, stream_id=0, block_size=DEFAULT_BLOCK,
                    use_numba=None):
    """Per-path (max(B0-upper), min(B0-lower), sum(B0*atoms)) in block order."""
    shape = (n + 1, n + 1)
    upper = np.full(shape, np.inf) if upper is None else upper
    lower = np.full(shape, -np.inf) if lower is None else lower
    atoms = np.zeros(shape) if atoms is None else atoms
    exceed = np.empty(n_paths)
    slack = np.empty(n_paths)
    ito = np.empty(n_paths)
    for start, z in noise_blocks(n, n_paths, seed, stream_id, block_size):
        e, s, i = _kernels.path_stats(z, upper, lower, atoms, use_numba=use_numba)
        stop = start + len(z)
        exceed[start:stop], slack[start:stop], ito[start:stop] = e, s, i
    return exceed, slack, ito


def _binomial(hits, n_paths, n, seed, flags=()):
    k = int(np.count_nonzero(hits))
    p = k / n_paths
    se = math.sqrt(p * (1.0 - p) / n_paths)
    return McEstimate(p_hat=p, std_err=se, n_paths=n_paths, n_grid=n, seed=seed, flags=list(flags))


def _boundary_mask(n):
    m = np.zeros((n + 1, n + 1), dtype=bool)
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
    return m


def _deterministic_zero(n, upper, n_paths, seed):
    """B0 is pinned to 0 on the boundary: a negative upper limit there kills the event."""
    if np.any(upper[_boundary_mask(n)] < 0.0):
        return McEstimate(0.0, 0.0, n_paths, n, seed, log_p_hat=-math.inf,
                          flags=["deterministic-zero"])
    return None


def estimate_direct(u: GridFn2D, h: GridFn2D, n_paths: int = 100_000, seed: int = 0,
                    stream_id: int = 0, block_size: int = DEFAULT_BLOCK) -> McEstimate:
    """Fraction of paths with B0 + h <= u at every node."""
    n = _check_args(n_paths, u, h)
    upper = u.values - h.values
    zero = _deterministic_zero(n, upper, n_paths, seed)
    if zero is not None:
        return zero
    exceed, _, _ = path_statistics(n, upper, None, None, n_paths, seed, stream_id, block_size)
    return _binomial(exceed <= 0.0, n_paths, n, seed)


def _weighted(log_w, hits, n_paths, n, seed, flags):
    flags = list(flags)
    if not hits.any():
        flags.append("no-hits")
        return McEstimate(0.0, 0.0, n_paths, n, seed, log_p_hat=-math.inf, ess=0.0, flags=flags)
    lw = np.where(hits, log_w, -np.inf)
    top = float(lw.max())
    y = np.exp(lw - top)
    mean = float(y.mean())
    sd = float(y.std())
    ess = float(y.sum() ** 2 / np.dot(y, y))
    if ess < MIN_ESS:
        flags.append("low-ess")
    log_p = float(logsumexp(lw) - math.log(n_paths))
    scale = math.exp(top) if top < 700 else math.inf
    return McEstimate(
        p_hat=mean * scale,
        std_err=sd * scale / math.sqrt(n_paths),
        n_paths=n_paths,
        n_grid=n,
        seed=seed,
        log_p_hat=log_p,
        ess=ess,
        flags=flags,
    )


def estimate_cm(u: GridFn2D, h: GridFn2D, shift: GridFn2D, n_paths: int = 100_000, seed: int = 0,
                stream_id: int = 0, block_size: int = DEFAULT_BLOCK) -> McEstimate:
    """Importance-sampled estimate of P{B0 + h <= u} with the mean translated by ``shift``.

    Uses P{B0 + h <= u} = E[exp(<shift, B0> - ||shift||^2/2) 1{B0 + h - shift <= u}],
    where <shift, B0> = sum over cells of shift'' times the cell increment of B0.
    """
    n = _check_args(n_paths, u, h, shift)
    shift.require_h0("shift")
    upper = u.values - h.values + shift.values
    zero = _deterministic_zero(n, upper, n_paths, seed)
    if zero is not None:
        return zero
    atoms = measure_atoms(mixed_second_diff(shift))
    half_norm = 0.5 * rkhs_inner(shift, shift)
    exceed, _, ito = path_statistics(n, upper, None, atoms, n_paths, seed, stream_id, block_size)
    return _weighted(ito - half_norm, exceed <= 0.0, n_paths, n, seed, [])


def cm_weight_mean(shift: GridFn2D, n_paths: int = 100_000, seed: int = 0, stream_id: int = 0,
                   block_size: int = DEFAULT_BLOCK) -> McEstimate:
    """Mean Cameron-Martin weight with no indicator; its expectation is exactly 1."""
    n = _check_args(n_paths, shift)
    shift.require_h0("shift")
    atoms = measure_atoms(mixed_second_diff(shift))
    half_norm = 0.5 * rkhs_inner(shift, shift)
    _, _, ito = path_statistics(n, None, None, atoms, n_paths, seed, stream_id, block_size)
    w = np.exp(ito - half_norm)
    return McEstimate(float(w.mean()), float(w.std() / math.sqrt(n_paths)), n_paths, n, seed)


def estimate_band(l: GridFn2D, u: GridFn2D, n_paths: int = 100_000, seed: int = 0,
                  stream_id: int = 0, block_size: int = DEFAULT_BLOCK) -> McEstimate:
    """Fraction of paths with l <= B0 <= u at every node."""
    n = _check_args(n_paths, l, u)
    gap = u.values - l.values
    if np.any(gap < 0):
        i, j = np.unravel_index(int(np.argmin(gap)), gap.shape)
        raise DomainError(f"lower boundary exceeds upper boundary at node ({i}, {j})")
    bnd = _boundary_mask(n)
    if np.any(u.values[bnd] < 0.0) or np.any(l.values[bnd] > 0.0):
        return McEstimate(0.0, 0.0, n_paths, n, seed, log_p_hat=-math.inf, flags=["deterministic-zero"])
    exceed, slack, _ = path_statistics(n, u.values, l.values, None, n_paths, seed, stream_id, block_size)
    return _binomial((exceed <= 0.0) & (slack >= 0.0), n_paths, n, seed)


def estimate_small_ball(eps: float, n: int = 16, n_paths: int = 100_000, seed: int = 0,
                        stream_id: int = 0, block_size: int = DEFAULT_BLOCK) -> McEstimate:
    """Fraction of paths with max over nodes of |B0| < eps."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    if n_paths < MIN_PATHS:
        raise DomainError(f"n_paths must be >= {MIN_PATHS}, got {n_paths}")
    c = np.full((n + 1, n + 1), float(eps))
    exceed, slack, _ = path_statistics(n, c, -c, None, n_paths, seed, stream_id, block_size)
    return _binomial((exceed < 0.0) & (slack > 0.0), n_paths, n, seed)


def estimate_contact_band(u: GridFn2D, contact_set, n_paths: int = 100_000, seed: int = 0,
                          stream_id: int = 0, block_size: int = DEFAULT_BLOCK) -> McEstimate:
    """P{B0 <= u on the contact set}; the upper bracket for the large-gamma remainder."""
    n = _check_args(n_paths, u)
    upper = np.full((n + 1, n + 1), np.inf)
    idx = np.asarray(contact_set, dtype=int).reshape(-1, 2)
    upper[idx[:, 0], idx[:, 1]] = u.values[idx[:, 0], idx[:, 1]]
    zero = _deterministic_zero(n, np.where(np.isinf(upper), 0.0, upper), n_paths, seed)
    if zero is not None:
        return zero
    exceed, _, _ = path_statistics(n, upper, None, None, n_paths, seed, stream_id, block_size)
    return _binomial(exceed <= 0.0, n_paths, n, seed)


def estimate_refinement(u: GridFn2D, h: GridFn2D, levels, n_paths: int = 100_000, seed: int = 0,
                        stream_id: int = 0, block_size: int = DEFAULT_BLOCK) -> list:
    """Direct estimates on nested grids sharing the same fine-grid paths.

    ``u`` and ``h`` live on the finest grid; every level must divide its n.
    Coarse events contain fine events path by path, so estimates are
    non-increasing in refinement.
    """
    n = _check_args(n_paths, u, h)
    for m in levels:
        if n % m:
            raise DomainError(f"level {m} does not divide the fine grid n={n}")
    upper = u.values - h.values
    hits = {m: np.zeros(n_paths, dtype=bool) for m in levels}
    for start, z in noise_blocks(n, n_paths, seed, stream_id, block_size):
        paths = _kernels.pillow_paths(z)
        for m in levels:
            k = n // m
            sub = paths[:, ::k, ::k] - upper[None, ::k, ::k]
            hits[m][start:start + len(z)] = sub.reshape(len(z), -1).max(axis=1) <= 0.0
    return [_binomial(hits[m], n_paths, m, seed) for m in levels]


def gamma_sweep(u: GridFn2D, h: GridFn2D, gammas, n_paths: int = 100_000, seed: int = 0,
                pr=None, block_size: int = DEFAULT_BLOCK, tol: float = 1e-8) -> list:
    """Rows (gamma, log psi, rate, remainder) for the trend gamma*h.

    Each row uses the importance shift gamma*h_bar where h_bar is the
    polar-cone projection of h.  All rows share the same noise stream.
    """
    from .majorant import project_polar_cone

    h.require_h0("trend")
    gammas = [float(g) for g in gammas]
    if any(g <= 0 for g in gammas) or any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise DomainError("gammas must be positive and increasing")
    if pr is None:
        pr = project_polar_cone(h, tol=tol)
    norm_sq = pr.norm**2
    integral = stieltjes_integral_2d(u, mixed_second_diff(pr.h_bar))
    rows = []
    for g in gammas:
        est = estimate_cm(u, g * h, g * pr.h_bar, n_paths=n_paths, seed=seed, block_size=block_size)
        lp = est.log_p
        rows.append(SweepRow(
            gamma=g,
            log_psi_hat=lp,
            rate_hat=-2.0 * lp / g**2,
            remainder_hat=lp + 0.5 * g**2 * norm_sq - g * integral,
            std_err=est.log_std_err,
            flags=list(est.flags),
        ))
    return rows


# ---------------------------------------------------------------------------
# two evaluations of the discrete stochastic integral <g, path>


def ito_sum_cells(path: GridFn2D, g: GridFn2D) -> float:
    """Sum over cells of g'' times the mixed increment of the path."""
    v = path.values
    inc = v[1:, 1:] - v[1:, :-1] - v[:-1, 1:] + v[:-1, :-1]
    return float(np.sum(mixed_second_diff(g).values * inc))


def ito_sum_nodes(path: GridFn2D, g: GridFn2D) -> float:
    """Sum over nodes of the path times the atoms of the measure of g''."""
    return stieltjes_integral_2d(path, mixed_second_diff(g))
