"""Minimal-norm majorants: the polar-cone projection and the 1D concave majorant.

The 2D problem ``min ||g|| s.t. g >= h, g = 0 on the boundary`` is a convex QP
over the interior node values.  With ``Q`` the Gram operator from
:func:`pillowbound.gridfn.rkhs_gram` the KKT conditions read

    Q g = mu,  mu >= 0,  g >= h,  mu * (g - h) = 0,

and ``Q g`` is exactly the vector of interior atoms of the measure generated
by the mixed derivative of ``g``.  The multipliers are therefore the discrete
measure, and dual feasibility is measure positivity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionError, DomainError, SolverError
from .gridfn import (
    GridFn1D,
    GridFn2D,
    measure_atoms,
    mixed_second_diff,
    outer,
    rkhs_gram,
    rkhs_inner,
    rkhs_norm,
    rkhs_norm1d,
)

log = logging.getLogger(__name__)

__all__ = [
    "MajorantResult1D",
    "ProjectionResult",
    "least_concave_majorant",
    "project_polar_cone",
    "project_W",
    "product_majorant",
    "verify_projection",
    "feasible_start",
    "projected_gradient",
]


@dataclass
class MajorantResult1D:
    h_tilde: GridFn1D
    norm: float
    knots: list


@dataclass
class ProjectionResult:
    """Projection of ``h`` onto the polar cone of V (``kind='V'``) or of W (``kind='W'``).

    ``h_bar`` is the projection (the minimal-norm majorant for ``kind='V'``,
    the minimal-norm minorant for ``kind='W'``) and ``v_part = h - h_bar``.
    """

    h: GridFn2D
    h_bar: GridFn2D
    v_part: GridFn2D
    norm: float
    multipliers: np.ndarray
    contact_set: np.ndarray
    iterations: int
    residual: float
    method: str = "active-set"
    kind: str = "V"
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.h.n,
            "norm": self.norm,
            "norm_sq": self.norm**2,
            "residual": self.residual,
            "iterations": self.iterations,
            "method": self.method,
            "contact_set": self.contact_set.tolist(),
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# 1D least concave majorant


def _upper_hull(y: np.ndarray, rel_tol: float = 1e-13) -> list:
    """Indices of the upper convex hull of (i, y_i); collinear points are kept."""
    scale = max(1.0, float(np.abs(y).max()))
    hull: list = []
    for k in range(len(y)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # > 0: j lies strictly below the chord from i to k
            cross = (j - i) * (y[k] - y[i]) - (y[j] - y[i]) * (k - i)
            if cross > rel_tol * scale * (k - i) ** 2:
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


def least_concave_majorant(h: GridFn1D) -> MajorantResult1D:
    h.require_h0("trend")
    knots = _upper_hull(h.values)
    idx = np.arange(h.n + 1)
    vals = np.interp(idx, knots, h.values[knots])
    vals[knots] = h.values[knots]
    h_tilde = GridFn1D(h.n, vals)
    return MajorantResult1D(h_tilde=h_tilde, norm=rkhs_norm1d(h_tilde), knots=list(knots))


def _row_majorant(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    idx = np.arange(v.shape[1])
    for r in range(v.shape[0]):
        knots = _upper_hull(v[r])
        out[r] = np.interp(idx, knots, v[r, knots])
    return np.maximum(out, v)


def feasible_start(h: GridFn2D) -> np.ndarray:
    """Row/column concave-majorant envelope of max(h, 0); always >= h, zero on the boundary."""
    g = np.maximum(h.values, 0.0)
    for _ in range(2):
        g = _row_majorant(g)
        g = _row_majorant(g.T).T
    return g


# ---------------------------------------------------------------------------
# 2D projection


def _kkt_residual(Q, x, b, mu_scale):
    mu = Q @ x
    infeas = max(0.0, float(np.max(b - x))) if len(x) else 0.0
    neg_mu = max(0.0, float(-np.min(mu))) / mu_scale if len(x) else 0.0
    slack = float(np.max(np.abs(mu * (x - b)))) / mu_scale if len(x) else 0.0
    return max(infeas, neg_mu, slack), mu


def _active_set(Q, b, x0, tol, max_iter):
    """Primal active-set method for min 1/2 x'Qx s.t. x >= b from a feasible x0."""
    m = len(b)
    x = x0.copy()
    bscale = max(1.0, float(np.abs(b).max(initial=0.0)))
    mu_scale = max(1.0, float(Q.diagonal().max()) * bscale)
    work = x - b <= tol * bscale
    x[work] = b[work]
    drop_all = True
    it = 0
    for it in range(1, max_iter + 1):
        free = ~work
        y = np.where(work, b, 0.0)
        if free.any():
            rhs = -(Q[free][:, work] @ b[work]) if work.any() else np.zeros(free.sum())
            y[free] = spla.spsolve(Q[free][:, free].tocsc(), rhs) if free.sum() > 1 else (
                rhs / Q[free][:, free].toarray().ravel()
            )
        p = y - x
        if np.max(np.abs(p), initial=0.0) <= 1e-14 * bscale:
            mu = Q @ x
            mu_w = np.where(work, mu, np.inf)
            if not work.any() or mu_w.min() >= -tol * mu_scale:
                return x, it
            if drop_all:
                work &= ~(mu_w < -tol * mu_scale)
            else:
                work[int(np.argmin(mu_w))] = False
            continue
        blocking = free & (p < 0)
        alpha = 1.0
        if blocking.any():
            ratios = np.full(m, np.inf)
            ratios[blocking] = (b[blocking] - x[blocking]) / p[blocking]
            ratios = np.maximum(ratios, 0.0)
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha = ratios[k]
                if alpha == 0.0:
                    # degenerate step: be conservative with future drops
                    drop_all = False
                hit = blocking & (ratios <= alpha + 1e-15)
                x = x + alpha * p
                x[hit] = b[hit]
                work |= hit
                continue
        x = y
    raise SolverError(f"active set did not converge in {max_iter} iterations", iterations=it,
                      residual=_kkt_residual(Q, x, b, mu_scale)[0])


def projected_gradient(Q, b, x0, tol=1e-10, max_iter=200_000):
    """Accelerated projected gradient on the box x >= b.

    Fallback for the active-set method.  A single box needs no Dykstra
    correction step, the projection is exact clipping.
    """
    lip = float(spla.eigsh(Q, k=1, which="LA", return_eigenvectors=False)[0]) * 1.01
    x = np.maximum(x0, b)
    z = x.copy()
    t = 1.0
    bscale = max(1.0, float(np.abs(b).max(initial=0.0)))
    for it in range(1, max_iter + 1):
        x_new = np.maximum(z - (Q @ z) / lip, b)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        if np.max(np.abs(x_new - x)) <= tol * bscale:
            return x_new, it
        x, t = x_new, t_new
    return x, max_iter


def project_polar_cone(h: GridFn2D, tol: float = 1e-8, max_iter: int = 20_000) -> ProjectionResult:
    """Solve min ||g|| over g >= h, g vanishing on the boundary."""
    h.require_h0("trend")
    n = h.n
    Q = rkhs_gram(n)
    b = h.interior.ravel().copy()
    x0 = feasible_start(h)[1:-1, 1:-1].ravel()
    method = "active-set"
    try:
        x, iters = _active_set(Q, b, x0, tol * 1e-3, max_iter)
    except SolverError as exc:
        log.warning("active set failed (%s); falling back to projected gradient", exc)
        method = "projected-gradient"
        x, iters = projected_gradient(Q, b, x0)
        # polish on the detected contact set
        try:
            x, more = _active_set(Q, b, x, tol * 1e-3, max_iter)
            iters += more
            method = "projected-gradient+active-set"
        except SolverError:
            pass
    bscale = max(1.0, float(np.abs(b).max(initial=0.0)))
    mu_scale = max(1.0, float(Q.diagonal().max()) * bscale)
    residual, _ = _kkt_residual(Q, x, b, mu_scale)
    if residual > tol:
        raise SolverError(f"projection residual {residual:.3g} exceeds tol {tol:.3g}",
                          residual=residual, iterations=iters)
    return _assemble(h, x, iters, residual, method, tol)


def _assemble(h, x, iters, residual, method, tol, kind="V"):
    n = h.n
    g = np.zeros((n + 1, n + 1))
    g[1:-1, 1:-1] = x.reshape(n - 1, n - 1)
    h_bar = GridFn2D(n, g)
    v_part = GridFn2D(n, h.values - g)
    mult = measure_atoms(mixed_second_diff(h_bar))
    scale = max(1.0, float(np.abs(h.values).max()))
    contact = np.argwhere(np.abs(g - h.values) <= tol * scale)
    return ProjectionResult(
        h=h,
        h_bar=h_bar,
        v_part=v_part,
        norm=rkhs_norm(h_bar),
        multipliers=mult,
        contact_set=contact,
        iterations=iters,
        residual=residual,
        method=method,
        kind=kind,
    )


def project_W(h: GridFn2D, tol: float = 1e-8, max_iter: int = 20_000) -> ProjectionResult:
    """Mirror problem min ||g|| over g <= h, via reflection of the polar-cone projection."""
    pr = project_polar_cone(-h, tol=tol, max_iter=max_iter)
    return ProjectionResult(
        h=h,
        h_bar=-pr.h_bar,
        v_part=-pr.v_part,
        norm=pr.norm,
        multipliers=pr.multipliers,
        contact_set=pr.contact_set,
        iterations=pr.iterations,
        residual=pr.residual,
        method=pr.method,
        kind="W",
    )


def product_majorant(h1: GridFn1D, h2: GridFn1D) -> GridFn2D:
    """Projection of h1 x h2 when the product of the concave majorants dominates it."""
    h1.require_h0("h1")
    h2.require_h0("h2")
    if h1.n != h2.n:
        raise DimensionError(f"grid size mismatch: n={h1.n} vs n={h2.n}")
    t1 = least_concave_majorant(h1).h_tilde
    t2 = least_concave_majorant(h2).h_tilde
    prod = outer(t1, t2)
    base = outer(h1, h2).values
    gap = prod.values - base
    scale = max(1.0, float(np.abs(base).max()))
    if gap.min() < -1e-12 * scale:
        i, j = np.unravel_index(int(np.argmin(gap)), gap.shape)
        raise DomainError(
            f"product of concave majorants falls below h1 x h2 at node ({i}, {j}) by "
            f"{-gap[i, j]:.3g}; use project_polar_cone instead"
        )
    return prod


def verify_projection(h: GridFn2D, pr: ProjectionResult, tol: float = 1e-8) -> dict:
    """Certificate checks for a projection; returns {check: {"passed", "residual"}}."""
    if h.n != pr.h_bar.n:
        raise DimensionError(f"grid size mismatch: n={h.n} vs n={pr.h_bar.n}")
    sign = 1.0 if pr.kind == "V" else -1.0
    hv = sign * h.values
    g = sign * pr.h_bar.values
    v = sign * pr.v_part.values
    g_fn = GridFn2D(h.n, g)
    atoms = measure_atoms(mixed_second_diff(g_fn))
    norm_sq = rkhs_inner(g_fn, g_fn)
    scale = max(1.0, float(np.abs(hv).max()))
    contact = np.abs(g - hv) <= tol * scale
    res = {
        "feasibility": float(max(0.0, np.max(hv - g))),
        "v_membership": float(max(0.0, np.max(v))),
        "decomposition": float(np.max(np.abs(hv - g - v))),
        "orthogonality": abs(rkhs_inner(g_fn, GridFn2D(h.n, v))),
        "measure_nonneg": float(max(0.0, -atoms.min())),
        "complementary_slackness": float(np.max(np.abs(np.where(contact, 0.0, atoms)))),
    }
    limits = {
        "feasibility": tol * scale,
        "v_membership": tol * scale,
        "decomposition": 1e-12 * scale,
        "orthogonality": tol * norm_sq + 1e-14,
        "measure_nonneg": tol,
        "complementary_slackness": tol,
    }
    return {k: {"passed": bool(res[k] <= limits[k]), "residual": res[k]} for k in res}
