"""Analytic upper and lower bounds for the pillow non-crossing probability.

The bounds need three ingredients: the minimal-norm majorant ``h_bar`` of the
trend (and its mirror, the minimal-norm minorant), the measure generated by
the mixed derivative of ``h_bar``, and a few Monte Carlo probabilities that
have no closed form (psi(u;0), psi(u; h - h_bar), band probabilities).
:func:`reconcile` assembles everything into a :class:`BoundReport` and
checks it against direct and importance-sampled estimates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError
from .estimator import McEstimate, estimate_band, estimate_cm, estimate_direct
from .gridfn import (
    GridFn1D,
    GridFn2D,
    corner_combination,
    edge_mass,
    measure_atoms,
    mixed_second_diff,
    outer,
    rkhs_norm,
    stieltjes_integral_1d,
    stieltjes_integral_2d,
)
from .majorant import ProjectionResult, least_concave_majorant, product_majorant, project_W, project_polar_cone
from .pillow_sim import DEFAULT_BLOCK

log = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)

__all__ = [
    "BoundReport",
    "Psi0Bound",
    "normal_cdf",
    "normal_pdf",
    "normal_quantile",
    "shift_bounds",
    "diff_bounds",
    "coarse_diff_bound",
    "exp_upper_bound",
    "exp_lower_bound",
    "constant_boundary_upper",
    "psi0_upper_bound",
    "psi0_product_family_bound",
    "default_candidates",
    "product_bounds",
    "product_asymptote",
    "reconcile",
]


def normal_cdf(x: float) -> float:
    """Standard normal distribution function (Cephes ndtr, absolute error below 1e-16)."""
    return float(ndtr(x))


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / SQRT_2PI


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf`; returns -inf / +inf at p = 0 / 1."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise DomainError(f"probability must lie in [0,1], got {p!r}")
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return math.inf
    return float(ndtri(p))


def _p(x) -> float:
    return x.p_hat if isinstance(x, McEstimate) else float(x)


def shift_bounds(psi0: float, norm_low: float, norm_up: float) -> tuple:
    """(Phi(theta - ||h_bar||), Phi(theta + ||h_up||)) with theta = Phi^-1(psi0)."""
    if not 0.0 < psi0 < 1.0:
        raise DomainError(f"psi(u;0) must lie in (0,1), got {psi0!r}")
    if norm_low < 0 or norm_up < 0:
        raise DomainError("norms must be non-negative")
    theta = normal_quantile(psi0)
    return normal_cdf(theta - norm_low), normal_cdf(theta + norm_up)


def diff_bounds(norm_low: float, norm_up: float) -> tuple:
    """Bounds on psi(u;h) - psi(u;0): (-||h_bar||/sqrt(2 pi), ||h_up||/sqrt(2 pi))."""
    if norm_low < 0 or norm_up < 0:
        raise DomainError("norms must be non-negative")
    return -norm_low / SQRT_2PI, norm_up / SQRT_2PI


def coarse_diff_bound(norm_h: float) -> tuple:
    """The cruder bound |psi(u;h) - psi(u;0)| <= 2 Phi(||h||/2) - 1 <= ||h||/sqrt(2 pi)."""
    return 2.0 * normal_cdf(norm_h / 2.0) - 1.0, norm_h / SQRT_2PI


def _stieltjes_with_check(v: GridFn2D, pr: ProjectionResult) -> float:
    f = mixed_second_diff(pr.h_bar)
    value = stieltjes_integral_2d(v, f)
    em = edge_mass(f)
    if em > 0.01 * max(abs(value), 1e-300):
        log.warning("boundary atoms carry %.3g of the measure (integral %.3g)", em, value)
    return value


def exp_upper_bound(u: GridFn2D, h: GridFn2D, pr: ProjectionResult, psi_residual=1.0) -> float:
    """psi(u; h - h_bar) * exp(-||h_bar||^2/2 + integral of u against d h_bar'').

    ``psi_residual`` is an estimate of psi(u; h - h_bar) (float or McEstimate);
    the default 1 gives the relaxed bound.
    """
    if pr.h_bar.n != u.n or h.n != u.n:
        raise DomainError("grid size mismatch")
    integral = _stieltjes_with_check(u, pr)
    return _p(psi_residual) * math.exp(-0.5 * pr.norm**2 + integral)


def exp_lower_bound(l: GridFn2D, u: GridFn2D, pr: ProjectionResult, band) -> float:
    """P{l <= B0 <= u} * exp(-||h_bar||^2/2 + integral of l against d h_bar'')."""
    if np.any(l.values > u.values):
        raise DomainError("lower boundary exceeds upper boundary")
    integral = _stieltjes_with_check(l, pr)
    return _p(band) * math.exp(-0.5 * pr.norm**2 + integral)


def constant_boundary_upper(c: float, pr: ProjectionResult, psi_residual=1.0) -> float:
    """Upper bound for u = c using the corner combination of h_bar''."""
    if c <= 0:
        raise DomainError("constant boundary must be positive")
    f = mixed_second_diff(pr.h_bar)
    corner = corner_combination(f)
    mass = float(measure_atoms(f).sum())
    if abs(corner - mass) > 1e-10 * max(1.0, abs(corner)):
        raise AssertionError(f"corner combination {corner!r} != total mass {mass!r}")
    return _p(psi_residual) * math.exp(-0.5 * pr.norm**2 + c * corner)


# ---------------------------------------------------------------------------
# upper bound for psi(u; 0)


@dataclass
class Psi0Bound:
    value: float
    argmin: int
    ratios: list
    label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def default_candidates(n: int) -> list:
    """Built-in family of product concave trends: skewed tents and parabolas."""
    s = np.arange(n + 1) / n
    factors = []
    for a in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
        factors.append((f"tent{a}", np.minimum(s / a, (1 - s) / (1 - a))))
    for p in (1.0, 2.0, 0.5):
        factors.append((f"parabola^{p}", (s * (1 - s)) ** p))
    out = []
    for name1, f1 in factors:
        for name2, f2 in factors:
            v = np.outer(f1, f2)
            v[0, :] = v[-1, :] = v[:, 0] = v[:, -1] = 0.0
            out.append((f"{name1}x{name2}", GridFn2D(n, v)))
    return out


def psi0_upper_bound(u: GridFn2D, candidates, tol: float = 1e-8) -> Psi0Bound:
    """min over candidates of Phi(integral of u against d h_bar'' / ||h_bar||).

    ``candidates`` is a list of GridFn2D or of (label, GridFn2D) pairs.  Ties
    go to the first index.
    """
    ratios = []
    labels = []
    for k, cand in enumerate(candidates):
        label, g = cand if isinstance(cand, tuple) else (str(k), cand)
        g.require_h0("candidate")
        pr = project_polar_cone(g, tol=tol)
        labels.append(label)
        if pr.norm <= 0.0:
            ratios.append(math.nan)
            continue
        ratios.append(stieltjes_integral_2d(u, mixed_second_diff(pr.h_bar)) / pr.norm)
    valid = [r for r in ratios if not math.isnan(r)]
    if not valid:
        raise DomainError("every candidate projects to zero; no bound available")
    best = int(np.nanargmin(np.asarray(ratios, dtype=float)))
    return Psi0Bound(value=normal_cdf(ratios[best]), argmin=best, ratios=ratios, label=labels[best])


def psi0_product_family_bound(c: float, factors) -> dict:
    """Bound for u = c over products of supplied 1D concave functions.

    Returns the minimum of Phi(c * J1 * J2 / (||f1|| ||f2||)), with Ji the
    total slope drop of fi, and the alternate form Phi(c^2 (J/||f||^2)^2)
    taken over single factors.
    """
    stats = []
    for f in factors:
        t = least_concave_majorant(f)
        one = GridFn1D(f.n, np.ones(f.n + 1))
        stats.append((stieltjes_integral_1d(one, t.h_tilde), t.norm))
    best = math.inf
    for j1, n1 in stats:
        for j2, n2 in stats:
            if n1 > 0 and n2 > 0:
                best = min(best, normal_cdf(c * j1 * j2 / (n1 * n2)))
    alternate = min(
        (normal_cdf(c**2 * (j / nrm**2) ** 2) for j, nrm in stats if nrm > 0), default=math.nan
    )
    return {"value": best, "alternate": alternate}


# ---------------------------------------------------------------------------
# product trends


def product_bounds(u1, u2, l1, l2, h1, h2, psi_residual=1.0, band=None) -> dict:
    """Bounds for h = h1 x h2 and u = u1 x u2 from 1D concave majorants.

    Raises DomainError when the product of the majorants does not dominate
    h1 x h2 (the shortcut is then not the projection).
    """
    tilde = product_majorant(h1, h2)
    t1 = least_concave_majorant(h1)
    t2 = least_concave_majorant(h2)
    norm_sq = t1.norm**2 * t2.norm**2
    iu = stieltjes_integral_1d(u1, t1.h_tilde) * stieltjes_integral_1d(u2, t2.h_tilde)
    il = stieltjes_integral_1d(l1, t1.h_tilde) * stieltjes_integral_1d(l2, t2.h_tilde)
    f = mixed_second_diff(tilde)
    iu_2d = stieltjes_integral_2d(outer(u1, u2), f)
    il_2d = stieltjes_integral_2d(outer(l1, l2), f)
    rel = max(abs(iu - iu_2d) / max(1.0, abs(iu)), abs(il - il_2d) / max(1.0, abs(il)))
    if rel > 1e-8:
        raise AssertionError(f"2D Stieltjes integral does not factorize (rel diff {rel:.3g})")
    out = {
        "norm_sq": norm_sq,
        "integral_u": iu,
        "integral_l": il,
        "upper_exponent": -0.5 * norm_sq + iu,
        "lower_exponent": -0.5 * norm_sq + il,
        "upper": _p(psi_residual) * math.exp(-0.5 * norm_sq + iu),
        "factorization_rel_diff": rel,
    }
    if band is not None:
        out["lower"] = _p(band) * math.exp(-0.5 * norm_sq + il)
    return out


def product_asymptote(u1: GridFn1D, u2: GridFn1D, h1: GridFn1D, h2: GridFn1D, gamma: float) -> float:
    """Leading-order log psi(u1 x u2; gamma h1 x h2) for large gamma."""
    for k, ui in enumerate((u1, u2), 1):
        if ui.values.min() <= 0:
            raise DomainError(f"u{k} must be bounded below by a positive constant")
    t1 = least_concave_majorant(h1)
    t2 = least_concave_majorant(h2)
    lin = stieltjes_integral_1d(u1, t1.h_tilde) * stieltjes_integral_1d(u2, t2.h_tilde)
    return -0.5 * gamma**2 * t1.norm**2 * t2.norm**2 + gamma * lin


# ---------------------------------------------------------------------------
# report


@dataclass
class BoundReport:
    psi0_hat: McEstimate
    theta: float
    theta_ci95: tuple
    norm_h: float
    norm_h_low: float
    norm_h_up: float
    shift_lower: float
    shift_upper: float
    shift_lower_se: float
    shift_upper_se: float
    diff_lower: float
    diff_upper: float
    coarse_diff: tuple
    exp_upper: float
    exp_upper_se: float
    exp_lower: float
    exp_lower_se: float
    stieltjes_I: float
    stieltjes_l: float
    corner_term: float | None
    psi_residual: McEstimate
    band: McEstimate
    psi_hat: McEstimate | None = None
    psi_cm: McEstimate | None = None
    checks: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {}
        for k, v in self.__dict__.items():
            if isinstance(v, McEstimate):
                d[k] = v.to_dict()
            elif isinstance(v, tuple):
                d[k] = list(v)
            else:
                d[k] = v
        return d


def _within(lo, x, hi, se):
    return bool(lo - 3.0 * se <= x <= hi + 3.0 * se)


def reconcile(u: GridFn2D, h: GridFn2D, l: GridFn2D | None = None, n_paths: int = 100_000,
              seed: int = 0, block_size: int = DEFAULT_BLOCK, tol: float = 1e-8,
              estimate_psi: bool = True) -> BoundReport:
    """Evaluate every bound for (u, h) and, optionally, check them against MC estimates.

    ``l`` defaults to -u.  Independent estimates use distinct noise streams:
    psi(u;0) stream 0, psi(u;h) direct 1, psi(u;h-h_bar) 2, band 3, CM 4.
    """
    h.require_h0("trend")
    l = -u if l is None else l
    n = u.n
    kw = dict(n_paths=n_paths, seed=seed, block_size=block_size)
    flags = []

    pr = project_polar_cone(h, tol=tol)
    pw = project_W(h, tol=tol)
    norm_h = rkhs_norm(h)
    zero = GridFn2D.zeros(n)

    psi0 = estimate_direct(u, zero, stream_id=0, **kw)
    p0 = psi0.p_hat
    if 0.0 < p0 < 1.0:
        theta = normal_quantile(p0)
        dtheta = psi0.std_err / normal_pdf(theta)
        theta_ci = (theta - 1.96 * dtheta, theta + 1.96 * dtheta)
        s_lo, s_hi = shift_bounds(p0, pr.norm, pw.norm)
        # delta method through theta
        s_lo_se = normal_pdf(theta - pr.norm) * dtheta
        s_hi_se = normal_pdf(theta + pw.norm) * dtheta
    else:
        flags.append("psi0-degenerate")
        theta = normal_quantile(p0)
        theta_ci = (theta, theta)
        s_lo, s_hi = (p0, p0) if p0 == 0.0 else (normal_cdf(theta), 1.0)
        s_lo_se = s_hi_se = 0.0
    d_lo, d_hi = diff_bounds(pr.norm, pw.norm)

    residual = estimate_direct(u, h - pr.h_bar, stream_id=2, **kw)
    band = estimate_band(l, u, stream_id=3, **kw)
    integral_u = _stieltjes_with_check(u, pr)
    integral_l = _stieltjes_with_check(l, pr)
    up_factor = math.exp(-0.5 * pr.norm**2 + integral_u)
    lo_factor = math.exp(-0.5 * pr.norm**2 + integral_l)
    corner = None
    if np.all(u.values == u.values[0, 0]) and u.values[0, 0] > 0:
        corner = corner_combination(mixed_second_diff(pr.h_bar))
    if edge_mass(mixed_second_diff(pr.h_bar)) > 0:
        flags.append("edge-mass")

    report = BoundReport(
        psi0_hat=psi0,
        theta=theta,
        theta_ci95=theta_ci,
        norm_h=norm_h,
        norm_h_low=pr.norm,
        norm_h_up=pw.norm,
        shift_lower=s_lo,
        shift_upper=s_hi,
        shift_lower_se=s_lo_se,
        shift_upper_se=s_hi_se,
        diff_lower=d_lo,
        diff_upper=d_hi,
        coarse_diff=coarse_diff_bound(norm_h),
        exp_upper=residual.p_hat * up_factor,
        exp_upper_se=residual.std_err * up_factor,
        exp_lower=band.p_hat * lo_factor,
        exp_lower_se=band.std_err * lo_factor,
        stieltjes_I=integral_u,
        stieltjes_l=integral_l,
        corner_term=corner,
        psi_residual=residual,
        band=band,
        flags=flags,
    )
    if not estimate_psi:
        return report

    psi = estimate_direct(u, h, stream_id=1, **kw)
    cm = estimate_cm(u, h, pr.h_bar, stream_id=4, **kw)
    report.psi_hat, report.psi_cm = psi, cm
    x = psi.p_hat
    report.checks = {
        "shift_sandwich": _within(s_lo, x, s_hi, math.hypot(psi.std_err, max(s_lo_se, s_hi_se))),
        "diff_bounds": _within(p0 + d_lo, x, p0 + d_hi, math.hypot(psi.std_err, psi0.std_err)),
        "exp_upper": _within(-math.inf, x, report.exp_upper, math.hypot(psi.std_err, report.exp_upper_se)),
        "exp_lower": _within(report.exp_lower, x, math.inf, math.hypot(psi.std_err, report.exp_lower_se)),
        "direct_vs_cm": bool(abs(x - cm.p_hat) <= 3.0 * math.hypot(psi.std_err, cm.std_err)),
    }
    return report
