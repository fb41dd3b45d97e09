"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (lines are repeated in the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from pillowbound.bounds import reconcile  # noqa: E402
from pillowbound.estimator import (  # noqa: E402
    cm_weight_mean,
    estimate_cm,
    estimate_contact_band,
    estimate_direct,
    estimate_refinement,
    gamma_sweep,
)
from pillowbound.gridfn import GridFn2D, measure_atoms, mixed_second_diff, outer, rkhs_inner  # noqa: E402
from pillowbound.majorant import product_majorant, project_polar_cone  # noqa: E402
from pillowbound.pillow_sim import generate_batch, pillow_cov  # noqa: E402
from pillowbound.trends import builtin_trend  # noqa: E402

from conftest import dual_nnls_oracle, parabola, random_bridge, random_trend, tent  # noqa: E402

RESULTS = []
SEED = 20240611


def record(k, passed, detail, elapsed, limit):
    ok = bool(passed) and elapsed < limit
    line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / limit {limit:.0f}s]"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_rkhs_norms():
    t0 = time.perf_counter()
    p = outer(parabola(256), parabola(256))
    err = abs(rkhs_inner(p, p) - 1 / 9)
    exact = all(rkhs_inner(g, g) == 1.0 for g in (outer(tent(n), tent(n)) for n in (2, 4, 8, 16, 64, 256)))
    record(1, err <= 1e-3 and exact, f"|norm^2 - 1/9| = {err:.2e}, tent products exact = {exact}",
           time.perf_counter() - t0, 1)


def test_criterion_02_pillow_law():
    t0 = time.perf_counter()
    n, count = 32, 20_000
    paths = generate_batch(n, count, seed=SEED).paths
    probe = [4, 10, 16, 22, 28]
    pts = [(i, j) for i in probe for j in probe]
    x = np.stack([paths[:, i, j] for i, j in pts], axis=1)
    worst = 0.0
    for a, (i, j) in enumerate(pts):
        for b in range(a, len(pts)):
            k, l = pts[b]
            prod = x[:, a] * x[:, b]
            z = abs(prod.mean() - pillow_cov(i / n, j / n, k / n, l / n)) / (prod.std() / math.sqrt(count))
            worst = max(worst, z)
    record(2, worst <= 5, f"max |cov - K| / SE = {worst:.2f} over 325 pairs", time.perf_counter() - t0, 30)


def test_criterion_03_projection():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    node_err = orth = pyth = 0.0
    min_atom = math.inf
    for _ in range(20):
        h = random_trend(rng, 8)
        pr = project_polar_cone(h)
        node_err = max(node_err, np.max(np.abs(pr.h_bar.values - dual_nnls_oracle(h))))
        nb = pr.norm**2
        orth = max(orth, abs(rkhs_inner(pr.h_bar, h - pr.h_bar)) / nb if nb > 0 else 0.0)
        min_atom = min(min_atom, measure_atoms(mixed_second_diff(pr.h_bar)).min())
        nh = rkhs_inner(h, h)
        pyth = max(pyth, abs(nh - nb - rkhs_inner(h - pr.h_bar, h - pr.h_bar)) / nh)
    ok = node_err <= 1e-6 and orth <= 1e-8 and min_atom >= -1e-8 and pyth <= 1e-8
    record(3, ok, f"oracle {node_err:.1e}, orth {orth:.1e}, min atom {min_atom:.1e}, pythagoras {pyth:.1e}",
           time.perf_counter() - t0, 60)


def test_criterion_04_product_majorant():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    n = 32
    worst = 0.0
    for _ in range(10):
        h1, h2 = random_bridge(rng, n), random_bridge(rng, n)
        pr = project_polar_cone(outer(h1, h2))
        worst = max(worst, np.max(np.abs(pr.h_bar.values - product_majorant(h1, h2).values)))
    record(4, worst <= 1e-5, f"max node diff {worst:.1e}", time.perf_counter() - t0, 120)


def _standard_reconcile():
    h = builtin_trend("parabola-product", 16, scale=0.5)
    return reconcile(GridFn2D.constant(0.5, 16), h, n_paths=100_000, seed=SEED)


def test_criterion_05_shift_sandwich():
    t0 = time.perf_counter()
    rep = _standard_reconcile()
    psi = rep.psi_hat
    lo = rep.shift_lower - 3 * math.hypot(psi.std_err, rep.shift_lower_se)
    hi = rep.shift_upper + 3 * math.hypot(psi.std_err, rep.shift_upper_se)
    record(5, lo <= psi.p_hat <= hi,
           f"{rep.shift_lower:.4f} <= psi {psi.p_hat:.4f} <= {rep.shift_upper:.4f} (theta {rep.theta:.3f})",
           time.perf_counter() - t0, 60)


def test_criterion_06_exponential_bounds():
    t0 = time.perf_counter()
    rep = _standard_reconcile()
    psi = rep.psi_hat
    lo = rep.exp_lower - 3 * math.hypot(psi.std_err, rep.exp_lower_se)
    hi = rep.exp_upper + 3 * math.hypot(psi.std_err, rep.exp_upper_se)
    record(6, lo <= psi.p_hat <= hi,
           f"{rep.exp_lower:.4f} <= psi {psi.p_hat:.4f} <= {rep.exp_upper:.4f}",
           time.perf_counter() - t0, 120)


def test_criterion_07_cameron_martin():
    t0 = time.perf_counter()
    n, paths = 16, 100_000
    rng = np.random.default_rng(SEED)
    configs = [
        (0.5, builtin_trend("parabola-product", n, scale=0.5)),
        (0.5, builtin_trend("tent-product", n, scale=0.8)),
        (0.4, builtin_trend("mixed-sign", n)),
        (0.6, builtin_trend("tent-product", n, scale=2.0)),
        (0.5, random_trend(rng, n, 0.1)),
    ]
    worst = 0.0
    for k, (c, h) in enumerate(configs):
        u = GridFn2D.constant(c, n)
        pr = project_polar_cone(h)
        d = estimate_direct(u, h, n_paths=paths, seed=SEED + k, stream_id=1)
        w = estimate_cm(u, h, pr.h_bar, n_paths=paths, seed=SEED + k, stream_id=4)
        worst = max(worst, abs(d.p_hat - w.p_hat) / math.hypot(d.std_err, w.std_err))
    mw = cm_weight_mean(builtin_trend("tent-product", n, scale=0.8), n_paths=paths, seed=SEED)
    zw = abs(mw.p_hat - 1) / mw.std_err
    record(7, worst <= 3 and zw <= 5, f"max |direct - CM| / SE = {worst:.2f}; mean weight z = {zw:.2f}",
           time.perf_counter() - t0, 120)


_SWEEP = {}


def _sweep():
    if not _SWEEP:
        t0 = time.perf_counter()
        n = 16
        u = GridFn2D.constant(0.5, n)
        h = builtin_trend("tent-product", n)
        pr = project_polar_cone(h)
        rows = gamma_sweep(u, h, [2, 4, 6, 8], n_paths=100_000, seed=SEED, pr=pr)
        band = estimate_contact_band(u, pr.contact_set, n_paths=100_000, seed=SEED, stream_id=1)
        _SWEEP.update(rows=rows, band=band, norm_sq=pr.norm**2, elapsed=time.perf_counter() - t0)
    return _SWEEP


def test_criterion_08_rate():
    sw = _sweep()
    rows, target = sw["rows"], sw["norm_sq"]
    last = rows[-1]
    close = abs(last.rate_hat - target) <= 0.15 * target
    gaps = [abs(r.rate_hat - target) for r in rows]
    monotone = all(b <= a + r.rate_std_err for a, b, r in zip(gaps, gaps[1:], rows[1:]))
    rates = ", ".join(f"{r.gamma:g}:{r.rate_hat:.3f}" for r in rows)
    record(8, close and monotone,
           f"rate at gamma=8 {last.rate_hat:.3f} vs {target:.3f} (15% needed), monotone {monotone} [{rates}]",
           sw["elapsed"], 300)


def test_criterion_09_remainder_bracket():
    sw = _sweep()
    band = sw["band"]
    bracket = band.log_p
    ok = all(r.remainder_hat <= bracket + 3 * math.hypot(r.std_err, band.log_std_err) for r in sw["rows"])
    worst = max(r.remainder_hat for r in sw["rows"])
    record(9, ok, f"max remainder {worst:.3f} <= log P(contact band) {bracket:.3f}", sw["elapsed"], 300)


def test_criterion_10_refinement():
    t0 = time.perf_counter()
    n = 32
    h = 0.5 * outer(parabola(n), parabola(n))
    ests = estimate_refinement(GridFn2D.constant(0.5, n), h, [8, 16, 32], n_paths=100_000, seed=SEED)
    ok = all(b.p_hat <= a.p_hat + 3 * math.hypot(a.std_err, b.std_err) for a, b in zip(ests, ests[1:]))
    seq = " >= ".join(f"{e.p_hat:.4f}" for e in ests)
    record(10, ok, f"psi_n for n = 8, 16, 32: {seq}", time.perf_counter() - t0, 180)


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
