import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pillowbound.errors import DomainError, SolverError
from pillowbound.gridfn import (
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
from pillowbound.majorant import (
    feasible_start,
    least_concave_majorant,
    product_majorant,
    project_polar_cone,
    project_W,
    projected_gradient,
    verify_projection,
)
from pillowbound.trends import builtin_trend

from conftest import dual_nnls_oracle, enumeration_oracle, parabola, random_bridge, random_trend, tent


def brute_lcm(y):
    """Least concave majorant at each node: best chord value over all brackets j <= i <= k."""
    m = len(y)
    out = np.array(y, dtype=float)
    for i in range(m):
        for j in range(i + 1):
            for k in range(i, m):
                if k > j:
                    out[i] = max(out[i], y[j] + (y[k] - y[j]) * (i - j) / (k - j))
    return out


class TestLeastConcaveMajorant:
    def test_concave_is_fixed(self):
        h = parabola(32)
        res = least_concave_majorant(h)
        np.testing.assert_array_equal(res.h_tilde.values, h.values)
        assert res.knots == list(range(33))

    def test_four_vertex(self):
        h = builtin_trend("four-vertex", 4)
        np.testing.assert_allclose(h.values, [0, 0.05, 0.1, 0.5, 0])
        res = least_concave_majorant(h)
        assert res.knots == [0, 3, 4]
        assert res.h_tilde.values[2] == pytest.approx(1 / 3, abs=1e-15)

    def test_four_vertex_fine_grid(self):
        res = least_concave_majorant(builtin_trend("four-vertex", 64))
        assert res.h_tilde.values[32] == pytest.approx(1 / 3, abs=1e-14)

    def test_nonpositive_gives_zero(self):
        h = -parabola(16)
        res = least_concave_majorant(h)
        assert np.all(res.h_tilde.values == 0.0)
        assert res.norm == 0.0

    def test_collinear_knots_kept(self):
        res = least_concave_majorant(tent(8))
        assert res.knots == list(range(9))

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-5, 5)))
    @settings(max_examples=100, deadline=None)
    def test_matches_brute_force(self, inner):
        y = np.r_[0.0, inner, 0.0]
        h = GridFn1D(len(y) - 1, y)
        res = least_concave_majorant(h)
        t = res.h_tilde.values
        assert np.all(t >= y - 1e-12)
        assert np.all(np.diff(t, 2) <= 1e-12)
        np.testing.assert_array_equal(t[res.knots], y[res.knots])
        np.testing.assert_allclose(t, brute_lcm(y), atol=1e-12)

    def test_rejects_nonzero_endpoint(self):
        with pytest.raises(DomainError):
            least_concave_majorant(GridFn1D(2, np.array([0.0, 1.0, 1.0])))


class TestProjectPolarCone:
    def test_nonpositive_trend(self):
        h = builtin_trend("negative-bump", 12)
        pr = project_polar_cone(h)
        assert np.all(pr.h_bar.values == 0.0)
        np.testing.assert_array_equal(pr.v_part.values, h.values)
        assert pr.norm == 0.0

    def test_positive_measure_is_fixed(self, tent_product16):
        pr = project_polar_cone(tent_product16)
        np.testing.assert_allclose(pr.h_bar.values, tent_product16.values, atol=1e-12)
        assert np.max(np.abs(pr.v_part.values)) <= 1e-12

    def test_zero_trend_all_contact(self):
        pr = project_polar_cone(GridFn2D.zeros(6))
        assert pr.norm == 0.0
        assert len(pr.contact_set) == 49

    @pytest.mark.parametrize("n", [3, 4])
    def test_enumeration_oracle(self, rng, n):
        for _ in range(5):
            h = random_trend(rng, n)
            pr = project_polar_cone(h)
            np.testing.assert_allclose(pr.h_bar.values, enumeration_oracle(h), atol=1e-10)

    def test_dual_oracle_9x9(self, rng):
        for _ in range(10):
            h = random_trend(rng, 8)
            pr = project_polar_cone(h)
            assert np.max(np.abs(pr.h_bar.values - dual_nnls_oracle(h))) <= 1e-6
            report = verify_projection(h, pr, tol=1e-6)
            assert all(c["passed"] for c in report.values()), report

    def test_certificate_exact_case(self):
        h = builtin_trend("negative-bump", 8)
        report = verify_projection(h, project_polar_cone(h))
        assert all(c["passed"] for c in report.values())
        assert all(c["residual"] == 0.0 for c in report.values())

    def test_certificate_detects_perturbation(self, rng):
        h = random_trend(rng, 8)
        pr = project_polar_cone(h)
        free = np.argwhere(np.abs(pr.h_bar.values - h.values) > 1e-3)
        i, j = free[0]
        bumped = pr.h_bar.values.copy()
        bumped[i, j] += 1e-3
        pr.h_bar = GridFn2D(8, bumped)
        pr.v_part = GridFn2D(8, h.values - bumped)
        report = verify_projection(h, pr)
        assert not (report["orthogonality"]["passed"] and report["measure_nonneg"]["passed"]
                    and report["complementary_slackness"]["passed"])

    def test_invariants(self, rng):
        h = random_trend(rng, 12)
        pr = project_polar_cone(h)
        assert np.max(np.abs(h.values - pr.h_bar.values - pr.v_part.values)) <= 1e-12
        assert np.all(pr.h_bar.values >= h.values - 1e-8)
        assert np.all(pr.v_part.values <= 1e-8)
        nh = rkhs_inner(h, h)
        assert abs(nh - pr.norm**2 - rkhs_inner(pr.v_part, pr.v_part)) <= 1e-8 * nh
        assert abs(rkhs_inner(pr.h_bar, pr.v_part)) <= 1e-8 * pr.norm**2
        assert measure_atoms(mixed_second_diff(pr.h_bar)).min() >= -1e-8
        off = np.ones_like(h.values, dtype=bool)
        off[tuple(pr.contact_set.T)] = False
        assert np.max(np.abs(pr.multipliers[off])) <= 1e-8

    def test_minimality(self, rng):
        n = 10
        h = random_trend(rng, n)
        pr = project_polar_cone(h)
        for _ in range(50):
            bump = np.zeros((n + 1, n + 1))
            bump[1:-1, 1:-1] = rng.exponential(0.2, size=(n - 1, n - 1)) * (rng.random((n - 1, n - 1)) < 0.3)
            g = GridFn2D(n, pr.h_bar.values + bump)
            assert rkhs_norm(g) >= pr.norm - 1e-8

    def test_scaling(self, rng):
        h = random_trend(rng, 10)
        base = project_polar_cone(h).h_bar.values
        for gamma in (0.1, 3.0, 17.0):
            np.testing.assert_allclose(project_polar_cone(gamma * h).h_bar.values, gamma * base,
                                       atol=1e-8 * max(1.0, gamma))

    def test_characterization_spot_check(self, rng):
        n = 10
        h = random_trend(rng, n)
        pr = project_polar_cone(h)
        free = np.argwhere(np.abs(pr.h_bar.values - h.values) > 1e-6)
        free = free[(free > 0).all(axis=1) & (free < n).all(axis=1)]
        for i, j in free[rng.choice(len(free), size=min(10, len(free)), replace=False)]:
            lowered = pr.h_bar.values.copy()
            lowered[i, j] -= 1e-3
            g = GridFn2D(n, lowered)
            infeasible = np.any(lowered < h.values - 1e-12)
            negative = measure_atoms(mixed_second_diff(g)).min() < -1e-8
            assert infeasible or negative

    def test_sandwich(self, rng):
        h = random_trend(rng, 10)
        low = project_polar_cone(h)
        up = project_W(h)
        assert np.all(up.h_bar.values <= h.values + 1e-12)
        assert np.all(h.values <= low.h_bar.values + 1e-12)
        assert max(low.norm, up.norm) <= rkhs_norm(h) + 1e-8

    def test_rejects_nonzero_boundary(self):
        with pytest.raises(DomainError):
            project_polar_cone(GridFn2D.constant(1.0, 4))

    def test_solver_error_carries_residual(self, rng, monkeypatch):
        import pillowbound.majorant as mj

        monkeypatch.setattr(mj, "projected_gradient", lambda Q, b, x0: (x0, 1))
        with pytest.raises(SolverError) as info:
            project_polar_cone(builtin_trend("mixed-sign", 32), max_iter=1)
        assert info.value.residual > 0

    def test_projected_gradient_fallback(self, rng):
        n = 6
        h = random_trend(rng, n)
        Q = rkhs_gram(n)
        b = h.interior.ravel()
        x, _ = projected_gradient(Q, b, feasible_start(h)[1:-1, 1:-1].ravel(), tol=1e-13)
        np.testing.assert_allclose(x, dual_nnls_oracle(h)[1:-1, 1:-1].ravel(), atol=1e-6)

    def test_feasible_start(self, rng):
        h = random_trend(rng, 9)
        g = feasible_start(h)
        assert np.all(g >= h.values)
        assert GridFn2D(9, g).in_h0

    def test_json(self, rng):
        d = project_polar_cone(random_trend(rng, 5)).to_dict()
        assert {"norm", "residual", "contact_set", "iterations"} <= set(d)


class TestProjectW:
    def test_nonnegative_trend(self):
        pr = project_W(builtin_trend("parabola-product", 8))
        assert np.all(pr.h_bar.values == 0.0)

    def test_negative_tent_is_fixed(self):
        h = -outer(tent(8), tent(8))
        np.testing.assert_allclose(project_W(h).h_bar.values, h.values, atol=1e-12)

    def test_reflection(self, rng):
        h = random_trend(rng, 8)
        np.testing.assert_array_equal(project_W(h).h_bar.values, -project_polar_cone(-h).h_bar.values)

    def test_verify(self, rng):
        h = random_trend(rng, 8)
        report = verify_projection(h, project_W(h))
        assert all(c["passed"] for c in report.values()), report


class TestProductMajorant:
    def test_parabolas(self):
        g = product_majorant(parabola(64), parabola(64))
        assert rkhs_inner(g, g) == pytest.approx(rkhs_norm1d(parabola(64)) ** 4, rel=1e-12)
        assert abs(rkhs_inner(g, g) - 1 / 9) < 1e-3

    def test_tents(self):
        g = product_majorant(tent(16), tent(16))
        assert rkhs_inner(g, g) == 1.0

    def test_hull_times_tent_matches_solver(self):
        n = 16
        fv = builtin_trend("four-vertex", n)
        g = product_majorant(fv, tent(n))
        pr = project_polar_cone(outer(fv, tent(n)))
        assert np.max(np.abs(g.values - pr.h_bar.values)) <= 1e-5

    def test_random_pairs_match_solver(self, rng):
        n = 16
        for _ in range(3):
            h1, h2 = random_bridge(rng, n), random_bridge(rng, n)
            pr = project_polar_cone(outer(h1, h2))
            assert np.max(np.abs(product_majorant(h1, h2).values - pr.h_bar.values)) <= 1e-5

    def test_precondition_violation(self):
        with pytest.raises(DomainError, match="node"):
            product_majorant(-tent(8), -tent(8))
