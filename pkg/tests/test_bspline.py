"""Univariate B-spline basics: knot vectors, Cox-de Boor evaluation,
derivatives, and derivative spaces."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biot_iga.bspline import (
    KnotVector,
    basis_integrals,
    derivative_space,
    eval_basis,
    eval_basis_derivatives,
    find_span,
    make_open_knot_vector,
    tabulate,
)

# a few spaces exercised repeatedly below
KV_HAT = make_open_knot_vector(1, 1, 0)          # {0,0,1,1}
KV_BERN2 = KnotVector(np.array([0.0, 0, 0, 1, 1, 1]), 2)
KV_Q1 = make_open_knot_vector(2, 2, 1)           # {0,0,0,0.5,1,1,1}


def dense_row(kv, x, order=0):
    """Full-length vector of basis values (or a derivative row) at x."""
    first, ders = eval_basis_derivatives(kv, x, order)
    row = np.zeros(kv.num_basis)
    row[first : first + kv.degree + 1] = ders[order]
    return row


class TestMakeOpenKnotVector:
    def test_two_elements_quadratic_c1(self):
        kv = KV_Q1
        assert np.array_equal(kv.knots, [0, 0, 0, 0.5, 1, 1, 1])
        assert kv.num_basis == 4

    def test_single_element_hats(self):
        assert np.array_equal(KV_HAT.knots, [0, 0, 1, 1])
        assert KV_HAT.num_basis == 2

    def test_dimension_formula(self):
        kv = make_open_knot_vector(4, 3, 2)
        assert kv.num_basis == 7  # (p+1) + (m-1)(p-k) = 4 + 3

    @given(
        m=st.integers(1, 8),
        p=st.integers(1, 5),
        data=st.data(),
    )
    def test_dimension_formula_general(self, m, p, data):
        k = data.draw(st.integers(0, p - 1))
        kv = make_open_knot_vector(m, p, k)
        assert kv.num_basis == (p + 1) + (m - 1) * (p - k)
        assert kv.num_elements == m

    def test_rejects_out_of_range_regularity(self):
        with pytest.raises(ValueError):
            make_open_knot_vector(4, 2, 2)
        with pytest.raises(ValueError):
            make_open_knot_vector(4, 2, -1)


class TestFindSpan:
    def test_interior_point(self):
        span = find_span(KV_Q1, 0.25)
        knots = KV_Q1.knots
        assert knots[span] <= 0.25 < knots[span + 1]

    def test_right_endpoint_is_last_nonempty_span(self):
        span = find_span(KV_Q1, 1.0)
        assert KV_Q1.knots[span] < 1.0
        assert KV_Q1.knots[span + 1] == 1.0

    def test_single_interval(self):
        assert find_span(KV_HAT, 0.5) == 1

    def test_domain_error(self):
        with pytest.raises(ValueError):
            find_span(KV_HAT, -0.1)
        with pytest.raises(ValueError):
            find_span(KV_HAT, 1.5)


class TestEvalBasis:
    def test_linear_hats_midpoint(self):
        first, vals = eval_basis(KV_HAT, 0.5)
        assert first == 0
        np.testing.assert_allclose(vals, [0.5, 0.5])

    def test_bernstein_quadratic(self):
        # closed form (1-t)^2, 2t(1-t), t^2 at t = 0.5
        first, vals = eval_basis(KV_BERN2, 0.5)
        assert first == 0
        np.testing.assert_allclose(vals, [0.25, 0.5, 0.25])

    @given(x=st.floats(0.0, 1.0), m=st.integers(1, 6), p=st.integers(1, 4))
    def test_partition_of_unity(self, x, m, p):
        kv = make_open_knot_vector(m, p, 0)
        _, vals = eval_basis(kv, x)
        assert vals.shape == (p + 1,)
        assert abs(vals.sum() - 1.0) < 1e-13
        assert np.all(vals >= -1e-15)

    def test_partition_of_unity_dense_sample(self):
        kv = make_open_knot_vector(7, 3, 1)
        rng = np.random.default_rng(0)
        for x in rng.uniform(0, 1, 1000):
            _, vals = eval_basis(kv, float(x))
            assert abs(vals.sum() - 1.0) < 1e-13

    def test_local_support(self):
        kv = make_open_knot_vector(5, 2, 0)
        i = 4  # an interior function
        lo, hi = kv.knots[i], kv.knots[i + kv.degree + 1]
        for x in [lo / 2, hi + (1 - hi) / 2, 0.0, 1.0]:
            if lo <= x <= hi:
                continue
            assert dense_row(kv, x)[i] == 0.0


class TestDerivatives:
    def test_bernstein_first_derivative(self):
        first, ders = eval_basis_derivatives(KV_BERN2, 0.5, 1)
        np.testing.assert_allclose(ders[0], [0.25, 0.5, 0.25])
        np.testing.assert_allclose(ders[1], [-1.0, 0.0, 1.0], atol=1e-14)

    def test_hat_slopes(self):
        _, ders = eval_basis_derivatives(KV_HAT, 0.3, 1)
        np.testing.assert_allclose(ders[1], [-1.0, 1.0])

    @given(x=st.floats(0.0, 1.0), m=st.integers(1, 6), p=st.integers(1, 4))
    def test_derivative_rows_sum_to_zero(self, x, m, p):
        kv = make_open_knot_vector(m, p, p - 1)
        _, ders = eval_basis_derivatives(kv, x, min(2, p))
        np.testing.assert_allclose(ders[0], eval_basis(kv, x)[1])
        for row in ders[1:]:
            assert abs(row.sum()) < 1e-11

    def test_order_above_degree_rejected(self):
        with pytest.raises(ValueError):
            eval_basis_derivatives(KV_HAT, 0.5, 2)

    def test_interior_continuity(self):
        # left/right limits of derivatives up to order k agree at breakpoints
        for p, k in [(2, 1), (3, 1), (3, 2), (4, 3)]:
            kv = make_open_knot_vector(4, p, k)
            for brk in kv.breakpoints[1:-1]:
                for order in range(k + 1):
                    right = dense_row(kv, float(brk), order)
                    left = np.zeros(kv.num_basis)
                    eps_pts = float(brk) - 1e-9
                    first, ders = eval_basis_derivatives(kv, eps_pts, order)
                    left[first : first + p + 1] = ders[order]
                    np.testing.assert_allclose(right, left, atol=1e-5 if order else 1e-9)

    def test_interior_continuity_exact_limits(self):
        # sharper check: extrapolate the left limit with a tiny Richardson step
        kv = make_open_knot_vector(4, 3, 2)
        brk = 0.5
        for order in range(3):
            right = dense_row(kv, brk, order)
            h = 1e-7
            f1 = dense_row(kv, brk - h, order)
            f2 = dense_row(kv, brk - 2 * h, order)
            left = 2 * f1 - f2
            np.testing.assert_allclose(right, left, atol=1e-10 * 10**order + 1e-12)


class TestDerivativeSpace:
    def test_quadratic_to_linear(self):
        dv = derivative_space(KV_Q1)
        assert dv.degree == 1
        assert np.array_equal(dv.knots, [0, 0, 0.5, 1, 1])
        assert dv.num_basis == 3

    def test_linear_to_constant(self):
        dv = derivative_space(KV_HAT)
        assert dv.degree == 0
        assert dv.num_basis == 1

    def test_p0_rejected(self):
        with pytest.raises(ValueError):
            derivative_space(derivative_space(KV_HAT))

    @given(m=st.integers(1, 5), p=st.integers(2, 4), seed=st.integers(0, 99))
    @settings(max_examples=25, deadline=None)
    def test_derivative_exactly_representable(self, m, p, seed):
        # d/dx of any spline must live in the derivative space: least-squares
        # fit of the sampled derivative must have vanishing residual
        kv = make_open_knot_vector(m, p, p - 2 if p > 2 else 0)
        dv = derivative_space(kv)
        rng = np.random.default_rng(seed)
        coefs = rng.standard_normal(kv.num_basis)
        xs = np.linspace(0.003, 0.997, 40 * max(1, dv.num_basis // 3))
        dvals = np.array([dense_row(kv, x, 1) @ coefs for x in xs])
        G = np.array([dense_row(dv, x) for x in xs])
        fit, *_ = np.linalg.lstsq(G, dvals, rcond=None)
        assert np.abs(G @ fit - dvals).max() < 1e-12 * max(1.0, np.abs(dvals).max())


class TestTabulateAndIntegrals:
    def test_tabulate_matches_pointwise(self):
        kv = make_open_knot_vector(3, 2, 0)
        pts = np.array([0.1, 0.5, 0.9])
        firsts, table = tabulate(kv, pts, 1)
        for i, x in enumerate(pts):
            f, ders = eval_basis_derivatives(kv, float(x), 1)
            assert firsts[i] == f
            np.testing.assert_array_equal(table[i], ders)

    def test_basis_integrals_sum_to_one(self):
        # integrating the partition of unity over [0,1]
        for m, p, k in [(1, 1, 0), (4, 2, 1), (5, 3, 0)]:
            kv = make_open_knot_vector(m, p, k)
            assert abs(basis_integrals(kv).sum() - 1.0) < 1e-14

    def test_basis_integrals_against_quadrature(self):
        from biot_iga.quadrature import gauss_legendre

        kv = make_open_knot_vector(3, 3, 1)
        rule = gauss_legendre(6)
        acc = np.zeros(kv.num_basis)
        for a, b in zip(kv.breakpoints[:-1], kv.breakpoints[1:]):
            mid, half = (a + b) / 2, (b - a) / 2
            for x, w in zip(rule.points, rule.weights):
                acc += dense_row(kv, float(mid + half * x)) * w * half
        np.testing.assert_allclose(acc, basis_integrals(kv), atol=1e-14)


class TestKnotVectorValidation:
    def test_rejects_non_open(self):
        with pytest.raises(ValueError):
            KnotVector(np.array([0.0, 0, 0.5, 1, 1]), 2)

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            KnotVector(np.array([0.0, 0, 0.6, 0.4, 1, 1]), 1)

    def test_rejects_wrong_domain(self):
        with pytest.raises(ValueError):
            KnotVector(np.array([0.0, 0, 2.0, 2.0]), 1)
