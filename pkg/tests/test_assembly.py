"""Operator blocks, load vectors, boundary data, and projections.

Oracles here are independent dense Gauss loops built straight on eval_basis
and eval_map, so they share no code with the vectorized assembly path.
"""
import numpy as np
import pytest
import scipy.sparse.linalg as spla

from biot_iga.assembly import (
    MaterialParams,
    assemble_blocks,
    assemble_body_load,
    assemble_fluid_source,
    assemble_traction,
    default_rule,
    essential_displacement_values,
    essential_flux_values,
    h1_gram,
    hdiv_gram,
    l2_project,
    patch_for,
)
from biot_iga.bspline import eval_basis, eval_basis_derivatives, make_open_knot_vector
from biot_iga.geometry import (
    DegenerateGeometryError,
    GeometryMap,
    l_shape,
    quarter_annulus,
    unit_square,
)
from biot_iga.harness import builtin_solution, domain_for
from biot_iga.quadrature import gauss_legendre
from biot_iga.spaces import boundary_dofs, build_mixed_spaces, scalar_space


def greville(kv):
    U, p = kv.knots, kv.degree
    return np.array([U[i + 1 : i + 1 + p].mean() for i in range(kv.num_basis)])


def dense_row(kv, x, order=0):
    out = np.zeros(kv.num_basis)
    first, ders = eval_basis_derivatives(kv, float(x), max(order, 0))
    out[first : first + kv.degree + 1] = ders[order]
    return out


def gauss_grid(mesh, n):
    """Parametric Gauss points/weights on a uniform element grid, flattened."""
    g = gauss_legendre(n)
    axes = []
    for m in mesh:
        breaks = np.linspace(0, 1, m + 1)
        pts, wts = [], []
        for e in range(m):
            p, w = g.mapped(breaks[e], breaks[e + 1])
            pts.append(p)
            wts.append(w)
        axes.append((np.concatenate(pts), np.concatenate(wts)))
    P0, W0 = axes[0]
    P1, W1 = axes[1]
    XI = np.array([(a, b) for b in P1 for a in P0])
    W = np.array([wb * wa for wb in W1 for wa in W0])
    return XI, W


PARAMS = MaterialParams(mu=1.0, lam=2.0, kappa=1.0, alpha=1.0, c0=1.0)


class TestMaterialParams:
    def test_infinite_lambda(self):
        p = MaterialParams(1.0, "infinite", 1.0, 1.0, 0.0)
        assert p.is_incompressible
        assert p.inv_lam == 0.0
        p2 = MaterialParams(1.0, np.inf, 1.0, 1.0, 0.0)
        assert p2.is_incompressible

    def test_validation(self):
        with pytest.raises(ValueError):
            MaterialParams(0.0, 1.0, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            MaterialParams(1.0, -1.0, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            MaterialParams(1.0, 1.0, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            MaterialParams(1.0, 1.0, 1.0, 1.5, 0.0)
        with pytest.raises(ValueError):
            MaterialParams(1.0, 1.0, 1.0, 1.0, -0.1)
        with pytest.raises(ValueError):
            MaterialParams(1.0, "huge", 1.0, 1.0, 0.0)


class TestBlocksAgainstDenseOracles:
    def setup_method(self):
        self.spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        self.geo = quarter_annulus()
        self.rule = gauss_legendre(6)
        self.blocks = assemble_blocks(self.spaces, self.geo, PARAMS, self.rule)

    def test_a2_matches_dense_quadrature(self):
        M = self.spaces.M
        kvs = M.component_kvs[0]
        n = M.num_dofs
        XI, W = gauss_grid((2, 2), 6)
        dense = np.zeros((n, n))
        for xi, w in zip(XI, W):
            _, _, det = self.geo.eval_map(xi)
            row = np.kron(dense_row(kvs[1], xi[1]), dense_row(kvs[0], xi[0]))
            dense += (w / det / PARAMS.lam) * np.outer(row, row)
        got = self.blocks.A2.toarray()
        assert np.max(np.abs(got - dense)) < 1e-12 * np.max(np.abs(dense))

    def test_b1_matches_dense_quadrature(self):
        V, M = self.spaces.V, self.spaces.M
        kv_v = V.component_kvs[0][0]
        kvs_m = M.component_kvs[0]
        XI, W = gauss_grid((2, 2), 6)
        dense = np.zeros((M.num_dofs, V.num_dofs))
        nv = kv_v.num_basis
        for xi, w in zip(XI, W):
            _, DF, _ = self.geo.eval_map(xi)
            DFinvT = np.linalg.inv(DF).T
            zrow = np.kron(dense_row(kvs_m[1], xi[1]), dense_row(kvs_m[0], xi[0]))
            r0 = dense_row(kv_v, xi[0])
            r1 = dense_row(kv_v, xi[1])
            d0 = dense_row(kv_v, xi[0], 1)
            d1 = dense_row(kv_v, xi[1], 1)
            grad_param = np.stack([np.kron(r1, d0), np.kron(d1, r0)])  # (2, nv*nv)
            grad_phys = DFinvT @ grad_param
            # div of component c basis = physical derivative in direction c
            for c in range(2):
                cols = slice(c * nv * nv, (c + 1) * nv * nv)
                dense[:, cols] += w * np.outer(zrow, grad_phys[c])
        got = self.blocks.B1.toarray()
        assert np.max(np.abs(got - dense)) < 1e-12 * np.max(np.abs(dense))

    def test_symmetry_and_definiteness(self):
        for name in ("A1", "A2", "A3", "A4"):
            A = getattr(self.blocks, name)
            gap = abs(A - A.T)
            assert gap.max() if gap.nnz else 0.0 < 1e-12 * abs(A).max()
            evals = np.linalg.eigvalsh(A.toarray())
            assert evals.min() > -1e-10 * max(evals.max(), 1.0)
        evals3 = np.linalg.eigvalsh(self.blocks.A3.toarray())
        assert evals3.min() > 0

    def test_a1_positive_definite_after_elimination(self):
        A1 = self.blocks.A1.toarray()
        fixed = boundary_dofs(self.spaces.V, "all")
        keep = np.setdiff1d(np.arange(self.spaces.V.num_dofs), fixed)
        evals = np.linalg.eigvalsh(A1[np.ix_(keep, keep)])
        assert evals.min() > 0


class TestBlockIdentities:
    def test_b1_b2_kill_constant_displacement(self):
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        blocks = assemble_blocks(spaces, quarter_annulus(), PARAMS, gauss_legendre(4))
        const = np.ones(spaces.V.num_dofs)
        assert np.max(np.abs(blocks.B1 @ const)) < 1e-12
        assert np.max(np.abs(blocks.B2 @ const)) < 1e-12

    def test_a1_energy_of_linear_field(self):
        # u = (x, -y): eps = diag(1, -1), energy 2 mu int |eps|^2 = 4 mu |Omega|
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        blocks = assemble_blocks(spaces, unit_square(), PARAMS, gauss_legendre(4))
        g = greville(spaces.V.component_kvs[0][0])
        n = g.size
        coefs = np.concatenate([np.tile(g, n), np.repeat(-g, n)])
        energy = coefs @ (blocks.A1 @ coefs)
        assert abs(energy - 4 * PARAMS.mu) < 1e-10

    def test_infinite_lambda_zeroes_a2(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        params = MaterialParams(1.0, "infinite", 1.0, 1.0, 0.0)
        blocks = assemble_blocks(spaces, unit_square(), params, gauss_legendre(3))
        assert blocks.A2.nnz == 0 or abs(blocks.A2).max() == 0.0

    def test_scaling_linearity_exact(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        geo = quarter_annulus()
        rule = gauss_legendre(4)
        base = assemble_blocks(spaces, geo, PARAMS, rule)
        mu2 = assemble_blocks(
            spaces, geo, MaterialParams(2.0, 2.0, 1.0, 1.0, 1.0), rule
        )
        kap2 = assemble_blocks(
            spaces, geo, MaterialParams(1.0, 2.0, 2.0, 1.0, 1.0), rule
        )
        lam2 = assemble_blocks(
            spaces, geo, MaterialParams(1.0, 4.0, 1.0, 1.0, 1.0), rule
        )
        assert abs(mu2.A1 - 2 * base.A1).max() == 0.0
        assert abs(kap2.A3 - 0.5 * base.A3).max() == 0.0
        assert abs(lam2.A2 - 0.5 * base.A2).max() == 0.0

    def test_b3_kernel_on_curl_fields(self):
        # curl of a spline potential is parametrically divergence free and
        # lives exactly in the flux space
        p_p, k_p = 2, 1
        spaces = build_mixed_spaces(2, 3, p_p, k_p, 3, 1)
        W = spaces.W
        kvw0 = W.component_kvs[0][0]  # raised family, direction 0
        kvw1 = W.component_kvs[1][1]  # raised family, direction 1
        rng = np.random.default_rng(3)
        n0, n1 = kvw0.num_basis, kvw1.num_basis
        pot = rng.standard_normal((n1, n0))

        def deriv_coefs(c, kv, axis):
            # spline derivative: d_i = p (c_{i+1} - c_i) / (U_{i+p+1} - U_{i+1})
            p, U = kv.degree, kv.knots
            d = np.diff(c, axis=axis)
            denom = np.array([U[i + p + 1] - U[i + 1] for i in range(c.shape[axis] - 1)])
            shape = [1, 1]
            shape[axis] = denom.size
            return p * d / denom.reshape(shape)

        comp0 = deriv_coefs(pot, kvw1, axis=0)  # d/dxi_1
        comp1 = -deriv_coefs(pot, kvw0, axis=1)  # -d/dxi_0
        assert comp0.shape == (W.component_shape(0)[1], W.component_shape(0)[0])
        assert comp1.shape == (W.component_shape(1)[1], W.component_shape(1)[0])
        coefs = np.concatenate([comp0.ravel(), comp1.ravel()])
        blocks = assemble_blocks(spaces, quarter_annulus(), PARAMS, gauss_legendre(5))
        resid = blocks.B3 @ coefs
        assert np.max(np.abs(resid)) < 1e-11 * max(1.0, np.max(np.abs(coefs)))

    def test_reparametrization_invariance(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        rule = gauss_legendre(5)
        kv2 = make_open_knot_vector(1, 2, 1)
        g = greville(kv2)
        pts = np.array([(gx, gy) for gy in g for gx in g])
        elevated = GeometryMap(scalar_space((kv2, kv2)), pts)
        a = assemble_blocks(spaces, unit_square(), PARAMS, rule)
        b = assemble_blocks(spaces, elevated, PARAMS, rule)
        for name in ("A3", "B3"):
            X = getattr(a, name).toarray()
            Y = getattr(b, name).toarray()
            assert np.max(np.abs(X - Y)) < 5e-10 * np.max(np.abs(X))

    def test_mesh_mismatch_rejected(self):
        # the L-shaped patch has a geometry kink at xi_1 = 1/2; a 3-element
        # grid has no breakpoint there
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        with pytest.raises(ValueError, match="mesh mismatch"):
            assemble_blocks(spaces, l_shape(), PARAMS, gauss_legendre(3))

    def test_degenerate_geometry_rejected(self):
        kv = make_open_knot_vector(1, 1, 0)
        # folded patch: the top edge runs backwards, det flips sign inside,
        # and the map is rejected before any assembly can happen
        pts = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1.0]])
        with pytest.raises(DegenerateGeometryError):
            GeometryMap(scalar_space((kv, kv)), pts)


class TestLoadVectors:
    def setup_method(self):
        self.spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        self.rule = gauss_legendre(6)

    def test_zero_sources(self):
        geo = unit_square()
        z = assemble_body_load(
            self.spaces.V, geo, lambda X, t: np.zeros_like(X), 0.0, self.rule
        )
        assert np.all(z == 0)
        z = assemble_fluid_source(
            self.spaces.Q, geo, lambda X, t: np.zeros(len(X)), 0.0, self.rule
        )
        assert np.all(z == 0)

    def test_constant_body_load_sums_to_area(self):
        def e1(X, t):
            F = np.zeros_like(X)
            F[:, 0] = 1.0
            return F

        for geo, area in [(unit_square(), 1.0), (quarter_annulus(), 3 * np.pi)]:
            b = assemble_body_load(self.spaces.V, geo, e1, 0.0, self.rule)
            nv = self.spaces.V.component_size(0)
            assert abs(b[:nv].sum() - area) < 1e-9
            assert np.max(np.abs(b[nv:])) == 0.0

    def test_constant_fluid_source_sum(self):
        b = assemble_fluid_source(
            self.spaces.Q, unit_square(), lambda X, t: np.ones(len(X)), 0.0, self.rule
        )
        assert abs(b.sum() - 1.0) < 1e-12

    def test_builtin_sources_match_dense_quadrature(self):
        ms = builtin_solution("test1", PARAMS)
        geo = domain_for("test1")
        V, Q = self.spaces.V, self.spaces.Q
        got_u = assemble_body_load(V, geo, ms.f_u, 0.0, self.rule)
        got_p = assemble_fluid_source(Q, geo, ms.f_p, 0.0, self.rule)

        XI, W = gauss_grid((2, 2), 6)
        kv_v = V.component_kvs[0][0]
        kvs_q = Q.component_kvs[0]
        nv = kv_v.num_basis
        dense_u = np.zeros(V.num_dofs)
        dense_p = np.zeros(Q.num_dofs)
        for xi, w in zip(XI, W):
            x, _, det = geo.eval_map(xi)
            fu = ms.f_u(x[None, :], 0.0)[0]
            fp = ms.f_p(x[None, :], 0.0)[0]
            vrow = np.kron(dense_row(kv_v, xi[1]), dense_row(kv_v, xi[0]))
            qrow = np.kron(dense_row(kvs_q[1], xi[1]), dense_row(kvs_q[0], xi[0]))
            for c in range(2):
                dense_u[c * nv * nv : (c + 1) * nv * nv] += w * det * fu[c] * vrow
            dense_p += w * fp * qrow  # l2 pullback cancels the Jacobian
        assert np.max(np.abs(got_u - dense_u)) < 1e-10 * np.max(np.abs(dense_u))
        assert np.max(np.abs(got_p - dense_p)) < 1e-10 * np.max(np.abs(dense_p))


class TestTraction:
    def test_zero(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        b = assemble_traction(
            spaces.V, unit_square(), "all", np.zeros(2), gauss_legendre(4)
        )
        assert np.all(b == 0)

    def test_unit_edge_sum(self):
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        b = assemble_traction(
            spaces.V, unit_square(), [(1, 0)], np.array([0.0, -1.0]), gauss_legendre(4)
        )
        nv = spaces.V.component_size(0)
        assert abs(b[:nv].sum()) < 1e-14
        assert abs(b[nv:].sum() + 1.0) < 1e-12

    def test_annulus_outer_arc(self):
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        b = assemble_traction(
            spaces.V,
            quarter_annulus(),
            [(0, 1)],
            np.array([0.0, -1.0]),
            gauss_legendre(6),
        )
        nv = spaces.V.component_size(0)
        # outer arc: quarter circle of radius 4, length 2 pi
        assert abs(b[nv:].sum() + 2 * np.pi) < 1e-9


def eval_trace_scalar(kvs, coefs_block, xi):
    n0 = kvs[0].num_basis
    row = np.kron(dense_row(kvs[1], xi[1]), dense_row(kvs[0], xi[0]))
    return row @ coefs_block


class TestEssentialDisplacement:
    def test_zero_field(self):
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        dofs, vals = essential_displacement_values(
            spaces.V, quarter_annulus(), lambda X, t: np.zeros_like(X), 0.0
        )
        assert np.all(vals == 0)
        np.testing.assert_array_equal(dofs, boundary_dofs(spaces.V, "all"))

    def test_linear_field_reproduced(self):
        # affine map, so the pulled-back trace is polynomial and lands in
        # the trace space exactly
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        kv1 = make_open_knot_vector(1, 1, 0)
        corners = np.array([[0.0, 0], [2, 0.5], [0.3, 1], [2.3, 1.5]])
        geo = GeometryMap(scalar_space((kv1, kv1)), corners)
        A = np.array([[0.3, -1.2], [0.8, 0.4]])

        def u(X, t):
            return X @ A.T

        dofs, vals = essential_displacement_values(spaces.V, geo, u, 0.0)
        V = spaces.V
        coefs = np.zeros(V.num_dofs)
        coefs[dofs] = vals
        kvs = V.component_kvs[0]
        nloc = V.component_size(0)
        for s in np.linspace(0, 1, 23):
            for face in [(0, 0), (0, 1), (1, 0), (1, 1)]:
                l, side = face
                xi = np.array([float(side), s] if l == 0 else [s, float(side)])
                x, _, _ = geo.eval_map(xi)
                got = np.array(
                    [eval_trace_scalar(kvs, coefs[c * nloc : (c + 1) * nloc], xi) for c in range(2)]
                )
                assert np.max(np.abs(got - A @ x)) < 1e-11

    def test_trace_fit_convergence_order(self):
        ms = builtin_solution("test1", PARAMS)
        geo = domain_for("test1")
        errs = []
        for m in (8, 16, 32):
            spaces = build_mixed_spaces(2, m, 1, 0, 2, 0)
            V = spaces.V
            dofs, vals = essential_displacement_values(V, geo, ms.u, 0.0)
            coefs = np.zeros(V.num_dofs)
            coefs[dofs] = vals
            kvs = V.component_kvs[0]
            nloc = V.component_size(0)
            err2 = 0.0
            gp, gw = np.polynomial.legendre.leggauss(6)
            for l, side in [(0, 0), (0, 1), (1, 0), (1, 1)]:
                breaks = np.linspace(0, 1, m + 1)
                for e in range(m):
                    mid = 0.5 * (breaks[e] + breaks[e + 1])
                    half = 0.5 * (breaks[e + 1] - breaks[e])
                    for t_, w_ in zip(mid + half * gp, half * gw):
                        xi = np.array([float(side), t_] if l == 0 else [t_, float(side)])
                        x, DF, _ = geo.eval_map(xi)
                        tang = DF[:, 1 - l]
                        got = np.array(
                            [
                                eval_trace_scalar(kvs, coefs[c * nloc : (c + 1) * nloc], xi)
                                for c in range(2)
                            ]
                        )
                        err2 += w_ * np.linalg.norm(tang) * np.sum((got - ms.u(x[None], 0.0)[0]) ** 2)
            errs.append(np.sqrt(err2))
        slope = np.log2(errs[1] / errs[2])
        assert slope > 3.0 - 0.3  # p_v + 1 for p_v = 2


class TestEssentialFlux:
    def test_zero_field(self):
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        dofs, vals = essential_flux_values(
            spaces.W, quarter_annulus(), lambda X, t: np.zeros_like(X), 0.0
        )
        assert np.all(vals == 0)
        np.testing.assert_array_equal(dofs, boundary_dofs(spaces.W, "all"))

    def test_constant_field_identity_geometry(self):
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        W = spaces.W
        wvec = np.array([0.7, -1.3])

        def w_exact(X, t):
            return np.broadcast_to(wvec, X.shape).copy()

        dofs, vals = essential_flux_values(W, unit_square(), w_exact, 0.0)
        coefs = np.zeros(W.num_dofs)
        coefs[dofs] = vals
        # on the identity map the normal trace of component l on face (l, s)
        # is the component-l trace itself
        for l, side in [(0, 0), (0, 1), (1, 0), (1, 1)]:
            kvs = W.component_kvs[l]
            block = coefs[W.component_offset(l) : W.component_offset(l) + W.component_size(l)]
            normal_sign = -1.0 if side == 0 else 1.0
            for s in np.linspace(0, 1, 17):
                xi = np.array([float(side), s] if l == 0 else [s, float(side)])
                got = eval_trace_scalar(kvs, block, xi)
                assert abs(got - wvec[l]) < 1e-12

    def test_normal_trace_fit_convergence_order(self):
        params = PARAMS
        ms = builtin_solution("test1", params)
        geo = domain_for("test1")
        errs = []
        for m in (4, 8, 16):
            spaces = build_mixed_spaces(2, m, 1, 0, 2, 0)
            W = spaces.W
            dofs, vals = essential_flux_values(W, geo, ms.w, 0.0)
            coefs = np.zeros(W.num_dofs)
            coefs[dofs] = vals
            err2 = 0.0
            gp, gw = np.polynomial.legendre.leggauss(6)
            for l, side in [(0, 0), (0, 1), (1, 0), (1, 1)]:
                kvs = W.component_kvs[l]
                block = coefs[W.component_offset(l) : W.component_offset(l) + W.component_size(l)]
                breaks = np.linspace(0, 1, m + 1)
                sign = -1.0 if side == 0 else 1.0
                for e in range(m):
                    mid = 0.5 * (breaks[e] + breaks[e + 1])
                    half = 0.5 * (breaks[e + 1] - breaks[e])
                    for t_, w_ in zip(mid + half * gp, half * gw):
                        xi = np.array([float(side), t_] if l == 0 else [t_, float(side)])
                        x, DF, det = geo.eval_map(xi)
                        tang = DF[:, 1 - l]
                        jac = np.linalg.norm(tang)
                        nrm = sign * np.array([tang[1], -tang[0]]) / jac
                        if l == 1:
                            nrm = -nrm
                        # Piola normal trace on the face: w.n = (component l
                        # parametric trace) / surface jacobian
                        wn_h = eval_trace_scalar(kvs, block, xi) * sign / jac
                        wn = ms.w(x[None], 0.0)[0] @ nrm
                        err2 += w_ * jac * (wn_h - wn) ** 2
            errs.append(np.sqrt(err2))
        slope = np.log2(errs[1] / errs[2])
        assert slope > 2.0 - 0.3  # at least p_p + 1 for p_p = 1


class TestL2Project:
    def test_zero(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        c = l2_project(spaces.Q, quarter_annulus(), lambda X: np.zeros(len(X)), gauss_legendre(4))
        assert np.max(np.abs(c)) < 1e-14

    def test_recovery_of_space_element(self):
        spaces = build_mixed_spaces(2, 3, 1, 0, 2, 0)
        geo = quarter_annulus()
        rule = gauss_legendre(5)
        rng = np.random.default_rng(17)
        for space in (spaces.V, spaces.Q, spaces.W):
            target = rng.standard_normal(space.num_dofs)
            probe = _FieldEvaluator(space, geo, target)
            got = l2_project(space, geo, probe, rule)
            assert np.max(np.abs(got - target)) < 1e-11 * max(1.0, np.max(np.abs(target)))

    def test_best_approximation(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        geo = unit_square()
        rule = gauss_legendre(6)

        def f(X):
            return np.sin(2.3 * X[:, 0]) * np.cos(1.7 * X[:, 1])

        space = scalar_space(tuple(spaces.M.component_kvs[0]))
        proj = l2_project(space, geo, f, rule)
        XI, W = gauss_grid((2, 2), 6)
        kvs = space.component_kvs[0]
        rows = np.array(
            [np.kron(dense_row(kvs[1], xi[1]), dense_row(kvs[0], xi[0])) for xi in XI]
        )
        fv = f(XI)  # identity geometry: physical == parametric
        err_proj = W @ (rows @ proj - fv) ** 2
        rng = np.random.default_rng(23)
        for _ in range(20):
            other = proj + rng.standard_normal(space.num_dofs)
            err_other = W @ (rows @ other - fv) ** 2
            assert err_proj <= err_other + 1e-14


class _FieldEvaluator:
    """Physical field of a coefficient vector, respecting the pullback."""

    def __init__(self, space, geo, coefs):
        self.space, self.geo, self.coefs = space, geo, coefs

    def __call__(self, X):
        # X are physical points produced by the same patch grid; recover the
        # parametric points by Newton inversion from the cell midpoint
        out = []
        for x in np.atleast_2d(X):
            xi = self._invert(x)
            out.append(self._value(xi))
        arr = np.array(out)
        return arr

    def _invert(self, x):
        xi = np.full(self.space.dim, 0.5)
        for _ in range(80):
            xx, DF, _ = self.geo.eval_map(xi)
            step = np.linalg.solve(DF, x - xx)
            xi = np.clip(xi + step, 0.0, 1.0)
            if np.linalg.norm(step) < 1e-15:
                break
        return xi

    def _value(self, xi):
        space = self.space
        x, DF, det = self.geo.eval_map(xi)
        if space.num_components == 1:
            kvs = space.component_kvs[0]
            v = eval_trace_scalar(kvs, self.coefs, xi)
            return v / det if space.pullback == "l2" else v
        vals = []
        for c in range(space.num_components):
            kvs = space.component_kvs[c]
            block = self.coefs[
                space.component_offset(c) : space.component_offset(c) + space.component_size(c)
            ]
            vals.append(eval_trace_scalar(kvs, block, xi))
        v = np.array(vals)
        return DF @ v / det if space.pullback == "piola" else v


class TestGrams:
    def test_h1_energy_of_linear_field(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        G = h1_gram(spaces.V, unit_square(), gauss_legendre(4))
        g = greville(spaces.V.component_kvs[0][0])
        n = g.size
        coefs = np.concatenate([np.tile(g, n), np.repeat(-g, n)])
        # u = (x, -y): ||u||_0^2 = 2/3, |u|_1^2 = 2
        assert coefs @ (G @ coefs) == pytest.approx(2 / 3 + 2, abs=1e-10)

    def test_hdiv_energy_of_linear_field(self):
        spaces = build_mixed_spaces(2, 2, 1, 0, 2, 0)
        W = spaces.W
        G = hdiv_gram(W, unit_square(), gauss_legendre(4))
        blocks = []
        for c in range(2):
            kvs = W.component_kvs[c]
            gdir = greville(kvs[c])
            shape = W.component_shape(c)  # (n_dir0, n_dir1)
            grid = np.zeros((shape[1], shape[0]))
            if c == 0:
                grid[:, :] = gdir[None, :]
            else:
                grid[:, :] = gdir[:, None]
            blocks.append(grid.ravel())
        coefs = np.concatenate(blocks)
        # w = (x, y): ||w||_0^2 = 2/3, ||div w||_0^2 = 4
        assert coefs @ (G @ coefs) == pytest.approx(2 / 3 + 4, abs=1e-10)
