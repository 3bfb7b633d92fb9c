"""Spline/NURBS patch parametrizations and the three field pushforwards.

The geometry may be rational (the exact quarter annulus needs circular-arc
weights); the discrete fields themselves always stay polynomial. Control
points follow the global dof ordering of the scalar geometry basis
(direction 1 fastest).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bspline import KnotVector, tabulate
from .quadrature import gauss_legendre
from .spaces import TensorSplineSpace, scalar_space

__all__ = [
    "GeometryMap",
    "DegenerateGeometryError",
    "quarter_annulus",
    "l_shape",
    "unit_square",
    "unit_cube",
    "pushforward_h1",
    "pushforward_hdiv",
    "pushforward_l2",
]


class DegenerateGeometryError(RuntimeError):
    """Raised when det DF <= 0 is detected."""


def _collocation(kv: KnotVector, points: np.ndarray):
    """Dense collocation matrices (values, derivatives) of one knot vector."""
    firsts, table = tabulate(kv, points, 1)
    n = kv.num_basis
    B = np.zeros((points.size, n))
    D = np.zeros((points.size, n))
    for i, f in enumerate(firsts):
        B[i, f : f + kv.degree + 1] = table[i, 0]
        D[i, f : f + kv.degree + 1] = table[i, 1]
    return B, D


@dataclass(eq=False)
class GeometryMap:
    """Patch map F from the parametric cube onto the physical domain."""

    basis: TensorSplineSpace
    control_points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.basis.num_components != 1:
            raise ValueError("geometry basis must be scalar")
        cp = np.asarray(self.control_points, dtype=float)
        n = self.basis.num_dofs
        if cp.shape != (n, self.basis.dim):
            raise ValueError(f"control points must have shape {(n, self.basis.dim)}")
        object.__setattr__(self, "control_points", cp)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,):
                raise ValueError("need one weight per control point")
            if np.any(w <= 0):
                raise ValueError("rational weights must be strictly positive")
            object.__setattr__(self, "weights", w)
        self._check_orientation()

    # -- basic structure ----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def kvs(self):
        return self.basis.component_kvs[0]

    def _check_orientation(self):
        # det DF > 0 at Gauss points of every geometry element
        rule = gauss_legendre(4)
        axes = []
        for kv in self.kvs:
            bp = kv.breakpoints
            pts = np.concatenate(
                [rule.mapped(bp[i], bp[i + 1])[0] for i in range(bp.size - 1)]
            )
            axes.append(pts)
        _, _, det = self.eval_grid(axes)
        if np.any(det <= 0):
            raise DegenerateGeometryError("geometry map has det DF <= 0 at sample points")

    # -- evaluation ----------------------------------------------------------

    def eval_grid(self, axes):
        """Evaluate F on a tensor grid of parametric coordinates.

        axes: one 1D coordinate array per direction. Returns (X, DF, det)
        flattened with direction 1 fastest: X has shape (N, d), DF has shape
        (N, d, d) with DF[n, i, j] = dF_i/dxi_j, det has shape (N,).
        """
        d = self.dim
        axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in axes]
        colloc = [_collocation(kv, a) for kv, a in zip(self.kvs, axes)]
        shape = self.basis.component_shape(0)
        w = self.weights if self.weights is not None else np.ones(self.basis.num_dofs)
        # control tensors, axes ordered (direction d, ..., direction 1)
        wT = w.reshape(shape[::-1])
        coords = [(w * self.control_points[:, k]).reshape(shape[::-1]) for k in range(d)]

        def grid_eval(T, deriv_dir):
            g = T
            for l in reversed(range(d)):
                mat = colloc[l][1] if l == deriv_dir else colloc[l][0]
                # axis 0 of g currently belongs to direction l
                g = np.tensordot(mat, g, axes=([1], [0]))
                g = np.moveaxis(g, 0, -1)
            # axes now ordered (direction d, ..., direction 1); flatten C-order
            return g.reshape(-1)

        W = grid_eval(wT, -1)
        A = np.stack([grid_eval(T, -1) for T in coords], axis=1)  # (N, d)
        X = A / W[:, None]
        DF = np.empty((W.size, d, d))
        for l in range(d):
            Wl = grid_eval(wT, l)
            for k in range(d):
                Al = grid_eval(coords[k], l)
                DF[:, k, l] = (Al * W - A[:, k] * Wl) / (W * W)
        det = np.linalg.det(DF)
        return X, DF, det

    def eval_map(self, xi):
        """Map one parametric point: returns (x, DF, det DF)."""
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < -1e-14) or np.any(xi > 1 + 1e-14):
            raise ValueError(f"parametric point {xi} outside the unit cube")
        xi = np.clip(xi, 0.0, 1.0)
        X, DF, det = self.eval_grid([np.array([c]) for c in xi])
        if det[0] <= 0:
            raise DegenerateGeometryError(f"det DF = {det[0]:g} <= 0 at {xi}")
        return X[0], DF[0], float(det[0])


def eval_map(geo: GeometryMap, xi):
    return geo.eval_map(xi)


# -- built-in domains --------------------------------------------------------


def quarter_annulus(inner: float = 2.0, outer: float = 4.0) -> GeometryMap:
    """Exact quarter annulus in the first quadrant.

    Direction 1 is radial (linear), direction 2 angular (rational quadratic
    with the classic 90-degree arc weights 1, sqrt(2)/2, 1).
    """
    if not 0.0 < inner < outer:
        raise ValueError(f"need 0 < inner < outer, got ({inner}, {outer})")
    kv_r = KnotVector(np.array([0.0, 0.0, 1.0, 1.0]), 1)
    kv_a = KnotVector(np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]), 2)
    basis = scalar_space((kv_r, kv_a))
    r0, r1 = inner, outer
    # flat ordering: radial index fastest
    pts = np.array(
        [
            [r0, 0.0], [r1, 0.0],   # angular node 0
            [r0, r0], [r1, r1],     # angular node 1 (arc corner)
            [0.0, r0], [0.0, r1],   # angular node 2
        ]
    )
    s = np.sqrt(2.0) / 2.0
    wts = np.array([1.0, 1.0, s, s, 1.0, 1.0])
    return GeometryMap(basis, pts, wts)


def l_shape() -> GeometryMap:
    """L-shaped domain (-1,1)^2 minus the open top-right unit square.

    Single bilinear patch with one interior C0 knot line at xi1 = 1/2 that
    maps onto the diagonal from (-1,-1) to (0,0).
    """
    kv1 = KnotVector(np.array([0.0, 0.0, 0.5, 1.0, 1.0]), 1)
    kv2 = KnotVector(np.array([0.0, 0.0, 1.0, 1.0]), 1)
    basis = scalar_space((kv1, kv2))
    pts = np.array(
        [
            [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0],  # outer boundary path
            [0.0, 1.0], [0.0, 0.0], [1.0, 0.0],      # inner boundary path
        ]
    )
    return GeometryMap(basis, pts)


def unit_square() -> GeometryMap:
    kv = KnotVector(np.array([0.0, 0.0, 1.0, 1.0]), 1)
    basis = scalar_space((kv, kv))
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return GeometryMap(basis, pts)


def unit_cube() -> GeometryMap:
    kv = KnotVector(np.array([0.0, 0.0, 1.0, 1.0]), 1)
    basis = scalar_space((kv, kv, kv))
    corners = [
        [float(i), float(j), float(k)]
        for k in (0, 1)
        for j in (0, 1)
        for i in (0, 1)
    ]
    return GeometryMap(basis, np.array(corners))


# -- pushforwards -------------------------------------------------------------


def pushforward_h1(geo: GeometryMap, xi, value, parametric_gradient):
    """Composition pullback: value kept, gradient rotated by DF^{-T}."""
    _, DF, det = geo.eval_map(xi)
    grad = np.linalg.solve(DF.T, np.asarray(parametric_gradient, dtype=float))
    return value, grad


def pushforward_hdiv(geo: GeometryMap, xi, vector, parametric_divergence):
    """Contravariant Piola transform: w = DF w_hat / det, div scales by 1/det."""
    _, DF, det = geo.eval_map(xi)
    w = DF @ np.asarray(vector, dtype=float) / det
    return w, parametric_divergence / det


def pushforward_l2(geo: GeometryMap, xi, scalar):
    """Inverse-integral pullback: q = q_hat / det."""
    _, _, det = geo.eval_map(xi)
    return scalar / det
