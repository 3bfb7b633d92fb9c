"""Gauss-Legendre rules and mapped-domain integration utilities.

Nodes and weights come from the symmetric tridiagonal Jacobi-matrix
eigenproblem (Golub-Welsch); results are symmetrized so paired nodes are
exact negatives. Rules live on (-1, 1) with total weight 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = ["QuadratureRule", "gauss_legendre", "element_points", "integrate_scalar"]


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        if pts.shape != wts.shape or pts.ndim != 1:
            raise ValueError("points and weights must be 1D arrays of equal length")
        if np.any(wts <= 0) or np.any(np.abs(pts) >= 1):
            raise ValueError("need positive weights and points inside (-1, 1)")
        if abs(wts.sum() - 2.0) > 1e-12:
            raise ValueError("weights must sum to 2")

    @property
    def num_points(self) -> int:
        return self.points.size

    def mapped(self, a: float, b: float):
        """Points and scaled weights for the interval [a, b]."""
        half = 0.5 * (b - a)
        return a + half * (self.points + 1.0), half * self.weights


def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on (-1, 1), exact to degree 2n-1."""
    if not 1 <= n <= 16:
        raise ValueError(f"rule size must satisfy 1 <= n <= 16, got {n}")
    if n == 1:
        return QuadratureRule(np.zeros(1), np.full(1, 2.0))
    k = np.arange(1, n)
    off_diag = k / np.sqrt(4.0 * k * k - 1.0)
    nodes, vectors = eigh_tridiagonal(np.zeros(n), off_diag)
    weights = 2.0 * vectors[0, :] ** 2
    # enforce exact +/- symmetry of the rule
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return QuadratureRule(nodes, weights)


def _breakpoint_grids(geo, mesh):
    if mesh is None:
        return [kv.breakpoints for kv in geo.kvs]
    if isinstance(mesh, int):
        mesh = (mesh,) * geo.dim
    return [np.linspace(0.0, 1.0, m + 1) for m in mesh]


def element_points(geo, element_index, rule, mesh=None):
    """Quadrature data for one element of the breakpoint mesh.

    Returns a list of tuples (parametric point, physical point, DF,
    weight * det DF * element scaling). `rule` is a QuadratureRule or one per
    direction; `mesh` overrides the geometry's own breakpoint grid with a
    uniform num-elements-per-direction grid.
    """
    grids = _breakpoint_grids(geo, mesh)
    d = geo.dim
    rules = rule if isinstance(rule, (list, tuple)) else (rule,) * d
    counts = [g.size - 1 for g in grids]
    if isinstance(element_index, int):
        idx, multi = element_index, []
        for m in counts:  # direction 1 fastest
            idx, r = divmod(idx, m)
            multi.append(r)
        if idx:
            raise ValueError(f"element index {element_index} out of range")
    else:
        multi = list(element_index)
    axes, waxes = [], []
    for l in range(d):
        if not 0 <= multi[l] < counts[l]:
            raise ValueError(f"element index {tuple(multi)} out of range")
        a, b = grids[l][multi[l]], grids[l][multi[l] + 1]
        pts, wts = rules[l].mapped(a, b)
        axes.append(pts)
        waxes.append(wts)
    out = []
    for combo in product(*[range(len(ax)) for ax in reversed(axes)]):
        combo = combo[::-1]  # direction 1 fastest
        xi = np.array([axes[l][combo[l]] for l in range(d)])
        w = float(np.prod([waxes[l][combo[l]] for l in range(d)]))
        x, DF, det = geo.eval_map(xi)
        out.append((xi, x, DF, w * det))
    return out


def integrate_scalar(f, geo, mesh, n: int) -> float:
    """Integrate a scalar field over the mapped domain.

    f is vectorized: it takes physical points of shape (npts, d) and returns
    (npts,), the convention shared by every field callable in the package.
    """
    grids = _breakpoint_grids(geo, mesh)
    rule = gauss_legendre(n)
    counts = [g.size - 1 for g in grids]
    total = 0.0
    for multi in product(*[range(m) for m in counts]):
        pts = element_points(geo, tuple(multi), rule, mesh=mesh)
        X = np.array([x for _, x, _, _ in pts])
        w = np.array([w for _, _, _, w in pts])
        total += float(w @ np.asarray(f(X), dtype=float))
    return total
