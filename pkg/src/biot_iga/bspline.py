"""Univariate B-spline bases on open knot vectors over [0, 1].

Evaluation returns dense (p+1)-windows together with the index of the first
active function, so callers assemble into global arrays without ever touching
the zero part of the basis. Span lookup uses the right-limit convention: at an
interior knot the span to the right is reported, except at x = 1 where the
last non-empty span is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KnotVector",
    "make_open_knot_vector",
    "find_span",
    "eval_basis",
    "eval_basis_derivatives",
    "derivative_space",
    "tabulate",
    "basis_integrals",
]


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector on [0, 1] with its polynomial degree.

    Attributes
    ----------
    knots : ndarray
        Non-decreasing knots; the first and last values (0 and 1) each appear
        exactly ``degree + 1`` times. Interior multiplicities may reach
        ``degree + 1`` (discontinuous spaces arise as derivative spaces).
    degree : int
        Polynomial degree p >= 0.
    """

    knots: np.ndarray
    degree: int
    num_basis: int = field(init=False)

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 0:
            raise ValueError(f"degree must be >= 0, got {p}")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise ValueError("knot vector too short for degree %d" % p)
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise ValueError("parametric domain must be [0, 1]")
        if np.any(knots[: p + 1] != 0.0) or knots[p + 1] == 0.0:
            raise ValueError("first knot must have multiplicity exactly p + 1")
        if np.any(knots[-(p + 1):] != 1.0) or knots[-(p + 2)] == 1.0:
            raise ValueError("last knot must have multiplicity exactly p + 1")
        interior = knots[p + 1 : knots.size - p - 1]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > p + 1:
                raise ValueError("interior knot multiplicity exceeds p + 1")
        object.__setattr__(self, "num_basis", knots.size - p - 1)

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (element boundaries)."""
        return np.unique(self.knots)

    @property
    def num_elements(self) -> int:
        return self.breakpoints.size - 1

    def key(self):
        """Hashable identity for caching evaluation tables."""
        return (self.degree, self.knots.tobytes())


def make_open_knot_vector(
    num_elements: int, degree: int, regularity: int, creases=()
) -> KnotVector:
    """Uniform open knot vector with `num_elements` elements on [0, 1].

    Interior breakpoints i/num_elements carry multiplicity degree - regularity,
    so every basis function is C^regularity across them. Regularity k is
    restricted to 0 <= k <= degree - 1; fully discontinuous spaces (k = -1)
    are rejected, they only arise here as derivative spaces.

    `creases` lists (x, r) pairs lowering the regularity to r at single
    breakpoints, used where the geometry map itself has a kink that the
    fields must be able to follow. Each x must be an interior breakpoint and
    r cannot exceed the uniform regularity.
    """
    if num_elements < 1:
        raise ValueError(f"num_elements must be >= 1, got {num_elements}")
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    if not 0 <= regularity <= degree - 1:
        raise ValueError(
            f"regularity must satisfy 0 <= k <= degree - 1, got k={regularity} for degree {degree}"
        )
    breaks = np.arange(1, num_elements) / num_elements
    mults = np.full(num_elements - 1, degree - regularity, dtype=int)
    for x, reg in creases:
        if not 0 <= reg <= regularity:
            raise ValueError(
                f"crease regularity must satisfy 0 <= r <= {regularity}, got {reg}"
            )
        j = int(round(x * num_elements)) - 1
        if not (0 <= j < num_elements - 1) or abs(breaks[j] - x) > 1e-12:
            raise ValueError(
                f"crease at {x} is not an interior breakpoint of {num_elements} elements"
            )
        mults[j] = degree - reg
    interior = np.repeat(breaks, mults)
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    return KnotVector(knots, degree)


def find_span(kv: KnotVector, x: float) -> int:
    """Knot span index i with knots[i] <= x < knots[i+1] (right limit).

    At x = 1 the last non-empty span is returned, so the closed endpoint is
    always covered.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    U = kv.knots
    span = int(np.searchsorted(U, x, side="right")) - 1
    return min(max(span, kv.degree), kv.num_basis - 1)


def eval_basis(kv: KnotVector, x: float):
    """Values of the p+1 basis functions active at x.

    Returns
    -------
    first : int
        Global index of the first active function.
    values : ndarray, shape (p+1,)
        values[j] is basis function first + j evaluated at x.
    """
    p = kv.degree
    U = kv.knots
    span = find_span(kv, x)
    values = np.empty(p + 1)
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    values[0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - U[span + 1 - j]
        right[j] = U[span + j] - x
        saved = 0.0
        for r in range(j):
            temp = values[r] / (right[r + 1] + left[j - r])
            values[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        values[j] = saved
    return span - p, values


def eval_basis_derivatives(kv: KnotVector, x: float, max_order: int):
    """Basis values and derivatives up to max_order at x.

    Returns
    -------
    first : int
        Global index of the first active function.
    ders : ndarray, shape (max_order+1, p+1)
        ders[k, j] is the k-th derivative of function first + j. Row 0 holds
        the values. At reduced-continuity knots the right-limit branch is
        differentiated.
    """
    p = kv.degree
    if not 0 <= max_order <= p:
        raise ValueError(f"max_order must satisfy 0 <= order <= p={p}, got {max_order}")
    U = kv.knots
    span = find_span(kv, x)

    # Triangular table: ndu[r, j] holds basis values of degree j in the upper
    # part pos knot differences in the lower part.
    ndu = np.empty((p + 1, p + 1))
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - U[span + 1 - j]
        right[j] = U[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((max_order + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.empty((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, max_order + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    fac = float(p)
    for k in range(1, max_order + 1):
        ders[k, :] *= fac
        fac *= p - k
    return span - p, ders


def derivative_space(kv: KnotVector) -> KnotVector:
    """Knot vector of the space containing derivatives of kv's splines.

    Drops one copy of each end knot and lowers the degree by one; interior
    multiplicities are unchanged, so one order of continuity is lost.
    """
    if kv.degree < 1:
        raise ValueError("cannot lower the degree of a piecewise-constant space")
    return KnotVector(kv.knots[1:-1], kv.degree - 1)


def tabulate(kv: KnotVector, points: np.ndarray, max_order: int):
    """Evaluate values/derivatives at many points.

    Returns (firsts, table) with firsts shape (npts,) and table shape
    (npts, max_order+1, p+1). Plain loop: tabulation happens once per mesh,
    never in inner assembly loops.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    firsts = np.empty(points.size, dtype=np.int64)
    table = np.empty((points.size, max_order + 1, kv.degree + 1))
    for i, x in enumerate(points):
        firsts[i], table[i] = eval_basis_derivatives(kv, float(x), max_order)
    return firsts, table


def basis_integrals(kv: KnotVector) -> np.ndarray:
    """Exact integrals over [0, 1] of every basis function.

    A degree-p B-spline integrates to (knots[i+p+1] - knots[i]) / (p+1).
    """
    p = kv.degree
    U = kv.knots
    return (U[p + 1 :] - U[: U.size - p - 1]) / (p + 1)
