"""Tensor-product spline spaces and the mixed four-field space quadruple.

Degrees of freedom are ordered component-major, then lexicographically in the
tensor indices with direction 1 fastest. Each space records how its fields
map to the physical domain: plain composition ("h1"), the contravariant Piola
transform ("piola", divergence-conforming), or the inverse-Jacobian scaling
("l2", used for both pressure spaces so that divergence pairings reduce to
parametric integrals).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import prod

import numpy as np

from .bspline import (
    KnotVector,
    basis_integrals,
    eval_basis_derivatives,
    make_open_knot_vector,
)

__all__ = [
    "TensorSplineSpace",
    "MixedBiotSpaces",
    "StabilityConditionError",
    "scalar_space",
    "vector_space",
    "build_mixed_spaces",
    "eval_scalar",
    "boundary_dofs",
    "zero_mean_row",
]


class StabilityConditionError(ValueError):
    """Raised when the mixed-space degree/regularity condition fails."""


@dataclass(eq=False)
class TensorSplineSpace:
    """Tensor-product spline space, possibly vector-valued with per-component
    mixed degrees.

    component_kvs[c][l] is the knot vector of component c in direction l.
    """

    dim: int
    component_kvs: tuple
    pullback: str = "h1"
    num_components: int = field(init=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {self.dim}")
        if self.pullback not in ("h1", "piola", "l2"):
            raise ValueError(f"unknown pullback kind {self.pullback!r}")
        comps = tuple(tuple(kvs) for kvs in self.component_kvs)
        for kvs in comps:
            if len(kvs) != self.dim:
                raise ValueError("each component needs one knot vector per direction")
        object.__setattr__(self, "component_kvs", comps)
        object.__setattr__(self, "num_components", len(comps))

    # -- dof bookkeeping ---------------------------------------------------

    def component_shape(self, c: int) -> tuple:
        return tuple(kv.num_basis for kv in self.component_kvs[c])

    def component_size(self, c: int) -> int:
        return prod(self.component_shape(c))

    def component_offset(self, c: int) -> int:
        return sum(self.component_size(i) for i in range(c))

    @property
    def num_dofs(self) -> int:
        return sum(self.component_size(c) for c in range(self.num_components))

    def global_index(self, c: int, tensor_index) -> int:
        """Flat dof index of component c, tensor index (i1, i2[, i3])."""
        shape = self.component_shape(c)
        idx = 0
        for l in reversed(range(self.dim)):
            idx = idx * shape[l] + tensor_index[l]
        return self.component_offset(c) + idx

    def slab_indices(self, c: int, direction: int, side: int) -> np.ndarray:
        """Global indices of component c whose tensor index in `direction`
        is first (side=0) or last (side=1)."""
        shape = self.component_shape(c)
        ranges = [range(n) for n in shape]
        ranges[direction] = [0 if side == 0 else shape[direction] - 1]
        out = [self.global_index(c, idx) for idx in product(*ranges)]
        return np.array(sorted(out), dtype=np.int64)


def scalar_space(kvs, pullback: str = "h1") -> TensorSplineSpace:
    kvs = tuple(kvs)
    return TensorSplineSpace(len(kvs), (kvs,), pullback)


def vector_space(kvs, pullback: str = "h1") -> TensorSplineSpace:
    kvs = tuple(kvs)
    d = len(kvs)
    return TensorSplineSpace(d, tuple(kvs for _ in range(d)), pullback)


def eval_scalar(space: TensorSplineSpace, coefficients, xi):
    """Value and parametric gradient of a scalar spline field at one point."""
    if space.num_components != 1:
        raise ValueError("eval_scalar requires a scalar space")
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (space.num_dofs,):
        raise ValueError(
            f"coefficient length {coefficients.shape} does not match dof count {space.num_dofs}"
        )
    d = space.dim
    kvs = space.component_kvs[0]
    shape = space.component_shape(0)
    c = coefficients.reshape(shape[::-1])  # direction 1 fastest == last axis in C order
    firsts, tables = [], []
    for l in range(d):
        f, ders = eval_basis_derivatives(kvs[l], float(xi[l]), 1)
        firsts.append(f)
        tables.append(ders)
    windows = tuple(
        slice(firsts[l], firsts[l] + kvs[l].degree + 1) for l in reversed(range(d))
    )
    local = c[windows]  # axes ordered (last direction, ..., direction 1)

    def contract(deriv_direction):
        g = local
        for m in reversed(range(d)):  # axis 0 always holds the highest direction left
            row = 1 if m == deriv_direction else 0
            g = np.tensordot(g, tables[m][row], axes=([0], [0]))
        return float(g)

    value = contract(-1)
    grad = np.array([contract(l) for l in range(d)])
    return value, grad


def boundary_dofs(space: TensorSplineSpace, face) -> np.ndarray:
    """Dofs carrying essential data on a parametric face, or on all faces.

    face is "all" or a pair (direction, side) with side in {0, 1}. For plain
    (h1) spaces every component's boundary slab is returned; for Piola spaces
    only the normal component's slab (tangential traces stay free).
    """
    if face == "all":
        faces = [(l, s) for l in range(space.dim) for s in (0, 1)]
    else:
        faces = [face]
    out = set()
    for l, side in faces:
        if not (0 <= l < space.dim and side in (0, 1)):
            raise ValueError(f"invalid face selector {(l, side)}")
        if space.pullback == "piola":
            comps = [l]
        else:
            comps = range(space.num_components)
        for c in comps:
            out.update(space.slab_indices(c, l, side).tolist())
    return np.array(sorted(out), dtype=np.int64)


def zero_mean_row(space: TensorSplineSpace, geo, rule) -> np.ndarray:
    """Coefficient vector m with m·c = ∫_Ω q_h dx for scalar fields q_h.

    For l2-type spaces the Jacobian cancels against the pullback and the row
    reduces to exact parametric basis integrals; for h1-type spaces the row is
    integrated with Gauss quadrature on the mapped domain.
    """
    if space.num_components != 1:
        raise ValueError("zero_mean_row requires a scalar space")
    kvs = space.component_kvs[0]
    if space.pullback == "l2":
        return _parametric_integrals(kvs)
    # h1 pullback: m_i = ∫ B_i(ξ) det DF dξ, element-wise Gauss quadrature
    from .assembly import scalar_moment_vector  # late import, avoids a cycle

    return scalar_moment_vector(space, geo, rule)


def _parametric_integrals(kvs) -> np.ndarray:
    parts = [basis_integrals(kv) for kv in kvs]
    out = parts[0]
    for p in parts[1:]:
        out = np.multiply.outer(p, out).ravel()  # keeps direction 1 fastest
    return out


@dataclass(eq=False)
class MixedBiotSpaces:
    """The four discrete spaces of the mixed formulation plus dof sets.

    V: displacement (vector, h1); M: solid pressure (scalar, l2);
    W: flux (vector, divergence-conforming Piola); Q: fluid pressure
    (scalar, l2). Constraint coefficient vectors are carried here; whether a
    mean constraint is actually enforced is the stepping layer's decision
    (it depends on the material parameters and boundary conditions).
    """

    V: TensorSplineSpace
    M: TensorSplineSpace
    W: TensorSplineSpace
    Q: TensorSplineSpace
    dirichlet_dofs_V: np.ndarray
    normal_trace_dofs_W: np.ndarray
    zero_mean_M: np.ndarray
    zero_mean_Q: np.ndarray | None
    gamma: int
    degrees: dict = field(default_factory=dict)
    num_elements: tuple = ()


def _check_condition(p_p, k_p, p_v, k_v):
    checks = [
        (p_v > k_v, f"p_v > k_v fails: p_v={p_v}, k_v={k_v}"),
        (k_v >= 0, f"k_v >= 0 fails: k_v={k_v}"),
        (p_p > k_p, f"p_p > k_p fails: p_p={p_p}, k_p={k_p}"),
        (k_p >= 0, f"k_p >= 0 fails: k_p={k_p}"),
        (
            p_v - k_v > p_p - k_p,
            f"p_v - k_v > p_p - k_p fails: p_v-k_v={p_v - k_v}, p_p-k_p={p_p - k_p}",
        ),
    ]
    for ok, msg in checks:
        if not ok:
            raise StabilityConditionError("stability condition violated: " + msg)


def build_mixed_spaces(
    dim: int,
    num_elements,
    p_p: int,
    k_p: int,
    p_v: int,
    k_v: int,
    c0_is_zero: bool = False,
    c0_lines=(),
) -> MixedBiotSpaces:
    """Build the mixed quadruple on a shared uniform breakpoint grid.

    The flux space raises degree and regularity by one in its own component
    direction; both pressure spaces live on the reduced (derivative) knot
    vectors, so the parametric divergence of W lands exactly in Q.

    `c0_lines` lists (direction, x) pairs where the geometry map has a kink:
    all fields drop to C0 across those knot lines (the raised flux direction
    to C1, keeping its divergence inside Q) so that pullbacks of smooth
    physical fields stay approximable.
    """
    _check_condition(p_p, k_p, p_v, k_v)
    if dim not in (2, 3):
        raise ValueError(f"spatial dimension must be 2 or 3, got {dim}")
    if isinstance(num_elements, int):
        mesh = (num_elements,) * dim
    else:
        mesh = tuple(num_elements)
        if len(mesh) != dim:
            raise ValueError("need one element count per direction")

    crease = {l: [] for l in range(dim)}
    for l, x in c0_lines:
        if not 0 <= l < dim:
            raise ValueError(f"c0_lines direction {l} out of range for dim {dim}")
        crease[l].append(x)

    def kvs(degree, reg, crease_reg):
        out = []
        for l, m in enumerate(mesh):
            cs = [(x, min(crease_reg, reg)) for x in crease[l]]
            out.append(make_open_knot_vector(m, degree, reg, creases=cs))
        return out

    kv_v = kvs(p_v, k_v, 0)
    kv_p = kvs(p_p, k_p, 0)  # reduced family
    kv_w = kvs(p_p + 1, k_p + 1, 1)  # raised family

    V = vector_space(kv_v, pullback="h1")
    M = scalar_space(kv_p, pullback="l2")
    Q = scalar_space(kv_p, pullback="l2")
    w_comps = []
    for c in range(dim):
        w_comps.append(tuple(kv_w[l] if l == c else kv_p[l] for l in range(dim)))
    W = TensorSplineSpace(dim, tuple(w_comps), pullback="piola")

    zero_mean_M = _parametric_integrals(M.component_kvs[0])
    zero_mean_Q = _parametric_integrals(Q.component_kvs[0]) if c0_is_zero else None

    return MixedBiotSpaces(
        V=V,
        M=M,
        W=W,
        Q=Q,
        dirichlet_dofs_V=boundary_dofs(V, "all"),
        normal_trace_dofs_W=boundary_dofs(W, "all"),
        zero_mean_M=zero_mean_M,
        zero_mean_Q=zero_mean_Q,
        gamma=min(p_v, p_p + 1),
        degrees={"p_p": p_p, "k_p": k_p, "p_v": p_v, "k_v": k_v},
        num_elements=mesh,
    )
