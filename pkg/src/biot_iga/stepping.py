"""Implicit time stepping for the four-field consolidation system.

One backward step solves the block system

    [ A1   -B1^T   0        -B2^T ] [u^n  ]   [ F_u^n ]
    [ B1    A2     0         0    ] [psi^n] = [ b2    ]
    [ 0     0      th*A3  -th*B3^T] [w^n  ]   [ 0     ]
    [ B2    0      th*B3     A4   ] [p^n  ]   [ b4    ]

with th = dt for backward Euler, dt/2 for Crank-Nicolson and dt/lambda_0 for
BDF-k; b2 and b4 collect the history terms of the divergence/mass equations.
Essential displacement and normal-flux data are imposed by symmetric
elimination, mean-value constraints by Lagrange rows. The matrix is
factorized once per (scheme, dt) and reused across all steps.

Mean constraints are activated by the data, not unconditionally: the solid
pressure mean is pinned only in the incompressible limit (where its mass
block vanishes), the fluid pressure mean only when c0 = 0, and neither when
traction faces are present (a traction condition determines the pressure
level through the momentum equation). With a finite Lamé parameter the
divergence equation itself propagates the solid-pressure mean from the
boundary data, and constraining it would destroy the scheme's accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (
    BiotBlocks,
    BoundaryFitter,
    MaterialParams,
    assemble_blocks,
    assemble_body_load,
    assemble_fluid_source,
    assemble_traction,
    default_rule,
    l2_project,
    patch_for,
)
from .solver import SingularMatrixError, factor
from .spaces import MixedBiotSpaces

__all__ = [
    "BiotState",
    "SchemeSpec",
    "StepLoads",
    "TransientData",
    "StepOperator",
    "backward_euler_step",
    "crank_nicolson_step",
    "bdf_step",
    "run_transient",
    "bdf_coefficients",
]

_SCHEME_KINDS = ("backward_euler", "crank_nicolson", "bdf")


@dataclass
class BiotState:
    """Coefficients of the four fields at one time level."""

    t: float
    u: np.ndarray
    psi: np.ndarray
    w: np.ndarray
    p: np.ndarray
    residual: float = 0.0


@dataclass(frozen=True)
class SchemeSpec:
    kind: str
    bdf_order: int = 1

    def __post_init__(self):
        if self.kind not in _SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}; use one of {_SCHEME_KINDS}")
        if self.kind == "bdf" and self.bdf_order not in (1, 2):
            raise ValueError(f"bdf_order must be 1 or 2, got {self.bdf_order}")

    @property
    def history_length(self) -> int:
        return self.bdf_order if self.kind == "bdf" else 1


def bdf_coefficients(order: int) -> np.ndarray:
    """Coefficients lambda_j, j = 0..k, of the k-step BDF formula."""
    if order == 1:
        return np.array([1.0, -1.0])
    if order == 2:
        return np.array([1.5, -2.0, 0.5])
    raise ValueError(f"unsupported BDF order {order}")


@dataclass
class StepLoads:
    """Per-step data: moment vectors and full-length essential values."""

    body: np.ndarray                      # V moments of f_u(t^n) incl. traction
    source: np.ndarray                    # Q moments of f_p(t^n)
    boundary_u: np.ndarray | None = None  # full V vector, read at Dirichlet dofs
    boundary_w: np.ndarray | None = None  # full W vector, read at normal-trace dofs
    source_prev: np.ndarray | None = None  # Q moments of f_p(t^{n-1}) (CN only)


class StepOperator:
    """Factorized constant-coefficient step matrix plus bookkeeping."""

    def __init__(
        self,
        spaces: MixedBiotSpaces,
        blocks: BiotBlocks,
        dt: float,
        scheme: SchemeSpec,
        dirichlet_dofs=None,
        flux_dofs=None,
        has_traction: bool = False,
    ):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.spaces = spaces
        self.blocks = blocks
        self.dt = dt
        self.scheme = scheme
        if scheme.kind == "backward_euler":
            self.bdf = bdf_coefficients(1)
            theta = dt / self.bdf[0]
        elif scheme.kind == "bdf":
            self.bdf = bdf_coefficients(scheme.bdf_order)
            theta = dt / self.bdf[0]
        else:
            self.bdf = None
            theta = dt / 2.0
        self.theta = theta

        nV, nM = spaces.V.num_dofs, spaces.M.num_dofs
        nW, nQ = spaces.W.num_dofs, spaces.Q.num_dofs
        self.dims = (nV, nM, nW, nQ)
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)])
        n = self.offsets[-1]

        K = sp.bmat(
            [
                [blocks.A1, -blocks.B1.T, None, -blocks.B2.T],
                [blocks.B1, blocks.A2, None, None],
                [None, None, theta * blocks.A3, -theta * blocks.B3.T],
                [blocks.B2, None, theta * blocks.B3, blocks.A4],
            ],
            format="csr",
        )

        if dirichlet_dofs is None:
            dirichlet_dofs = spaces.dirichlet_dofs_V
        if flux_dofs is None:
            flux_dofs = spaces.normal_trace_dofs_W
        con = np.concatenate(
            [
                np.asarray(dirichlet_dofs, dtype=np.int64),
                self.offsets[2] + np.asarray(flux_dofs, dtype=np.int64),
            ]
        )
        self.constrained = np.unique(con)
        mask = np.ones(n, dtype=bool)
        mask[self.constrained] = False
        self.free = np.flatnonzero(mask)

        # mean-value Lagrange rows, activated by the data (module docstring);
        # an empty mass block is how the assembly encodes lam=inf or c0=0
        rows = []
        if not has_traction:
            if blocks.A2.nnz == 0:
                r = np.zeros(n)
                r[self.offsets[1] : self.offsets[2]] = spaces.zero_mean_M
                rows.append(r)
            if blocks.A4.nnz == 0:
                zq = spaces.zero_mean_Q
                if zq is None:
                    raise ValueError(
                        "c0 = 0 but the spaces carry no fluid-pressure mean row; "
                        "build them with c0_is_zero=True"
                    )
                r = np.zeros(n)
                r[self.offsets[3] :] = zq
                rows.append(r)
        self.constraint_rows = rows

        Kff = K[self.free][:, self.free]
        self.Kfc = K[self.free][:, self.constrained].tocsr()
        if rows:
            C = sp.csr_matrix(np.vstack([r[self.free] for r in rows]))
            z = sp.csr_matrix((C.shape[0], C.shape[0]))
            A = sp.bmat([[Kff, C.T], [C, z]], format="csr")
        else:
            A = Kff.tocsr()
        try:
            self.factorization = factor(A)
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                f"step system singular (stability condition or constraints): {exc}",
                exc.pivot_index,
            ) from exc
        self.matrix = A

    # -- right-hand sides ----------------------------------------------------

    def _history_rhs(self, history, loads: StepLoads) -> np.ndarray:
        b = np.zeros(self.offsets[-1])
        o = self.offsets
        bl = self.blocks
        b[o[0] : o[1]] = loads.body
        if self.bdf is not None:  # backward Euler or BDF-k
            lam0 = self.bdf[0]
            acc2 = np.zeros(self.dims[1])
            acc4 = np.zeros(self.dims[3])
            for j in range(1, len(self.bdf)):
                s = history[-j]  # state at t^{n-j}
                lj = self.bdf[j]
                acc2 += lj * (bl.B1 @ s.u + bl.A2 @ s.psi)
                acc4 += lj * (bl.A4 @ s.p + bl.B2 @ s.u)
            b[o[1] : o[2]] = -acc2 / lam0
            b[o[3] : o[4]] = (self.dt / lam0) * loads.source - acc4 / lam0
        else:  # Crank-Nicolson
            s = history[-1]
            if loads.source_prev is None:
                raise ValueError("Crank-Nicolson needs the previous source moments")
            b[o[1] : o[2]] = bl.B1 @ s.u + bl.A2 @ s.psi
            b[o[3] : o[4]] = (
                0.5 * self.dt * (loads.source + loads.source_prev)
                + bl.A4 @ s.p
                + bl.B2 @ s.u
                - 0.5 * self.dt * (bl.B3 @ s.w)
            )
        return b

    def step(self, history, loads: StepLoads, t: float) -> BiotState:
        """Advance one step from the given history states to time t."""
        need = self.scheme.history_length
        if len(history) < need:
            raise ValueError(f"scheme needs {need} history states, got {len(history)}")
        n = self.offsets[-1]
        g = np.zeros(n)
        if loads.boundary_u is not None:
            g[: self.offsets[1]] = loads.boundary_u
        if loads.boundary_w is not None:
            g[self.offsets[2] : self.offsets[3]] = loads.boundary_w
        gc = g[self.constrained]

        b = self._history_rhs(history, loads)
        rhs_f = b[self.free] - self.Kfc @ gc
        ncon = len(self.constraint_rows)
        rhs = np.concatenate([rhs_f, np.zeros(ncon)]) if ncon else rhs_f
        z = self.factorization.solve(rhs)
        resid = np.linalg.norm(self.matrix @ z - rhs) / max(np.linalg.norm(rhs), 1e-300)

        x = np.empty(n)
        x[self.free] = z[: self.free.size]
        x[self.constrained] = gc
        o = self.offsets
        return BiotState(
            t=t,
            u=x[o[0] : o[1]],
            psi=x[o[1] : o[2]],
            w=x[o[2] : o[3]],
            p=x[o[3] : o[4]],
            residual=float(resid),
        )


def _single_step(spaces, blocks, history, dt, loads, scheme):
    op = StepOperator(spaces, blocks, dt, scheme)
    t = history[-1].t + dt
    return op.step(history, loads, t)


def backward_euler_step(blocks, spaces, state_prev, dt, loads):
    """One backward Euler step (identical arithmetic to one-step BDF)."""
    return _single_step(spaces, blocks, [state_prev], dt, loads, SchemeSpec("backward_euler"))


def crank_nicolson_step(blocks, spaces, state_prev, dt, loads):
    """One Crank-Nicolson step; loads must carry the previous source moments."""
    return _single_step(spaces, blocks, [state_prev], dt, loads, SchemeSpec("crank_nicolson"))


def bdf_step(blocks, spaces, history, dt, loads, order):
    """One BDF-k step from the last k states (ordered oldest to newest)."""
    return _single_step(spaces, blocks, list(history), dt, loads, SchemeSpec("bdf", order))


@dataclass
class TransientData:
    """Problem data for a transient run.

    Source and boundary callables are vectorized: they take (points, t) with
    points of shape (n, d) and return (n, d) for vector data or (n,) for
    scalar data. None means identically zero.
    """

    f_u: object = None
    f_p: object = None
    u_bc: object = None            # essential displacement data
    w_bc: object = None            # exact flux; its normal trace is imposed
    initial_u: object = None
    initial_psi: object = None
    initial_w: object = None
    initial_p: object = None
    dirichlet_faces: object = "all"  # faces with essential displacement data
    flux_faces: object = "all"       # faces with essential normal flux
    traction: object = None          # (faces, vector or callable) natural BC
    rule: object = None
    callback: object = None          # called with each new BiotState


_MAX_RETAINED = 4096


def run_transient(
    spaces: MixedBiotSpaces,
    geo,
    params: MaterialParams,
    scheme: SchemeSpec,
    T: float,
    dt: float,
    data: TransientData,
):
    """Integrate from projected initial data to time T with uniform steps.

    Returns the list of states (all N+1 when N <= 4096, otherwise only the
    states the scheme still needs; use data.callback to stream). The step
    matrix is factorized once (twice for BDF2, whose first step is a
    backward Euler substep of the same dt).
    """
    N_real = T / dt
    N = round(N_real)
    if N < 1 or abs(N_real - N) > 1e-9 * max(1.0, N):
        raise ValueError(f"T/dt = {N_real} is not a positive integer")

    rule = data.rule if data.rule is not None else default_rule(spaces)
    patch = patch_for(spaces, geo, rule)
    blocks = assemble_blocks(spaces, geo, params, rule, patch=patch)

    faces_dirichlet = data.dirichlet_faces
    faces_flux = data.flux_faces
    fitter = BoundaryFitter(spaces.V, spaces.W, geo)

    from .spaces import boundary_dofs  # local import keeps module deps one-way

    dir_dofs = (
        spaces.dirichlet_dofs_V
        if faces_dirichlet == "all"
        else np.unique(
            np.concatenate(
                [boundary_dofs(spaces.V, f) for f in faces_dirichlet]
                or [np.empty(0, dtype=np.int64)]
            )
        )
    )
    flux_dofs = (
        spaces.normal_trace_dofs_W
        if faces_flux == "all"
        else np.unique(
            np.concatenate(
                [boundary_dofs(spaces.W, f) for f in faces_flux]
                or [np.empty(0, dtype=np.int64)]
            )
        )
    )

    traction_vec = None
    if data.traction is not None:
        tfaces, tval = data.traction
        traction_vec = assemble_traction(spaces.V, geo, tfaces, tval, rule)

    def project(space, func):
        if func is None:
            return np.zeros(space.num_dofs)
        return l2_project(space, geo, lambda X: func(X, 0.0), rule, patch=patch)

    state0 = BiotState(
        t=0.0,
        u=project(spaces.V, data.initial_u),
        psi=project(spaces.M, data.initial_psi),
        w=project(spaces.W, data.initial_w),
        p=project(spaces.Q, data.initial_p),
    )

    has_traction = traction_vec is not None
    op = StepOperator(
        spaces, blocks, dt, scheme,
        dirichlet_dofs=dir_dofs, flux_dofs=flux_dofs, has_traction=has_traction,
    )
    op_startup = None
    if scheme.kind == "bdf" and scheme.bdf_order > 1:
        op_startup = StepOperator(
            spaces, blocks, dt, SchemeSpec("backward_euler"),
            dirichlet_dofs=dir_dofs, flux_dofs=flux_dofs, has_traction=has_traction,
        )

    def moments(t):
        body = (
            assemble_body_load(spaces.V, geo, data.f_u, t, rule, patch=patch)
            if data.f_u is not None
            else np.zeros(spaces.V.num_dofs)
        )
        if traction_vec is not None:
            body = body + traction_vec
        source = (
            assemble_fluid_source(spaces.Q, geo, data.f_p, t, rule, patch=patch)
            if data.f_p is not None
            else np.zeros(spaces.Q.num_dofs)
        )
        return body, source

    def boundary_values(t):
        gu = gw = None
        if dir_dofs.size:
            gu = np.zeros(spaces.V.num_dofs)
            if data.u_bc is not None:
                idx, vals = fitter.displacement_values(data.u_bc, t)
                gu[idx] = vals
        if flux_dofs.size:
            gw = np.zeros(spaces.W.num_dofs)
            if data.w_bc is not None:
                idx, vals = fitter.flux_values(data.w_bc, t)
                gw[idx] = vals
        return gu, gw

    states = [state0]
    history = [state0]
    if data.callback is not None:
        data.callback(state0)
    source_prev = None
    if scheme.kind == "crank_nicolson":
        _, source_prev = moments(0.0)

    for nstep in range(1, N + 1):
        t = nstep * dt
        body, source = moments(t)
        gu, gw = boundary_values(t)
        loads = StepLoads(
            body=body, source=source, boundary_u=gu, boundary_w=gw,
            source_prev=source_prev,
        )
        if op_startup is not None and nstep < scheme.bdf_order:
            state = op_startup.step(history[-1:], loads, t)
        else:
            use = history[-scheme.history_length :] if op.bdf is not None else history[-1:]
            state = op.step(use, loads, t)
        if state.residual > 1e-9:
            raise RuntimeError(
                f"step residual {state.residual:.3e} exceeds 1e-9 at t={t:g}"
            )
        history.append(state)
        if len(history) > max(scheme.history_length, 1) + 1:
            history.pop(0)
        source_prev = source
        if data.callback is not None:
            data.callback(state)
        if N <= _MAX_RETAINED:
            states.append(state)
    if N <= _MAX_RETAINED:
        return states
    return history
