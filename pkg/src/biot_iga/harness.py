"""Verification harness for the four-field consolidation solver.

Provides the built-in manufactured solutions used by the test batteries, the
four error measures (H1-in-space for displacement, L2 for the other fields, each
either max-in-time or time-integrated depending on the parameter regime),
mesh-refinement studies with the time step tied to the mesh size, numerical
inf-sup constants for both mixed pairs, and a bracket problem that probes the
pressure field for spurious oscillations.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assembly import (
    MaterialParams,
    assemble_blocks,
    default_rule,
    h1_gram,
    hdiv_gram,
    patch_for,
)
from .bspline import make_open_knot_vector, tabulate
from .geometry import GeometryMap, l_shape, quarter_annulus, unit_square
from .quadrature import gauss_legendre
from .solver import smallest_generalized_eigenvalue
from .spaces import (
    MixedBiotSpaces,
    boundary_dofs,
    build_mixed_spaces,
    scalar_space,
    vector_space,
    zero_mean_row,
)
from .stepping import SchemeSpec, TransientData, run_transient

__all__ = [
    "ManufacturedSolution",
    "ConvergenceReport",
    "ReportRow",
    "InfSupReport",
    "TEST_IDS",
    "builtin_solution",
    "domain_for",
    "compute_errors",
    "estimate_order",
    "paper_dt",
    "run_single_case",
    "convergence_study",
    "time_refinement_study",
    "infsup_taylor_hood",
    "infsup_hdiv",
    "infsup_unstable_control",
    "infsup_sweep",
    "cantilever_2d",
    "cantilever_params",
    "sample_scalar_field",
    "count_sign_changes",
    "refinement_comparison_test6",
    "render_report_csv",
    "write_report_csv",
    "ErrorTracker",
]

TEST_IDS = ("test1", "test2", "test3", "test5", "test6")


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form exact fields plus the matching source terms.

    All callables are vectorized: X has shape (n, d); u, w return (n, d),
    p, psi, f_p return (n,), f_u returns (n, d), grad_u returns (n, d, d)
    with grad_u[:, i, j] = d(u_i)/d(x_j).
    """

    u: object
    p: object
    psi: object
    w: object
    f_u: object
    f_p: object
    grad_u: object
    params: MaterialParams


def domain_for(test_id: str) -> GeometryMap:
    """Computational domain each test battery is posed on."""
    if test_id == "test1":
        # The test1 pressure carries the shift 0.1505 = -mean(cos(pi x))
        # on the (1,2) quarter annulus (0.150535 by quadrature); the
        # solution family is mean-free on that domain, not the default one.
        return quarter_annulus(1.0, 2.0)
    if test_id in ("test2", "test3"):
        return l_shape()
    if test_id in ("test5", "test6"):
        return unit_square()
    raise ValueError(f"unknown test id {test_id!r}; use one of {TEST_IDS}")


def builtin_solution(test_id: str, params: MaterialParams) -> ManufacturedSolution:
    """Exact solution fields for the named test battery.

    The displacement and fluid pressure are prescribed; the solid pressure,
    flux, and both sources follow by differentiation and are encoded here in
    closed form (cross-checked symbolically in the test suite).
    """
    if test_id not in TEST_IDS:
        raise ValueError(f"unknown test id {test_id!r}; use one of {TEST_IDS}")
    mu, al, ka, c0 = params.mu, params.alpha, params.kappa, params.c0
    lam, il = params.lam, params.inv_lam
    pi = np.pi

    if test_id in ("test1", "test5"):
        if params.is_incompressible:
            raise ValueError(f"{test_id} is undefined for an infinite Lame parameter")

        # time profiles: (elastic factor, its derivative, pressure factor, its
        # derivative); test1 uses e^t / e^-t, test5 the zero-initial variants
        if test_id == "test1":
            amp = lambda t: (np.exp(t), np.exp(t), np.exp(-t), -np.exp(-t))
            shift = 0.1505
        else:
            amp = lambda t: (np.exp(t) - 1.0, np.exp(t), np.exp(-t) - 1.0, -np.exp(-t))
            shift = 0.0

        def u(X, t):
            E = amp(t)[0]
            S = np.sin(pi * X[:, 0]) * np.sin(pi * X[:, 1])
            return E * np.column_stack([S, S])

        def grad_u(X, t):
            E = amp(t)[0]
            gx = pi * np.cos(pi * X[:, 0]) * np.sin(pi * X[:, 1])
            gy = pi * np.sin(pi * X[:, 0]) * np.cos(pi * X[:, 1])
            G = np.empty((X.shape[0], 2, 2))
            G[:, 0, 0] = G[:, 1, 0] = E * gx
            G[:, 0, 1] = G[:, 1, 1] = E * gy
            return G

        def psi(X, t):
            E = amp(t)[0]
            gx = pi * np.cos(pi * X[:, 0]) * np.sin(pi * X[:, 1])
            gy = pi * np.sin(pi * X[:, 0]) * np.cos(pi * X[:, 1])
            return -lam * E * (gx + gy)

        def p(X, t):
            P = amp(t)[2]
            return P * (np.cos(pi * X[:, 0]) + shift)

        def w(X, t):
            P = amp(t)[2]
            return np.column_stack(
                [ka * pi * P * np.sin(pi * X[:, 0]), np.zeros(X.shape[0])]
            )

        def f_u(X, t):
            E, _, P, _ = amp(t)
            S = np.sin(pi * X[:, 0]) * np.sin(pi * X[:, 1])
            C = np.cos(pi * X[:, 0]) * np.cos(pi * X[:, 1])
            elastic = 2 * mu * pi**2 * S * E - (mu + lam) * pi**2 * (C - S) * E
            return np.column_stack(
                [elastic - al * pi * P * np.sin(pi * X[:, 0]), elastic]
            )

        def f_p(X, t):
            _, Edot, P, Pdot = amp(t)
            gx = pi * np.cos(pi * X[:, 0]) * np.sin(pi * X[:, 1])
            gy = pi * np.sin(pi * X[:, 0]) * np.cos(pi * X[:, 1])
            cx = np.cos(pi * X[:, 0])
            return c0 * Pdot * (cx + shift) + al * Edot * (gx + gy) + ka * pi**2 * P * cx

    elif test_id == "test2":
        if params.is_incompressible:
            raise ValueError("test2 is undefined for an infinite Lame parameter")

        def u(X, t):
            x, y = X[:, 0], X[:, 1]
            return np.exp(t) * np.column_stack(
                [x * (1 - x) * y * (1 - y), np.sin(pi * x) * np.sin(pi * y)]
            )

        def grad_u(X, t):
            x, y = X[:, 0], X[:, 1]
            et = np.exp(t)
            G = np.empty((X.shape[0], 2, 2))
            G[:, 0, 0] = et * (1 - 2 * x) * y * (1 - y)
            G[:, 0, 1] = et * x * (1 - x) * (1 - 2 * y)
            G[:, 1, 0] = et * pi * np.cos(pi * x) * np.sin(pi * y)
            G[:, 1, 1] = et * pi * np.sin(pi * x) * np.cos(pi * y)
            return G

        def psi(X, t):
            x, y = X[:, 0], X[:, 1]
            div = np.exp(t) * (
                (1 - 2 * x) * y * (1 - y) + pi * np.sin(pi * x) * np.cos(pi * y)
            )
            return -lam * div

        def p(X, t):
            return np.exp(-t) * np.cos(pi * X[:, 0]) * np.sin(pi * X[:, 1])

        def w(X, t):
            x, y = X[:, 0], X[:, 1]
            return ka * np.exp(-t) * np.column_stack(
                [pi * np.sin(pi * x) * np.sin(pi * y), -pi * np.cos(pi * x) * np.cos(pi * y)]
            )

        def f_u(X, t):
            x, y = X[:, 0], X[:, 1]
            et, emt = np.exp(t), np.exp(-t)
            g, h = x * (1 - x), y * (1 - y)
            S = np.sin(pi * x) * np.sin(pi * y)
            C = np.cos(pi * x) * np.cos(pi * y)
            f1 = (
                2 * mu * et * (g + h)
                - (mu + lam) * et * (-2 * h + pi**2 * C)
                - al * pi * emt * S
            )
            f2 = (
                2 * mu * pi**2 * et * S
                - (mu + lam) * et * ((1 - 2 * x) * (1 - 2 * y) - pi**2 * S)
                + al * pi * emt * C
            )
            return np.column_stack([f1, f2])

        def f_p(X, t):
            x, y = X[:, 0], X[:, 1]
            et, emt = np.exp(t), np.exp(-t)
            return (
                -c0 * emt * np.cos(pi * x) * np.sin(pi * y)
                + al * et * ((1 - 2 * x) * y * (1 - y) + pi * np.sin(pi * x) * np.cos(pi * y))
                + 2 * ka * pi**2 * emt * np.cos(pi * x) * np.sin(pi * y)
            )

    else:  # test3 and test6 share fields up to the pressure mean shift
        shift = 4 / (3 * pi**2) if test_id == "test3" else 4 / pi**2

        def u(X, t):
            x, y = X[:, 0], X[:, 1]
            et = np.exp(t)
            return np.column_stack(
                [
                    et * np.sin(pi * x) * np.cos(pi * y) + 0.5 * il * et * x**2,
                    -et * np.cos(pi * x) * np.sin(pi * y) + 0.5 * il * et * y**2,
                ]
            )

        def grad_u(X, t):
            x, y = X[:, 0], X[:, 1]
            et = np.exp(t)
            S = np.sin(pi * x) * np.sin(pi * y)
            C = np.cos(pi * x) * np.cos(pi * y)
            G = np.empty((X.shape[0], 2, 2))
            G[:, 0, 0] = pi * et * C + il * et * x
            G[:, 0, 1] = -pi * et * S
            G[:, 1, 0] = pi * et * S
            G[:, 1, 1] = -pi * et * C + il * et * y
            return G

        def psi(X, t):
            return -np.exp(t) * (X[:, 0] + X[:, 1])

        def p(X, t):
            x, y = X[:, 0], X[:, 1]
            return np.exp(t) * (np.sin(pi * x) * np.sin(pi * y) - shift)

        def w(X, t):
            x, y = X[:, 0], X[:, 1]
            return -ka * pi * np.exp(t) * np.column_stack(
                [np.cos(pi * x) * np.sin(pi * y), np.sin(pi * x) * np.cos(pi * y)]
            )

        def f_u(X, t):
            x, y = X[:, 0], X[:, 1]
            et = np.exp(t)
            bulk = (2 * mu * il + 1.0) * et
            f1 = 2 * mu * pi**2 * et * np.sin(pi * x) * np.cos(pi * y) - bulk \
                + al * pi * et * np.cos(pi * x) * np.sin(pi * y)
            f2 = -2 * mu * pi**2 * et * np.cos(pi * x) * np.sin(pi * y) - bulk \
                + al * pi * et * np.sin(pi * x) * np.cos(pi * y)
            return np.column_stack([f1, f2])

        def f_p(X, t):
            x, y = X[:, 0], X[:, 1]
            et = np.exp(t)
            S = np.sin(pi * x) * np.sin(pi * y)
            return c0 * et * (S - shift) + al * il * et * (x + y) + 2 * ka * pi**2 * et * S

    return ManufacturedSolution(
        u=u, p=p, psi=psi, w=w, f_u=f_u, f_p=f_p, grad_u=grad_u, params=params
    )


# -- error norms ---------------------------------------------------------------


class ErrorTracker:
    """Streams per-step errors of a trajectory against a manufactured solution.

    The quadrature tables are built once; each consumed state costs a handful
    of vectorized contractions. The initial state (t = 0) is ignored, matching
    the definition of the error measures over steps 1..N.
    """

    def __init__(self, spaces: MixedBiotSpaces, geo, ms: ManufacturedSolution, rule=None, patch=None):
        self.spaces = spaces
        self.ms = ms
        rule = rule if rule is not None else default_rule(spaces)
        pa = patch if patch is not None else patch_for(spaces, geo, rule)
        self.pa = pa
        d = pa.dim
        self.Xf = pa.X.reshape(-1, d)
        self.tabV = [pa.component(spaces.V, c) for c in range(d)]
        self.GV = [pa.physical_gradient(t) for t in self.tabV]
        self.tabM = pa.component(spaces.M, 0)
        self.tabQ = pa.component(spaces.Q, 0)
        self.tabW = [pa.component(spaces.W, l) for l in range(d)]
        self.norms_u: list = []
        self.norms_p: list = []
        self.norms_w: list = []
        self.norms_psi: list = []
        self.times: list = []

    def _l2sq(self, diff):
        return float(np.sum(self.pa.wdet * diff * diff))

    def state_errors(self, state):
        """(H1 error of u, L2 errors of p, w, psi) at one time level."""
        pa, ms = self.pa, self.ms
        d = pa.dim
        t = state.t
        E, Q = pa.wdet.shape

        uex = ms.u(self.Xf, t).reshape(E, Q, d)
        gex = ms.grad_u(self.Xf, t).reshape(E, Q, d, d)
        eu2 = 0.0
        for c in range(d):
            tab = self.tabV[c]
            cf = state.u[tab.gdofs]
            vals = np.einsum("eqi,ei->eq", tab.N, cf, optimize=True)
            grad = np.einsum("eqid,ei->eqd", self.GV[c], cf, optimize=True)
            eu2 += self._l2sq(vals - uex[:, :, c])
            gdiff = grad - gex[:, :, c, :]
            eu2 += float(np.sum(pa.wdet * np.sum(gdiff * gdiff, axis=-1)))

        # scalar fields map with the inverse Jacobian factor
        psivals = np.einsum("eqi,ei->eq", self.tabM.N, state.psi[self.tabM.gdofs], optimize=True) / pa.det
        epsi2 = self._l2sq(psivals - ms.psi(self.Xf, t).reshape(E, Q))
        pvals = np.einsum("eqi,ei->eq", self.tabQ.N, state.p[self.tabQ.gdofs], optimize=True) / pa.det
        ep2 = self._l2sq(pvals - ms.p(self.Xf, t).reshape(E, Q))

        what = np.stack(
            [
                np.einsum("eqi,ei->eq", tab.N, state.w[tab.gdofs], optimize=True)
                for tab in self.tabW
            ],
            axis=-1,
        )
        wphys = np.einsum("eqab,eqb->eqa", pa.DF, what, optimize=True) / pa.det[:, :, None]
        wdiff = wphys - ms.w(self.Xf, t).reshape(E, Q, d)
        ew2 = float(np.sum(pa.wdet * np.sum(wdiff * wdiff, axis=-1)))

        return math.sqrt(eu2), math.sqrt(ep2), math.sqrt(ew2), math.sqrt(epsi2)

    def consume(self, state):
        if state.t == 0.0:
            return
        eu, ep, ew, epsi = self.state_errors(state)
        self.norms_u.append(eu)
        self.norms_p.append(ep)
        self.norms_w.append(ew)
        self.norms_psi.append(epsi)
        self.times.append(state.t)

    def reduce(self, params: MaterialParams | None = None):
        """(E_u, E_p, E_w, E_psi) from the consumed per-step norms."""
        params = params if params is not None else self.ms.params
        if not self.times:
            raise ValueError("no steps consumed")
        dt = self.times[0] if len(self.times) == 1 else self.times[1] - self.times[0]
        E_u = max(self.norms_u)
        E_w = dt * sum(self.norms_w)
        E_psi = dt * sum(self.norms_psi) if params.is_incompressible else max(self.norms_psi)
        E_p = dt * sum(self.norms_p) if params.c0 == 0.0 else max(self.norms_p)
        return E_u, E_p, E_w, E_psi


def compute_errors(trajectory, ms: ManufacturedSolution, spaces, geo, rule=None, params=None):
    """Error measures of a stored trajectory: (E_u, E_p, E_w, E_psi)."""
    tracker = ErrorTracker(spaces, geo, ms, rule)
    for state in trajectory:
        tracker.consume(state)
    return tracker.reduce(params)


def estimate_order(e_coarse, e_fine, h_coarse, h_fine) -> float:
    """Observed convergence order between two mesh sizes."""
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


# -- convergence studies ---------------------------------------------------------


@dataclass
class ReportRow:
    h: float
    dt: float
    dofs: tuple          # free counts (u, psi, w, p)
    errors: tuple        # (E_u, E_p, E_w, E_psi)
    orders: tuple = (None, None, None, None)


@dataclass
class ConvergenceReport:
    test_id: str
    degrees: tuple       # (p_p, k_p, p_v, k_v)
    scheme: SchemeSpec
    params: MaterialParams
    rows: list = field(default_factory=list)

    def column(self, name):
        i = {"E_u": 0, "E_p": 1, "E_w": 2, "E_psi": 3}[name]
        return [r.errors[i] for r in self.rows]

    def order_column(self, name):
        i = {"E_u": 0, "E_p": 1, "E_w": 2, "E_psi": 3}[name]
        return [r.orders[i] for r in self.rows]


@dataclass
class InfSupReport:
    hs: list
    beta_th: list
    beta_div: list


def _mesh_tuple(test_id: str, m: int) -> tuple:
    if test_id in ("test2", "test3") and m % 2 != 0:
        raise ValueError(
            f"the bent-strip domain needs an even element count per direction, got {m}"
        )
    return (m, m)


def _c0_lines(test_id: str) -> tuple:
    # the bent-strip map kinks along its middle knot line; the fields must
    # be allowed to kink with it or they lose their approximation order
    if test_id in ("test2", "test3"):
        return ((0, 0.5),)
    return ()


def _free_dof_counts(spaces: MixedBiotSpaces) -> tuple:
    return (
        spaces.V.num_dofs - spaces.dirichlet_dofs_V.size,
        spaces.M.num_dofs,
        spaces.W.num_dofs - spaces.normal_trace_dofs_W.size,
        spaces.Q.num_dofs,
    )


def paper_dt(m: int, gamma: int) -> float:
    """Time step tied to the mesh: dt = (6 h)^gamma with h = 1/m, anchored
    at dt = 1 on the coarsest mesh m = 6."""
    return (6.0 / m) ** gamma


def run_single_case(test_id, degrees, m, scheme, params, dt=None, T=1.0, rule=None):
    """One (mesh, scheme) run: returns a ReportRow without order entries."""
    p_p, k_p, p_v, k_v = degrees
    if scheme is None:
        scheme = SchemeSpec("backward_euler")
    geo = domain_for(test_id)
    spaces = build_mixed_spaces(
        2,
        _mesh_tuple(test_id, m),
        p_p,
        k_p,
        p_v,
        k_v,
        c0_is_zero=(params.c0 == 0.0),
        c0_lines=_c0_lines(test_id),
    )
    if dt is None:
        dt = paper_dt(m, spaces.gamma)
    ms = builtin_solution(test_id, params)
    tracker = ErrorTracker(spaces, geo, ms, rule)
    data = TransientData(
        f_u=ms.f_u,
        f_p=ms.f_p,
        u_bc=ms.u,
        w_bc=ms.w,
        initial_u=ms.u,
        initial_psi=ms.psi,
        initial_w=ms.w,
        initial_p=ms.p,
        rule=rule,
        callback=tracker.consume,
    )
    run_transient(spaces, geo, params, scheme, T, dt, data)
    errors = tracker.reduce(params)
    return ReportRow(h=1.0 / m, dt=dt, dofs=_free_dof_counts(spaces), errors=errors)


def _worker_count() -> int:
    raw = os.environ.get("BIOT_IGA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"BIOT_IGA_THREADS must be an integer >= 1, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"BIOT_IGA_THREADS must be an integer >= 1, got {raw!r}")
    return n


def _attach_orders(rows):
    for prev, cur in zip(rows, rows[1:]):
        cur.orders = tuple(
            estimate_order(ep, ec, prev.h, cur.h)
            for ep, ec in zip(prev.errors, cur.errors)
        )
    return rows


def convergence_study(test_id, degrees, meshes, scheme=None, params=None, rule=None, T=1.0, dt=None):
    """Mesh-refinement study; rows ordered as given. dt=None couples the
    time step to the mesh, an explicit dt is held fixed across rows.

    Independent rows may run concurrently (BIOT_IGA_THREADS); the report is
    assembled in mesh order either way.
    """
    scheme = scheme if scheme is not None else SchemeSpec("backward_euler")
    params = params if params is not None else MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0)
    meshes = list(meshes)
    if meshes != sorted(meshes):
        raise ValueError("meshes must be ordered coarse to fine")

    def job(m):
        return run_single_case(test_id, degrees, m, scheme, params, dt=dt, T=T, rule=rule)

    workers = _worker_count()
    if workers == 1 or len(meshes) == 1:
        rows = [job(m) for m in meshes]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, meshes))
    report = ConvergenceReport(test_id, tuple(degrees), scheme, params, _attach_orders(rows))
    return report


def time_refinement_study(test_id, degrees, m, scheme, dts, params=None, rule=None, T=1.0):
    """Fixed mesh, shrinking time step; orders are computed against dt."""
    params = params if params is not None else MaterialParams(1.0, 1.0, 1.0, 1.0, 0.0)
    dts = list(dts)
    rows = []

    def job(dt):
        return run_single_case(test_id, degrees, m, scheme, params, dt=dt, T=T, rule=rule)

    workers = _worker_count()
    if workers == 1 or len(dts) == 1:
        rows = [job(dt) for dt in dts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, dts))
    for prev, cur in zip(rows, rows[1:]):
        cur.orders = tuple(
            estimate_order(ep, ec, prev.dt, cur.dt)
            for ep, ec in zip(prev.errors, cur.errors)
        )
    return ConvergenceReport(test_id, tuple(degrees), scheme, params, rows)


def render_report_csv(report: ConvergenceReport) -> str:
    """CSV text with a parameter comment line; floats carry 6 significant
    digits."""
    d = report.degrees
    p = report.params
    lam = "infinite" if p.is_incompressible else f"{p.lam:.6g}"
    lines = [
        f"# test={report.test_id} p_p={d[0]} k_p={d[1]} p_v={d[2]} k_v={d[3]}"
        f" scheme={report.scheme.kind} bdf_order={report.scheme.bdf_order}"
        f" mu={p.mu:.6g} lam={lam} kappa={p.kappa:.6g} alpha={p.alpha:.6g} c0={p.c0:.6g}",
        "h,dt,dof_u,dof_psi,dof_w,dof_p,E_u,ord_u,E_p,ord_p,E_w,ord_w,E_psi,ord_psi",
    ]
    for r in report.rows:
        cells = [f"{r.h:.6g}", f"{r.dt:.6g}"] + [str(n) for n in r.dofs]
        for e, o in zip(r.errors, r.orders):
            cells.append(f"{e:.6g}")
            cells.append("" if o is None else f"{o:.6g}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_report_csv(report: ConvergenceReport, path):
    with open(path, "w") as f:
        f.write(render_report_csv(report))


# -- numerical inf-sup constants --------------------------------------------------


_DENSE_LIMIT = 4000


def _infsup_pencil(K, B, Mass, constrained, mean_row):
    """sqrt of the smallest eigenvalue of the projected Schur pencil.

    K is the primal Gram, B the pairing (dual x primal), Mass the dual Gram;
    `constrained` lists eliminated primal dofs and `mean_row` spans the
    removed dual constant.
    """
    n = K.shape[0]
    free = np.setdiff1d(np.arange(n), np.asarray(constrained, dtype=np.int64))
    if free.size > _DENSE_LIMIT:
        raise ValueError(
            f"{free.size} free dofs exceeds the dense inf-sup limit {_DENSE_LIMIT}; "
            "use a coarser mesh"
        )
    Kf = K[free][:, free].toarray()
    Bf = B[:, free].toarray()
    S = Bf @ np.linalg.solve(Kf, Bf.T)
    Z = scipy.linalg.null_space(np.asarray(mean_row, dtype=float)[None, :])
    A = Z.T @ S @ Z
    M = Z.T @ Mass.toarray() @ Z
    theta, _ = smallest_generalized_eigenvalue(A, M)
    if theta < 0:
        theta = 0.0
    return math.sqrt(theta)


_UNIT_PARAMS = MaterialParams(mu=0.5, lam=1.0, kappa=1.0, alpha=1.0, c0=1.0)
# mu = 1/2 makes the displacement block the plain symmetric-gradient Gram;
# only the parameter-free pairings B1, B3 and the unit masses are read here


def infsup_taylor_hood(spaces: MixedBiotSpaces, geo, rule=None) -> float:
    """Numerical inf-sup constant of the displacement / solid-pressure pair."""
    rule = rule if rule is not None else default_rule(spaces)
    blocks = assemble_blocks(spaces, geo, _UNIT_PARAMS, rule)
    KV = h1_gram(spaces.V, geo, rule)
    return _infsup_pencil(
        KV, blocks.B1, blocks.A2, spaces.dirichlet_dofs_V, spaces.zero_mean_M
    )


def infsup_hdiv(spaces: MixedBiotSpaces, geo, rule=None) -> float:
    """Numerical inf-sup constant of the flux / fluid-pressure pair."""
    rule = rule if rule is not None else default_rule(spaces)
    blocks = assemble_blocks(spaces, geo, _UNIT_PARAMS, rule)
    KW = hdiv_gram(spaces.W, geo, rule)
    zq = spaces.zero_mean_Q
    if zq is None:
        zq = zero_mean_row(spaces.Q, geo, rule)
    return _infsup_pencil(
        KW, blocks.B3, blocks.A4, spaces.normal_trace_dofs_W, zq
    )


def infsup_unstable_control(num_elements, degree, regularity, geo, rule=None) -> float:
    """Taylor-Hood style constant for an equal-degree, equal-regularity pair.

    This pair violates the mixed stability inequality on purpose; the returned
    constant is expected to decay under mesh refinement. Construction bypasses
    the space builder's legality check.
    """
    if isinstance(num_elements, int):
        num_elements = (num_elements, num_elements)
    kvs = tuple(make_open_knot_vector(m, degree, regularity) for m in num_elements)
    V = vector_space(kvs, pullback="h1")
    M = scalar_space(kvs, pullback="l2")
    rule = rule if rule is not None else gauss_legendre(degree + 2)
    dirichlet = boundary_dofs(V, "all")
    zrow = zero_mean_row(M, geo, rule)
    KV = h1_gram(V, geo, rule)

    # pairing (div v, zeta) in physical variables, assembled here because the
    # block assembler refuses the illegal pair by design
    from .assembly import PatchAssembly
    from .solver import from_triplets

    breaks = [kv.breakpoints for kv in kvs]
    pa = PatchAssembly(geo, breaks, rule)
    tabM = pa.component(M, 0)
    rows, cols, vals = [], [], []
    for c in range(V.dim):
        tab = pa.component(V, c)
        G = pa.physical_gradient(tab)
        Ke = np.einsum("eq,eqi,eqjc->eij", pa.w, tabM.N, G[..., c : c + 1], optimize=True)
        E, ni, nj = Ke.shape
        rows.append(np.broadcast_to(tabM.gdofs[:, :, None], (E, ni, nj)).ravel())
        cols.append(np.broadcast_to(tab.gdofs[:, None, :], (E, ni, nj)).ravel())
        vals.append(Ke.ravel())
    B1 = from_triplets(
        M.num_dofs, V.num_dofs,
        (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)),
    )
    MM = from_triplets(
        M.num_dofs, M.num_dofs, _scalar_mass_triplets(pa, M)
    )
    return _infsup_pencil(KV, B1, MM, dirichlet, zrow)


def _scalar_mass_triplets(pa, space):
    tab = pa.component(space, 0)
    scale = pa.w / pa.det
    Ke = np.einsum("eq,eqi,eqj->eij", scale, tab.N, tab.N, optimize=True)
    E, ni, nj = Ke.shape
    r = np.broadcast_to(tab.gdofs[:, :, None], (E, ni, nj)).ravel()
    c = np.broadcast_to(tab.gdofs[:, None, :], (E, ni, nj)).ravel()
    return r, c, Ke.ravel()


def infsup_sweep(meshes, p_p=1, k_p=0, p_v=2, k_v=0, geo=None, rule=None) -> InfSupReport:
    """Both inf-sup constants across a mesh sweep (dense regime only)."""
    geo = geo if geo is not None else unit_square()
    hs, th, dv = [], [], []
    for m in meshes:
        spaces = build_mixed_spaces(2, (m, m), p_p, k_p, p_v, k_v)
        hs.append(1.0 / m)
        th.append(infsup_taylor_hood(spaces, geo, rule))
        dv.append(infsup_hdiv(spaces, geo, rule))
    return InfSupReport(hs=hs, beta_th=th, beta_div=dv)


# -- bracket oscillation study -----------------------------------------------------


def cantilever_params() -> MaterialParams:
    """Material constants of the bracket study, with the Lame pair derived
    from Young's modulus 1e5 and Poisson ratio 0.4."""
    E, nu = 1.0e5, 0.4
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return MaterialParams(mu=mu, lam=lam, kappa=1.0e-7, alpha=0.93, c0=0.0)


def _dense_eval_matrix(kv, points):
    firsts, table = tabulate(kv, np.asarray(points, dtype=float), 0)
    out = np.zeros((len(points), kv.num_basis))
    for r, (f, row) in enumerate(zip(firsts, table[:, 0, :])):
        out[r, f : f + row.size] = row
    return out


def sample_scalar_field(space, geo, coefs, samples=64):
    """Physical values of an inverse-Jacobian mapped scalar field on a uniform
    parametric grid, returned as (n2, n1) with direction 1 along columns."""
    pts = np.linspace(0.0, 1.0, samples)
    axes = [pts for _ in range(space.dim)]
    _, _, det = geo.eval_grid(axes)
    kvs = space.component_kvs[0]
    T = [_dense_eval_matrix(kv, pts) for kv in kvs]
    C = coefs.reshape(tuple(kv.num_basis for kv in kvs)[::-1])
    vals = T[1] @ C @ T[0].T  # rows: direction 2, cols: direction 1
    return vals / det.reshape(samples, samples)


def count_sign_changes(line, tol_ratio=1e-12):
    scale = np.max(np.abs(line))
    if scale == 0.0:
        return 0
    keep = line[np.abs(line) > tol_ratio * scale]
    if keep.size < 2:
        return 0
    signs = np.sign(keep)
    return int(np.sum(signs[1:] != signs[:-1]))


def cantilever_2d(params=None, mesh=(16, 16), dt=0.001, T=0.001, samples=64, pull=None, rule=None):
    """Bracket problem on the quarter annulus: clamped outer arc, unit
    downward traction on the three remaining edges, impermeable boundary.

    Runs backward Euler to T from zero data and returns the sampled fluid
    pressure with oscillation metrics (global min/max and the sign-change
    count along each radial parametric line). `pull` overrides the traction
    vector on the loaded edges.
    """
    params = params if params is not None else cantilever_params()
    if pull is None:
        pull = np.array([0.0, -1.0])
    geo = quarter_annulus(1.0, 2.0)
    spaces = build_mixed_spaces(2, mesh, 1, 0, 2, 0, c0_is_zero=(params.c0 == 0.0))
    data = TransientData(
        dirichlet_faces=[(0, 1)],
        flux_faces="all",
        traction=([(0, 0), (1, 0), (1, 1)], np.asarray(pull, dtype=float)),
        rule=rule,
    )
    states = run_transient(spaces, geo, params, SchemeSpec("backward_euler"), T, dt, data)
    final = states[-1]
    P = sample_scalar_field(spaces.Q, geo, final.p, samples)
    changes = np.array([count_sign_changes(P[j, :]) for j in range(P.shape[0])])
    metrics = {
        "min": float(P.min()),
        "max": float(P.max()),
        "sign_changes": changes,
        "max_sign_changes": int(changes.max()),
    }
    return P, metrics, final


# -- refinement strategy comparison ------------------------------------------------


def refinement_comparison_test6(params=None, h_meshes=(6, 12, 18), p_degrees=(2, 3, 4), rule=None):
    """Error-versus-dof curves for three refinement strategies on test6.

    h: fixed degree 4 with regularity 2, shrinking mesh; p: fixed coarse mesh,
    C0 splines of increasing degree; k: same meshes and degrees as p but at
    the highest regularity the mixed pair admits (k = p_v - 2). A fourth
    entry "ref" carries the O(dof^-2) guide line anchored at the coarsest
    h-curve point, as (dof, value) pairs.
    """
    params = params if params is not None else MaterialParams(1.0, 1.0e8, 1.0, 1.0, 0.0)
    scheme = SchemeSpec("backward_euler")
    curves = {}

    rows = []
    for m in h_meshes:
        row = run_single_case("test6", (3, 2, 4, 2), m, scheme, params, rule=rule)
        rows.append((sum(row.dofs), row.errors))
    curves["h"] = rows
    n0, e0 = rows[0][0], rows[0][1][0]
    curves["ref"] = [(n, e0 * (n / n0) ** -2.0) for n, _ in rows]

    for label, reg in (("p", lambda pv: 0), ("k", lambda pv: pv - 2)):
        rows = []
        for pv in p_degrees:
            k = reg(pv)
            gamma = pv  # min(p_v, p_p + 1) with p_p = p_v - 1
            dt = (1.0 / 6.0) ** gamma
            row = run_single_case(
                "test6", (pv - 1, k, pv, k), 6, scheme, params, dt=dt, rule=rule
            )
            rows.append((sum(row.dofs), row.errors))
        curves[label] = rows
    return curves
