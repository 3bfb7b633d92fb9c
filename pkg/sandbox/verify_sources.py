"""Independent symbolic derivation of all manufactured-solution fields,
compared against the closed forms encoded in harness.builtin_solution."""
import numpy as np
import sympy as sp

from biot_iga.assembly import MaterialParams
from biot_iga.harness import builtin_solution

x, y, t = sp.symbols("x y t")
MU, LAM, KA, AL, C0 = sp.symbols("mu lam kappa alpha c0", positive=True)


def derive(u1, u2, p):
    u = sp.Matrix([u1, u2])
    div_u = sp.diff(u1, x) + sp.diff(u2, y)
    eps = sp.Matrix(
        [
            [sp.diff(u1, x), (sp.diff(u1, y) + sp.diff(u2, x)) / 2],
            [(sp.diff(u1, y) + sp.diff(u2, x)) / 2, sp.diff(u2, y)],
        ]
    )
    sigma = 2 * MU * eps + LAM * div_u * sp.eye(2)
    f_u = sp.Matrix(
        [
            -sp.diff(sigma[0, 0], x) - sp.diff(sigma[0, 1], y) + AL * sp.diff(p, x),
            -sp.diff(sigma[1, 0], x) - sp.diff(sigma[1, 1], y) + AL * sp.diff(p, y),
        ]
    )
    psi = -LAM * div_u
    w = sp.Matrix([-KA * sp.diff(p, x), -KA * sp.diff(p, y)])
    f_p = C0 * sp.diff(p, t) + AL * sp.diff(div_u, t) + sp.diff(w[0], x) + sp.diff(w[1], y)
    grad = sp.Matrix([[sp.diff(u1, x), sp.diff(u1, y)], [sp.diff(u2, x), sp.diff(u2, y)]])
    return u, p, psi, w, f_u, f_p, grad


DEFS = {
    "test1": (
        sp.sin(sp.pi * x) * sp.sin(sp.pi * y) * sp.exp(t),
        sp.sin(sp.pi * x) * sp.sin(sp.pi * y) * sp.exp(t),
        (sp.cos(sp.pi * x) + sp.Rational(1505, 10000)) * sp.exp(-t),
    ),
    "test2": (
        sp.exp(t) * x * (1 - x) * y * (1 - y),
        sp.exp(t) * sp.sin(sp.pi * x) * sp.sin(sp.pi * y),
        sp.exp(-t) * sp.cos(sp.pi * x) * sp.sin(sp.pi * y),
    ),
    "test3": (
        sp.exp(t) * sp.sin(sp.pi * x) * sp.cos(sp.pi * y) + sp.exp(t) / (2 * LAM) * x**2,
        -sp.exp(t) * sp.cos(sp.pi * x) * sp.sin(sp.pi * y) + sp.exp(t) / (2 * LAM) * y**2,
        sp.exp(t) * (sp.sin(sp.pi * x) * sp.sin(sp.pi * y) - 4 / (3 * sp.pi**2)),
    ),
    "test5": (
        (sp.exp(t) - 1) * sp.sin(sp.pi * x) * sp.sin(sp.pi * y),
        (sp.exp(t) - 1) * sp.sin(sp.pi * x) * sp.sin(sp.pi * y),
        (sp.exp(-t) - 1) * sp.cos(sp.pi * x),
    ),
    "test6": (
        sp.exp(t) * sp.sin(sp.pi * x) * sp.cos(sp.pi * y) + sp.exp(t) / (2 * LAM) * x**2,
        -sp.exp(t) * sp.cos(sp.pi * x) * sp.sin(sp.pi * y) + sp.exp(t) / (2 * LAM) * y**2,
        sp.exp(t) * (sp.sin(sp.pi * x) * sp.sin(sp.pi * y) - 4 / sp.pi**2),
    ),
}

PARAM_SETS = {
    "test1": [MaterialParams(1, 1, 1, 1, 1), MaterialParams(2.5, 0.7, 3.0, 0.9, 0.4)],
    "test2": [MaterialParams(1, 1, 1, 1, 1), MaterialParams(0.3, 5.0, 2.0, 0.8, 2.0)],
    "test3": [
        MaterialParams(1, 1e3, 1, 1, 1),
        MaterialParams(1, 1e8, 1, 1, 1),
        MaterialParams(1, 1, 1e-3, 1, 1),
        MaterialParams(1, 1, 1, 1, 1e-8),
    ],
    "test5": [MaterialParams(1, 1, 1, 1, 0.0), MaterialParams(2.0, 3.0, 0.5, 0.6, 0.2)],
    "test6": [MaterialParams(1, 1e8, 1, 1, 0.0)],
}

rng = np.random.default_rng(42)
worst = 0.0
for tid, (u1s, u2s, ps) in DEFS.items():
    us, psym, psis, ws, fus, fps, grads = derive(u1s, u2s, ps)
    args = (x, y, t, MU, LAM, KA, AL, C0)
    fn = {
        "u": sp.lambdify(args, list(us), "numpy"),
        "p": sp.lambdify(args, psym, "numpy"),
        "psi": sp.lambdify(args, psis, "numpy"),
        "w": sp.lambdify(args, list(ws), "numpy"),
        "f_u": sp.lambdify(args, list(fus), "numpy"),
        "f_p": sp.lambdify(args, fps, "numpy"),
        "grad_u": sp.lambdify(args, [grads[i, j] for i in range(2) for j in range(2)], "numpy"),
    }
    for prm in PARAM_SETS[tid]:
        ms = builtin_solution(tid, prm)
        X = rng.uniform(-1, 3, size=(100, 2))
        tv = rng.uniform(0, 1.5)
        bind = (X[:, 0], X[:, 1], tv, prm.mu, prm.lam, prm.kappa, prm.alpha, prm.c0)
        checks = {
            "u": (ms.u(X, tv), np.column_stack([np.broadcast_to(v, 100) for v in fn["u"](*bind)])),
            "p": (ms.p(X, tv), np.broadcast_to(fn["p"](*bind), 100)),
            "psi": (ms.psi(X, tv), np.broadcast_to(fn["psi"](*bind), 100)),
            "w": (ms.w(X, tv), np.column_stack([np.broadcast_to(v, 100) for v in fn["w"](*bind)])),
            "f_u": (ms.f_u(X, tv), np.column_stack([np.broadcast_to(v, 100) for v in fn["f_u"](*bind)])),
            "f_p": (ms.f_p(X, tv), np.broadcast_to(fn["f_p"](*bind), 100)),
            "grad_u": (
                ms.grad_u(X, tv).reshape(100, 4),
                np.column_stack([np.broadcast_to(v, 100) for v in fn["grad_u"](*bind)]),
            ),
        }
        for name, (mine, ref) in checks.items():
            scale = 1.0 + np.abs(ref).max()
            err = np.abs(np.asarray(mine, dtype=float) - ref).max() / scale
            worst = max(worst, err)
            status = "ok" if err < 1e-10 else "FAIL"
            if status == "FAIL":
                print(f"{tid} {prm.lam=} {name}: rel err {err:.3e}  {status}")
print(f"worst relative deviation across all tests/params/fields: {worst:.3e}")
