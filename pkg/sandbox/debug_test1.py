"""Isolate whether the Test 1 error gap is in the solver or the projection."""
import numpy as np

from biot_iga.assembly import MaterialParams, l2_project, patch_for, default_rule
from biot_iga.harness import ErrorTracker, builtin_solution, domain_for
from biot_iga.spaces import build_mixed_spaces
from biot_iga.stepping import BiotState, SchemeSpec, TransientData, run_transient

params = MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0)
geo = domain_for("test1")
ms = builtin_solution("test1", params)

for m, pv in ((6, 2), (12, 2), (6, 3), (12, 3)):
    spaces = build_mixed_spaces(2, (m, m), pv - 1, 0, pv, 0)
    rule = default_rule(spaces)
    patch = patch_for(spaces, geo, rule)
    tr = ErrorTracker(spaces, geo, ms, rule, patch=patch)
    t = 1.0
    proj = BiotState(
        t=t,
        u=l2_project(spaces.V, geo, lambda X: ms.u(X, t), rule, patch=patch),
        psi=l2_project(spaces.M, geo, lambda X: ms.psi(X, t), rule, patch=patch),
        w=l2_project(spaces.W, geo, lambda X: ms.w(X, t), rule, patch=patch),
        p=l2_project(spaces.Q, geo, lambda X: ms.p(X, t), rule, patch=patch),
    )
    eu, ep, ew, epsi = tr.state_errors(proj)
    print(f"m={m} pv={pv}  best-approx at t=1: E_u {eu:.3e}  E_p {ep:.3e}  "
          f"E_w {ew:.3e}  E_psi {epsi:.3e}")

# transient with many small steps (kill the time error): mesh 6, pv=2, dt=1/64
for m, pv in ((6, 2), (12, 2)):
    spaces = build_mixed_spaces(2, (m, m), pv - 1, 0, pv, 0)
    tr = ErrorTracker(spaces, geo, ms)
    data = TransientData(
        f_u=ms.f_u, f_p=ms.f_p, u_bc=ms.u, w_bc=ms.w,
        initial_u=ms.u, initial_psi=ms.psi, initial_w=ms.w, initial_p=ms.p,
        callback=tr.consume,
    )
    run_transient(spaces, geo, params, SchemeSpec("backward_euler"), 1.0, 1.0 / 64, data)
    E = tr.reduce(params)
    print(f"m={m} pv={pv}  dt=1/64: E_u {E[0]:.3e}  E_p {E[1]:.3e}  E_w {E[2]:.3e}  E_psi {E[3]:.3e}")
