"""Test 1 convergence on the annulus, compared to the reference table."""
import time

import numpy as np

from biot_iga.assembly import MaterialParams
from biot_iga.harness import convergence_study
from biot_iga.stepping import SchemeSpec

params = MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0)

ref = {
    2: {"E_u": [1.13e0, 2.73e-1], "E_p": [3.12e-1, 9.81e-2],
        "E_w": [9.66e-1, 2.05e-1], "E_psi": [3.76e-1, 8.97e-2]},
    3: {"E_u": [1.91e-1, 3.02e-2], "E_p": [3.10e-1, 5.09e-2],
        "E_w": [9.61e-1, 9.85e-2], "E_psi": [1.04e-1, 1.67e-2]},
}

for pv in (2, 3):
    t0 = time.time()
    rep = convergence_study(
        "test1", (pv - 1, 0, pv, 0), [6, 12], SchemeSpec("backward_euler"), params
    )
    wall = time.time() - t0
    print(f"p_v={pv}  ({wall:.1f}s)")
    for name in ("E_u", "E_p", "E_w", "E_psi"):
        got = rep.column(name)
        exp = ref[pv][name]
        ords = rep.order_column(name)
        ratios = [g / e for g, e in zip(got, exp)]
        print(f"  {name:5s} got {got[0]:.3e} {got[1]:.3e}  ref {exp[0]:.2e} {exp[1]:.2e}"
              f"  ratio {ratios[0]:.2f} {ratios[1]:.2f}  order {ords[1]:.3f}")
    for r in rep.rows:
        print(f"  h=1/{round(1/r.h)} dt={r.dt:.4g} dofs={r.dofs} sum={sum(r.dofs)}")
