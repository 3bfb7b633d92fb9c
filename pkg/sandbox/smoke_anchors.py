"""Validation sweep for the remaining empirical anchors: inf-sup constants,
cantilever metrics, parameter robustness, the near-incompressible study,
and temporal orders. Fast sections first."""
import time

import numpy as np

from biot_iga.assembly import MaterialParams
from biot_iga.geometry import unit_square
from biot_iga.harness import (
    cantilever_2d,
    convergence_study,
    infsup_sweep,
    infsup_unstable_control,
    refinement_comparison_test6,
    time_refinement_study,
)
from biot_iga.quadrature import gauss_legendre
from biot_iga.stepping import SchemeSpec

DEG3 = (2, 1, 3, 1)


def banner(msg):
    print(f"\n=== {msg} " + "=" * max(0, 60 - len(msg)), flush=True)


banner("inf-sup sweep (meshes 2, 4, 8)")
t0 = time.time()
rep = infsup_sweep([2, 4, 8])
print("beta_TH :", " ".join(f"{b:.6f}" for b in rep.beta_th))
print("beta_div:", " ".join(f"{b:.6f}" for b in rep.beta_div))
print(f"[{time.time()-t0:.1f}s]", flush=True)

t0 = time.time()
geo = unit_square()
rule = gauss_legendre(4)
bad = [infsup_unstable_control(m, 2, 1, geo, rule) for m in (2, 4, 8)]
print("unstable :", " ".join(f"{b:.3e}" for b in bad))
print(f"[{time.time()-t0:.1f}s]", flush=True)

banner("cantilever bracket (mesh 16x16)")
t0 = time.time()
P, metrics, final = cantilever_2d()
print(f"min={metrics['min']:.4e} max={metrics['max']:.4e} "
      f"max_sign_changes={metrics['max_sign_changes']}")
print(f"min >= -0.02*max? {metrics['min'] >= -0.02 * metrics['max']}")
print(f"[{time.time()-t0:.1f}s]", flush=True)

banner("Test 3 robustness (mesh 6, 12; p_v=3, k=1)")
t0 = time.time()
cases = {
    "lam=1e3": MaterialParams(1.0, 1.0e3, 1.0, 1.0, 1.0),
    "lam=1e8": MaterialParams(1.0, 1.0e8, 1.0, 1.0, 1.0),
    "c0=1e-3": MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0e-3),
    "c0=1e-8": MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0e-8),
    "kap=1e-3": MaterialParams(1.0, 1.0, 1.0e-3, 1.0, 1.0),
    "kap=1e-8": MaterialParams(1.0, 1.0, 1.0e-8, 1.0, 1.0),
}
rows = {}
for name, pr in cases.items():
    rep = convergence_study("test3", DEG3, [6, 12], params=pr)
    rows[name] = rep.rows
    r = rep.rows[1]
    o = [f"{x:.3f}" if x else "  - " for x in r.orders]
    print(f"{name:9s} m=12: E_u={r.errors[0]:.4e} E_p={r.errors[1]:.4e} "
          f"E_w={r.errors[2]:.4e} E_psi={r.errors[3]:.4e} orders={o}",
          flush=True)

for a, b in [("lam=1e3", "lam=1e8"), ("c0=1e-3", "c0=1e-8")]:
    ea = np.array(rows[a][1].errors)
    eb = np.array(rows[b][1].errors)
    rel = np.abs(ea - eb) / ea
    print(f"{a} vs {b}: max rel diff {rel.max():.2e} (need < 1e-2)")
print(f"[{time.time()-t0:.1f}s]", flush=True)

banner("Test 6 h-IGA study (meshes 6, 12, 18; p_v=4, k=2)")
t0 = time.time()
params6 = MaterialParams(1.0, 1.0e8, 1.0, 1.0, 0.0)
rep = convergence_study("test6", (3, 2, 4, 2), [6, 12, 18], params=params6)
for r in rep.rows:
    o = [f"{x:.3f}" if x else "  - " for x in r.orders]
    print(f"m={round(1/r.h):2d}: E_u={r.errors[0]:.4e} E_p={r.errors[1]:.4e} "
          f"E_w={r.errors[2]:.4e} E_psi={r.errors[3]:.4e} orders={o}",
          flush=True)
print(f"[{time.time()-t0:.1f}s]", flush=True)

banner("Test 6 strategy comparison (small)")
t0 = time.time()
curves = refinement_comparison_test6(h_meshes=(6, 12), p_degrees=(2, 3))
for label, pts in curves.items():
    bits = []
    for n, e in pts:
        val = e if np.isscalar(e) else e[0]
        bits.append(f"(n={n}, E_u={val:.2e})")
    print(f"{label}: " + "  ".join(bits), flush=True)
print(f"[{time.time()-t0:.1f}s]", flush=True)

banner("Test 5 temporal orders (mesh 64, p_v=3)")
params5 = MaterialParams(1.0, 1.0, 1.0, 1.0, 0.0)
dts = [0.25, 0.125, 0.0625, 0.03125]
for kind, order in (("backward_euler", None), ("crank_nicolson", None), ("bdf", 2)):
    t0 = time.time()
    sch = SchemeSpec(kind, order) if order else SchemeSpec(kind)
    rep = time_refinement_study("test5", DEG3, 64, sch, dts, params=params5)
    for field in ("E_u", "E_p", "E_w", "E_psi"):
        errs = rep.column(field)
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        print(f"{kind:15s} {field:5s} slope {slope:+.3f}  errs "
              + " ".join(f"{e:.2e}" for e in errs))
    print(f"[{kind}: {time.time()-t0:.1f}s]", flush=True)

print("\nALL DONE", flush=True)
