"""Two probes for the Test 1 absolute-error question.

1. Is 0.1505 the constant that makes (cos(pi x) + C) mean-free on the
   quarter annulus (Cartesian x)?  If so the solution reading is right.
2. High-degree runs at mesh 6 with dt=1: the reference table saturates
   there at the one-step backward-Euler floor (E_p ~ 3.10e-1,
   E_w ~ 9.61e-1, E_u ~ 1.1e-1, E_psi ~ 9.1e-2) for p_v = 4, 5.
   Matching floors would pin stepping + norms + fields as identical.
"""
import numpy as np

from biot_iga.assembly import MaterialParams
from biot_iga.geometry import quarter_annulus
from biot_iga.harness import run_single_case
from biot_iga.quadrature import gauss_legendre

geo = quarter_annulus()
rule = gauss_legendre(8)

# probe 1: zero-mean constant, Monte-Carlo
rng = np.random.default_rng(7)
xi = rng.uniform(0, 1, size=(200000, 2))
vals = []
dets = []
for row in xi:
    X, DF, det = geo.eval_map(row)
    vals.append(np.cos(np.pi * X[0]) * det)
    dets.append(det)
vals = np.array(vals)
dets = np.array(dets)
print("mean of cos(pi x) over annulus:", vals.mean() / dets.mean())
print("  -> zero-mean constant would be", -vals.mean() / dets.mean())

params = MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0)
for pv in (4, 5):
    row = run_single_case("test1", (pv, pv - 1), 6, None, params, dt=1.0, T=1.0)
    eu, ep, ew, epsi = row.errors
    print(f"p_v={pv} m=6 dt=1: E_u={eu:.3e} E_p={ep:.3e} "
          f"E_w={ew:.3e} E_psi={epsi:.3e}")
print("reference floors:   E_u~1.10e-01 E_p~3.10e-01 E_w~9.61e-01 E_psi~9.10e-02")
