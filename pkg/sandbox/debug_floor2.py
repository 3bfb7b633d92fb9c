"""Hunt for the domain whose zero-mean constant for cos(pi x) is 0.1505,
then measure the one-step time-error floors at high degree."""
import numpy as np

from biot_iga.assembly import MaterialParams
from biot_iga.bspline import KnotVector
from biot_iga.geometry import GeometryMap
from biot_iga.harness import run_single_case
from biot_iga.spaces import scalar_space


def annulus(r0, r1):
    kv_r = KnotVector(np.array([0.0, 0.0, 1.0, 1.0]), 1)
    kv_a = KnotVector(np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]), 2)
    basis = scalar_space((kv_r, kv_a))
    pts = np.array(
        [
            [r0, 0.0], [r1, 0.0],
            [r0, r0], [r1, r1],
            [0.0, r0], [0.0, r1],
        ]
    )
    s = np.sqrt(2.0) / 2.0
    wts = np.array([1.0, 1.0, s, s, 1.0, 1.0])
    return GeometryMap(basis, pts, wts)


rng = np.random.default_rng(7)
xi = rng.uniform(0, 1, size=(400000, 2))

for r0, r1 in [(2.0, 4.0), (1.0, 2.0), (0.5, 1.0), (0.25, 0.5)]:
    geo = annulus(r0, r1)
    num = 0.0
    den = 0.0
    for row in xi[:120000]:
        X, DF, det = geo.eval_map(row)
        num += np.cos(np.pi * X[0]) * det
        den += det
    print(f"radii ({r0},{r1}): mean cos(pi x) = {num/den:+.5f}  "
          f"(zero-mean constant {-num/den:+.5f})")

params = MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0)
for pv in (4, 5):
    row = run_single_case("test1", (pv - 1, 0, pv, 0), 6, None, params,
                          dt=1.0, T=1.0)
    eu, ep, ew, epsi = row.errors
    print(f"p_v={pv} m=6 dt=1: E_u={eu:.3e} E_p={ep:.3e} "
          f"E_w={ew:.3e} E_psi={epsi:.3e}")
print("reference floors:   E_u~1.10e-01 E_p~3.10e-01 E_w~9.61e-01 E_psi~9.10e-02")
