"""Monte-Carlo cross-check of the H1 projection error, avoiding the
assembly quadrature tables entirely."""
import numpy as np

from biot_iga.assembly import MaterialParams, l2_project
from biot_iga.geometry import quarter_annulus
from biot_iga.harness import builtin_solution
from biot_iga.quadrature import gauss_legendre
from biot_iga.spaces import build_mixed_spaces, eval_scalar, scalar_space

params = MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0)
geo = quarter_annulus()
ms = builtin_solution("test1", params)

m, pv = 6, 2
spaces = build_mixed_spaces(2, (m, m), pv - 1, 0, pv, 0)
rule = gauss_legendre(pv + 2)
uc = l2_project(spaces.V, geo, lambda X: ms.u(X, 1.0), rule)

rng = np.random.default_rng(3)
M = 40000
xi = rng.uniform(0, 1, size=(M, 2))

# component spaces of V as scalar spaces for pointwise evaluation
Vc = scalar_space(spaces.V.component_kvs[0], pullback="h1")
n0 = Vc.num_dofs

l2_acc = 0.0
h1_acc = 0.0
vol = 0.0
for i in range(M):
    X, DF, det = geo.eval_map(xi[i])
    exu = ms.u(X[None, :], 1.0)[0]
    exg = ms.grad_u(X[None, :], 1.0)[0]
    DFinvT = np.linalg.inv(DF).T
    for c in range(2):
        val, pgrad = eval_scalar(Vc, uc[c * n0 : (c + 1) * n0], xi[i])
        g = DFinvT @ pgrad
        l2_acc += (val - exu[c]) ** 2 * det
        gd = g - exg[c]
        h1_acc += gd @ gd * det
    vol += det

print("MC volume:", vol / M, "(expect", 3 * np.pi, ")")
print("MC  L2 err:", np.sqrt(l2_acc / M))
print("MC  H1 semi err:", np.sqrt(h1_acc / M))
print("MC  full H1:", np.sqrt((l2_acc + h1_acc) / M))

# norms of the exact solution for scale
l2n = 0.0
h1n = 0.0
for i in range(M):
    X, DF, det = geo.eval_map(xi[i])
    exu = ms.u(X[None, :], 1.0)[0]
    exg = ms.grad_u(X[None, :], 1.0)[0]
    l2n += exu @ exu * det
    h1n += np.sum(exg * exg) * det
print("||u||_0:", np.sqrt(l2n / M), " |u|_1:", np.sqrt(h1n / M))
