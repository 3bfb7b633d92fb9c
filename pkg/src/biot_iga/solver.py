"""Sparse storage, block composition, direct factorization, constrained
solves, and the small dense generalized eigensolve used by inf-sup tests.

Everything here wraps scipy's sparse/dense linear algebra behind the
contracts the rest of the package relies on: canonical CSR construction,
singular-matrix diagnostics with a pivot index, Lagrange-augmented solves
with a constraint-residual guarantee, and deterministic behaviour in
single-threaded runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = [
    "SparseMatrix",
    "BlockSystem",
    "Factorization",
    "SingularMatrixError",
    "from_triplets",
    "to_triplets",
    "factor",
    "solve",
    "solve_constrained",
    "smallest_generalized_eigenvalue",
]

# CSR storage is scipy's; the alias documents which layout the contracts mean.
SparseMatrix = sp.csr_matrix


class SingularMatrixError(RuntimeError):
    """Factorization failure; pivot_index is -1 when it cannot be located."""

    def __init__(self, message: str, pivot_index: int = -1):
        super().__init__(message)
        self.pivot_index = pivot_index


def from_triplets(num_rows: int, num_cols: int, triplets) -> SparseMatrix:
    """Canonical CSR from (row, col, value) triplets; duplicates are summed."""
    if isinstance(triplets, tuple) and len(triplets) == 3:
        rows, cols, vals = triplets
    else:
        trip = list(triplets)
        if trip:
            rows, cols, vals = zip(*trip)
        else:
            rows = cols = vals = ()
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(num_rows, num_cols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def to_triplets(A) -> tuple:
    coo = sp.coo_matrix(A)
    return coo.row.copy(), coo.col.copy(), coo.data.copy()


def _locate_singularity(A) -> int:
    """Best-effort pivot index for a singular square matrix."""
    csr = sp.csr_matrix(A)
    row_counts = np.diff(csr.indptr)
    empty_rows = np.flatnonzero(row_counts == 0)
    if empty_rows.size:
        return int(empty_rows[0])
    col_counts = np.bincount(csr.indices, minlength=csr.shape[1])
    empty_cols = np.flatnonzero(col_counts == 0)
    if empty_cols.size:
        return int(empty_cols[0])
    n = csr.shape[0]
    if n <= 4000:
        _, _, U = sla.lu(csr.toarray())
        diag = np.abs(np.diag(U))
        scale = diag.max() if diag.size else 0.0
        bad = np.flatnonzero(diag <= 1e-13 * max(scale, 1.0))
        if bad.size:
            return int(bad[0])
    return -1


@dataclass
class Factorization:
    """Reusable LU factorization with one iterative-refinement pass."""

    matrix: SparseMatrix
    _lu: object = field(repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        # one refinement step tightens the residual at negligible cost
        x += self._lu.solve(rhs - self.matrix @ x)
        return x


def factor(A) -> Factorization:
    """LU-factorize a square sparse matrix."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        idx = _locate_singularity(A)
        raise SingularMatrixError(
            f"sparse factorization failed ({exc}); pivot index {idx}", idx
        ) from exc
    return Factorization(A, lu)


def solve(factorization: Factorization, rhs: np.ndarray) -> np.ndarray:
    return factorization.solve(rhs)


@dataclass
class BlockSystem:
    """Square block grid plus dense constraint rows appended symmetrically.

    blocks[i][j] is a sparse matrix or None (zero block); constraints are
    full-length dense vectors over the concatenated field unknowns, each
    adding one Lagrange multiplier with zero diagonal.
    """

    blocks: list
    constraints: list = field(default_factory=list)

    @property
    def block_dims(self) -> list:
        nblocks = len(self.blocks)
        dims = [None] * nblocks
        for i, row in enumerate(self.blocks):
            for j, blk in enumerate(row):
                if blk is None:
                    continue
                if dims[i] is None:
                    dims[i] = blk.shape[0]
                elif dims[i] != blk.shape[0]:
                    raise ValueError(f"inconsistent row dimension in block row {i}")
                if dims[j] is None:
                    dims[j] = blk.shape[1]
                elif dims[j] != blk.shape[1]:
                    raise ValueError(f"inconsistent column dimension in block column {j}")
        if any(d is None for d in dims):
            raise ValueError("every block row/column needs at least one matrix")
        return dims

    def assemble(self) -> SparseMatrix:
        K = sp.bmat(self.blocks, format="csr")
        if not self.constraints:
            return K
        C = sp.csr_matrix(np.vstack([np.asarray(c, dtype=float) for c in self.constraints]))
        if C.shape[1] != K.shape[1]:
            raise ValueError("constraint rows must span the concatenated fields")
        z = sp.csr_matrix((C.shape[0], C.shape[0]))
        return sp.bmat([[K, C.T], [C, z]], format="csr")


def solve_constrained(system: BlockSystem, rhs):
    """Solve the Lagrange-augmented block system.

    rhs is either one concatenated vector or a per-field list. Returns
    (fields, multipliers) with fields split back to the block dimensions.
    """
    dims = system.block_dims
    if isinstance(rhs, (list, tuple)):
        rhs = np.concatenate([np.asarray(r, dtype=float) for r in rhs])
    rhs = np.asarray(rhs, dtype=float)
    n = sum(dims)
    if rhs.shape != (n,):
        raise ValueError(f"rhs length {rhs.shape} does not match field dimension {n}")
    ncon = len(system.constraints)
    K = system.assemble()
    try:
        F = factor(K)
    except SingularMatrixError as exc:
        if ncon:
            raise SingularMatrixError(
                f"augmented system singular (rank-deficient constraints?): {exc}",
                exc.pivot_index,
            ) from exc
        raise
    x = F.solve(np.concatenate([rhs, np.zeros(ncon)]))
    fields_flat, multipliers = x[:n], x[n:]
    if ncon:
        C = np.vstack([np.asarray(c, dtype=float) for c in system.constraints])
        cres = np.abs(C @ fields_flat)
        tol = 1e-9 * max(1.0, float(np.linalg.norm(fields_flat)))
        if np.any(cres > tol):
            raise SingularMatrixError(
                f"constraint residual {cres.max():.3e} exceeds tolerance {tol:.3e}"
            )
    fields, pos = [], 0
    for d in dims:
        fields.append(fields_flat[pos : pos + d])
        pos += d
    return fields, multipliers


def smallest_generalized_eigenvalue(A, B):
    """Minimum eigenpair of A v = theta B v for symmetric A, SPD B (dense)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise ValueError("A and B must be square and of equal size")
    if n > 4000:
        raise ValueError(f"dense eigensolve limited to dimension 4000, got {n}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ValueError("A must be symmetric")
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise ValueError("B must be symmetric positive definite") from exc
    theta, vecs = sla.eigh(A, B, subset_by_index=[0, 0])
    value = float(theta[0])
    vector = vecs[:, 0]
    resid = np.linalg.norm(A @ vector - value * (B @ vector))
    scale = np.linalg.norm(A @ vector)
    if scale > 0 and resid > 1e-8 * max(scale, 1.0):
        raise RuntimeError(f"eigenpair residual {resid:.3e} out of tolerance")
    return value, vector
