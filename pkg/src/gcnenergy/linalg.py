"""Dense and sparse kernels used by the GCN forward/backward passes.

Dense matrices are plain 2-D ``float64`` numpy arrays. Sparse symmetric
operators are ``scipy.sparse.csr_matrix`` instances with sorted indices and
no duplicate entries; :func:`sym_csr` builds one and :func:`check_sym_csr`
validates one.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' and '.join(map(str, shapes))}")


def _as_dense(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError("dense", a.shape)
    return a


def matmul(a, b):
    """Dense product ``a @ b`` with a shape check."""
    a = _as_dense(a)
    b = _as_dense(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return a @ b


def sym_csr(rows, cols, vals, n: int) -> sp.csr_matrix:
    """Build a symmetric CSR matrix from the full (i, j, value) triplet list.

    Both ``(i, j)`` and ``(j, i)`` must be supplied. Duplicate coordinates are
    rejected rather than summed.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n):
        raise ValueError(f"index out of range for dimension {n}")
    keys = rows * n + cols
    if np.unique(keys).size != keys.size:
        raise ValueError("duplicate entries in sparse matrix")
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.sort_indices()
    check_sym_csr(m)
    return m


def check_sym_csr(s, atol: float = 0.0) -> None:
    """Raise ``ValueError`` unless ``s`` is a square, symmetric CSR matrix with sorted rows."""
    if not sp.isspmatrix_csr(s) and not isinstance(s, sp.csr_array):
        raise ValueError("expected a CSR matrix")
    if s.shape[0] != s.shape[1]:
        raise ShapeError("sym_csr", s.shape)
    if not s.has_sorted_indices:
        raise ValueError("CSR indices must be sorted within each row")
    diff = abs(s - s.T)
    if diff.nnz and diff.max() > atol:
        raise ValueError("sparse matrix is not symmetric")


def spmm(s, b):
    """Sparse-times-dense product ``s @ b``."""
    b = _as_dense(b)
    if s.shape[1] != b.shape[0]:
        raise ShapeError("spmm", s.shape, b.shape)
    return np.asarray(s @ b)


def densify(s):
    return np.asarray(s.toarray(), dtype=np.float64)


def relu(a):
    a = np.asarray(a, dtype=np.float64)
    # np.maximum(-0.0, 0.0) keeps the sign bit; where() does not
    return np.where(a > 0, a, 0.0)


def relu_mask(a):
    """Indicator of strictly positive entries, as float 0/1."""
    return (np.asarray(a) > 0).astype(np.float64)


def log_softmax_rows(a):
    a = _as_dense(a)
    shifted = a - a.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_rows(a):
    """Row-wise softmax, stabilised by subtracting each row's maximum."""
    a = _as_dense(a)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    sq = float(np.sum(a * a))
    if sq == 0.0 or not np.isfinite(sq):
        # underflow/overflow of the squares; retry on a rescaled copy
        scale = float(np.max(np.abs(a))) if a.size else 0.0
        if scale == 0.0 or not np.isfinite(scale):
            return scale
        b = a / scale
        return scale * float(np.sqrt(np.sum(b * b)))
    return float(np.sqrt(sq))


def spectral_norm(a, iters: int = 500, tol: float = 1e-13, v0=None, return_vector: bool = False):
    """Largest singular value of ``a`` by power iteration on ``a.T @ a``.

    The start vector is the normalised all-ones vector unless ``v0`` is
    given (a warm start, e.g. the vector returned for a nearby matrix), so
    the estimate is deterministic. Iteration stops when the relative change
    of the estimate drops below ``tol`` or after ``iters`` iterations. With
    ``return_vector`` the final right singular vector estimate is returned too.
    """
    a = _as_dense(a)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return (0.0, None) if return_vector else 0.0
    # work on a / max|a| so a.T @ a neither underflows nor overflows
    a = a / scale
    m = a.T @ a
    if v0 is None:
        v = np.ones(m.shape[0]) / np.sqrt(m.shape[0])
    else:
        v = np.asarray(v0, dtype=np.float64) / np.linalg.norm(v0)
    w = m @ v
    if np.linalg.norm(w) == 0.0:
        # start vector lies in the null space; nudge it off
        v[0] += 1e-8
        v /= np.linalg.norm(v)
        w = m @ v
        if np.linalg.norm(w) == 0.0:
            v = np.eye(m.shape[0])[int(np.argmax(np.diag(m)))]
            w = m @ v
    est = float(v @ w)
    for _ in range(iters):
        v = w / np.linalg.norm(w)
        w = m @ v
        new = float(v @ w)
        if abs(new - est) <= tol * abs(new):
            est = new
            break
        est = new
    sigma = scale * float(np.sqrt(max(est, 0.0)))
    return (sigma, v) if return_vector else sigma
