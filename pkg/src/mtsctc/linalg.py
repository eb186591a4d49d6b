"""Dense complex linear algebra helpers.

Matrices are plain ``numpy.ndarray`` objects of dtype complex128. Composite
systems are ordered left to right, matching ``numpy.kron``.
"""

from __future__ import annotations

from functools import reduce
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NotNormalized, ShapeMismatch

NORM_TOL = 1e-10
RESIDUAL_SKIP = 1e-8
_EPS = np.finfo(float).eps


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d array, got shape {arr.shape}")
    return arr


def kron(*ms) -> np.ndarray:
    """Kronecker product of any number of matrices or vectors."""
    if not ms:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, [np.asarray(m, dtype=complex) for m in ms])


def _check_dims(m: np.ndarray, dims: Sequence[int]) -> int:
    total = int(np.prod(dims)) if len(dims) else 1
    if any(int(d) < 1 for d in dims):
        raise DimensionMismatch(f"dimensions must be positive: {list(dims)}")
    if m.shape != (total, total):
        raise DimensionMismatch(
            f"matrix shape {m.shape} does not match subsystem dims {list(dims)}"
        )
    return total


def partial_trace(m, dims: Sequence[int], traced: Sequence[int]) -> np.ndarray:
    """Trace out the subsystems listed in ``traced``.

    Args:
        m: square matrix on the composite space.
        dims: dimension of every subsystem, in order.
        traced: indices of the subsystems to remove.

    Returns:
        The reduced matrix on the remaining subsystems, in their original order.
    """
    m = as_matrix(m)
    dims = [int(d) for d in dims]
    _check_dims(m, dims)
    traced = sorted(set(int(t) for t in traced))
    n = len(dims)
    if any(t < 0 or t >= n for t in traced):
        raise DimensionMismatch(f"subsystem index out of range: {traced}")
    keep = [i for i in range(n) if i not in traced]
    t = m.reshape(dims + dims)
    row = list(range(n))
    col = [n + i for i in range(n)]
    for i in traced:
        col[i] = row[i]
    out = [row[i] for i in keep] + [col[i] for i in keep]
    res = np.einsum(t, row + col, out)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return res.reshape(dk, dk)


def partial_transpose(m, dims: Sequence[int], subsystem) -> np.ndarray:
    """Transpose the given subsystem (an index or a list of indices)."""
    m = as_matrix(m)
    dims = [int(d) for d in dims]
    _check_dims(m, dims)
    subs = [subsystem] if np.isscalar(subsystem) else list(subsystem)
    n = len(dims)
    if any(s < 0 or s >= n for s in subs):
        raise DimensionMismatch(f"subsystem index out of range: {subs}")
    t = m.reshape(dims + dims)
    axes = list(range(2 * n))
    for s in subs:
        axes[s], axes[n + s] = axes[n + s], axes[s]
    return t.transpose(axes).reshape(m.shape)


def max_entangled(d: int, normalized: bool = True) -> np.ndarray:
    """The vector sum_i |i>|i>, optionally scaled to unit norm."""
    if d < 1:
        raise DimensionMismatch("dimension must be positive")
    v = np.zeros(d * d, dtype=complex)
    v[:: d + 1] = 1.0
    if normalized:
        v /= np.sqrt(d)
    return v


def complete_unitary(col, column_index: int, d: Optional[int] = None) -> np.ndarray:
    """Build a unitary whose ``column_index``-th column is ``col``.

    The remaining columns come from the computational basis, orthonormalised
    against everything placed so far with modified Gram-Schmidt in index
    order. Candidates whose residual norm drops below 1e-8 are skipped.
    """
    v = np.asarray(col, dtype=complex).reshape(-1)
    if d is None:
        d = v.shape[0]
    if v.shape[0] != d:
        raise DimensionMismatch(f"column has length {v.shape[0]}, expected {d}")
    if not 0 <= column_index < d:
        raise DimensionMismatch(f"column index {column_index} out of range for d={d}")
    if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
        raise NotNormalized(f"column norm {np.linalg.norm(v)!r} is not 1")
    basis = [v]
    for k in range(d):
        if len(basis) == d:
            break
        w = np.zeros(d, dtype=complex)
        w[k] = 1.0
        for b in basis:
            w = w - np.vdot(b, w) * b
        nrm = np.linalg.norm(w)
        if nrm < RESIDUAL_SKIP:
            continue
        # second pass keeps orthogonality at machine precision
        w = w / nrm
        for b in basis:
            w = w - np.vdot(b, w) * b
        basis.append(w / np.linalg.norm(w))
    others = iter(basis[1:])
    u = np.empty((d, d), dtype=complex)
    for j in range(d):
        u[:, j] = v if j == column_index else next(others)
    return u


def proportionality(a, b, tol: float = 1e-9) -> Optional[complex]:
    """Return k with a = k b (up to ``tol`` relative residual), else None.

    Two (numerically) zero arrays are proportional with k = 0.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= _EPS and nb <= _EPS:
        return 0j
    if nb <= _EPS:
        return None
    k = np.vdot(b, a) / np.vdot(b, b)
    if np.linalg.norm(a - k * b) <= tol * max(na, _EPS):
        return complex(k)
    return None


def proportionality_residual(a, b) -> tuple[complex, float]:
    """Best-fit constant and relative residual ||a - k b|| / ||a||."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if nb <= _EPS:
        return 0j, (0.0 if na <= _EPS else float("inf"))
    k = np.vdot(b, a) / np.vdot(b, b)
    return complex(k), float(np.linalg.norm(a - k * b) / max(na, _EPS))


def is_unitary(u, tol: float = 1e-10) -> bool:
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        return False
    return bool(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) <= tol)


def swap(d1: int, d2: int) -> np.ndarray:
    """Permutation taking |i>|j> to |j>|i>."""
    s = np.zeros((d1 * d2, d1 * d2), dtype=complex)
    for i in range(d1):
        for j in range(d2):
            s[j * d1 + i, i * d2 + j] = 1.0
    return s
