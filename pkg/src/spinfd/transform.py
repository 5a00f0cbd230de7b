"""Fast application of spinners to vectors.

All functions act along axis 0, so ``v`` may be a vector of length ``n`` or
an ``(n, ...)`` stack of column vectors, mirroring ``M @ v``.
"""
from __future__ import annotations

import numpy as np

from .spinner import Spinner, SpinnerKind

__all__ = ["apply", "apply_inverse", "apply_transpose", "fwht", "naive_matvec"]


def fwht(v) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform ``H @ v`` (Sylvester order).

    >>> fwht([1.0, 2.0, 3.0, 4.0])
    array([10., -2., -4.,  0.])
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0] if v.ndim else 0
    if n < 1 or n & (n - 1):
        raise ValueError(f"FWHT length must be a power of two, got {n}")
    out = v.reshape(n, -1)
    h = 1
    while h < n:
        blocks = out.reshape(n // (2 * h), 2, h, -1)
        a = blocks[:, 0]
        b = blocks[:, 1]
        out = np.stack((a + b, a - b), axis=1)
        h *= 2
    return out.reshape(v.shape)


def naive_matvec(rows, v) -> np.ndarray:
    """Textbook dense product ``rows @ v``; the oracle for every fast path."""
    rows = np.asarray(rows, dtype=float)
    v = np.asarray(v, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != v.shape[0]:
        raise ValueError(f"cannot multiply {rows.shape} by {v.shape}")
    return np.tensordot(rows, v, axes=(1, 0))


def _signs(d: np.ndarray, v: np.ndarray) -> np.ndarray:
    return d.reshape((-1,) + (1,) * (v.ndim - 1)) * v


def _check(s: Spinner, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[0] != s.n:
        raise ValueError(f"dimension mismatch: spinner n={s.n}, vector {v.shape}")
    return v


def _base(s: Spinner, v: np.ndarray, transpose: bool) -> np.ndarray:
    if s.base is SpinnerKind.HADAMARD:
        return fwht(v)  # Sylvester H is symmetric
    core = s.core.T if transpose else s.core
    return naive_matvec(core, v)


def apply(s: Spinner, v) -> np.ndarray:
    """Compute ``M @ v`` through the structured factorization."""
    v = _check(s, v)
    if s.kind is SpinnerKind.EXPLICIT:
        return naive_matvec(s.explicit_rows, v)
    out = v
    for d in reversed(s.sign_diagonals):
        out = _base(s, _signs(d, out), transpose=False)
    if not s.sign_diagonals:
        out = _base(s, out, transpose=False)
    if s.normalization != 1.0:
        out = out / s.normalization
    return out


def apply_transpose(s: Spinner, v) -> np.ndarray:
    """Compute ``M.T @ v`` through the transposed factorization."""
    v = _check(s, v)
    if s.kind is SpinnerKind.EXPLICIT:
        return naive_matvec(np.asarray(s.explicit_rows).T, v)
    out = v
    if not s.sign_diagonals:
        out = _base(s, out, transpose=True)
    for d in s.sign_diagonals:
        out = _signs(d, _base(s, out, transpose=True))
    if s.normalization != 1.0:
        out = out / s.normalization
    return out


def apply_inverse(s: Spinner, v) -> np.ndarray:
    """Compute ``M^-1 @ v = M.T @ v / n`` for orthogonal spinners."""
    if s.kind is SpinnerKind.EXPLICIT:
        raise TypeError("apply_inverse needs an orthogonal spinner; solve explicit systems densely")
    return apply_transpose(s, v) / s.n
