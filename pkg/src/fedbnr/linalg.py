"""Cholesky-centric dense linear algebra on float64 ndarrays."""

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, NotPositiveDefinite

SYMMETRY_TOL = 1e-10


def _as_matrix(a, name="a"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    return a


def cholesky(a):
    """Lower Cholesky factor ``L`` with ``L @ L.T == a``.

    No jitter is ever added: a failed factorization is an error.
    """
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("cholesky input is not symmetric")
    if a.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        l = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(l) > 0):
        raise NotPositiveDefinite("zero pivot in Cholesky factorization")
    return l


def solve_psd(l, b):
    """Solve ``(L L^T) x = b`` by forward then backward substitution."""
    l = _as_matrix(l, "l")
    b = np.asarray(b, dtype=np.float64)
    if l.shape[0] != l.shape[1]:
        raise DimensionMismatch(f"factor must be square, got {l.shape}")
    if b.ndim not in (1, 2) or b.shape[0] != l.shape[0]:
        raise DimensionMismatch(f"rhs with shape {b.shape} does not match factor {l.shape}")
    if l.shape[0] == 0:
        return np.zeros_like(b)
    z = la.solve_triangular(l, b, lower=True)
    return la.solve_triangular(l, z, lower=True, trans="T")


def logdet(l):
    """log-determinant of ``L L^T`` from its Cholesky factor."""
    l = _as_matrix(l, "l")
    return 2.0 * float(np.sum(np.log(np.diag(l))))
