"""Small numeric kernel: DFT pairs, Toeplitz shifting, Hermitian solves.

Everything here is double-precision complex and side-effect free.
"""

import numpy as np
import scipy.linalg


class DimensionError(ValueError):
    """Raised when an operand has an unusable shape."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a Hermitian system stays singular after diagonal loading."""

    def __init__(self, site, detail=""):
        self.site = site
        msg = f"singular matrix in {site}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


#: Relative diagonal loading applied by :func:`hermitian_solve`.
SOLVE_LOADING = 1e-12


def dft(x, K):
    """Zero-padded K-point DFT, ``X[s] = sum_k x[k] exp(-2j*pi*k*s/K)``."""
    x = np.asarray(x, dtype=np.complex128)
    if K is None or int(K) <= 0:
        raise DimensionError(f"DFT size must be positive, got {K}")
    K = int(K)
    if x.shape[-1] > K:
        raise DimensionError(f"input length {x.shape[-1]} exceeds DFT size {K}")
    return np.fft.fft(x, n=K, axis=-1)


def idft(X, K=None):
    """Inverse of :func:`dft`, ``x[k] = (1/K) sum_s X[s] exp(+2j*pi*s*k/K)``."""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim == 0 or X.shape[-1] == 0:
        raise DimensionError("IDFT of an empty vector")
    if K is None:
        K = X.shape[-1]
    if int(K) != X.shape[-1]:
        raise DimensionError(f"IDFT size {K} does not match input length {X.shape[-1]}")
    return np.fft.ifft(X, axis=-1)


def toeplitz_shift(a, L):
    """Stack shifted windows of ``a``: row r is ``[a[L-1+r], a[L-2+r], ..., a[r]]``.

    For a length-K vector the result is ``(K-L+1, L)``, so that
    ``toeplitz_shift(x, L) @ h`` is the valid part of ``h * x``.
    """
    a = np.asarray(a)
    K = a.shape[0]
    L = int(L)
    if L < 1 or L > K:
        raise DimensionError(f"shift length L={L} must lie in [1, {K}]")
    rows = np.arange(K - L + 1)[:, None]
    cols = np.arange(L)[None, :]
    return a[rows + L - 1 - cols]


def hermitian_solve(A, b, site="hermitian_solve"):
    """Solve ``A x = b`` for Hermitian positive definite ``A``.

    A diagonal load of ``1e-12 * trace(A) / dim`` is added before the Cholesky
    factorization. ``b`` may be a vector or a matrix of right-hand sides.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    b = np.asarray(b, dtype=np.complex128)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"{site}: matrix must be square, got {A.shape}")
    if b.shape[0] != n:
        raise DimensionError(f"{site}: rhs has {b.shape[0]} rows, matrix has {n}")
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
        raise SingularMatrixError(site, "non-finite entries")
    A = 0.5 * (A + A.conj().T)
    eps = SOLVE_LOADING * np.real(np.trace(A)) / n
    if not eps > 0:
        raise SingularMatrixError(site, "trace is not positive")
    try:
        c = scipy.linalg.cho_factor(A + eps * np.eye(n), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(site, str(exc)) from None
    return scipy.linalg.cho_solve(c, b, check_finite=False)


def convolve(a, b):
    """Full linear convolution of two non-empty sequences."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.size == 0 or b.size == 0:
        raise DimensionError("convolution of an empty sequence")
    return np.convolve(a, b)


def hermitian_toeplitz(first_col):
    """Hermitian Toeplitz matrix with ``M[i, j] = c[i-j]`` for ``i >= j``."""
    c = np.asarray(first_col, dtype=np.complex128)
    return scipy.linalg.toeplitz(c, c.conj())
