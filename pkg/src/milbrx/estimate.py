"""Training-based channel and spatial noise-covariance estimation."""

import numpy as np

from .numkit import DimensionError, hermitian_solve, toeplitz_shift


class InsufficientTrainingError(ValueError):
    pass


#: Relative loading added to the estimated covariance.
COV_LOADING = 1e-6


def training_windows(streams, training, t0, L):
    """Cut the received samples whose full L-symbol history is training.

    ``training`` occupies burst positions ``t0 .. t0+len(training)-1``; the
    returned window is ``(N, len(training)-L+1)`` starting at ``t0+L-1``.
    """
    streams = np.atleast_2d(streams)
    K0 = len(training) - L + 1
    if K0 < L:
        raise InsufficientTrainingError(
            f"{len(training)} training symbols leave K0={K0} < L={L} equations")
    a = t0 + L - 1
    return streams[:, a:a + K0]


def ls_channel_estimate(received, training, L):
    """Least-squares CIR per branch from an aligned training window.

    ``received`` is ``(N, K0)`` with ``K0 = len(training) - L + 1`` samples
    lined up so that row r of ``toeplitz_shift(training, L)`` explains
    sample r. Returns the ``(N, L)`` estimate.
    """
    y = np.atleast_2d(np.asarray(received, dtype=np.complex128))
    training = np.asarray(training, dtype=np.complex128)
    if L > len(training):
        raise InsufficientTrainingError(f"L={L} exceeds training length {len(training)}")
    S = toeplitz_shift(training, L)
    if S.shape[0] < L:
        raise InsufficientTrainingError(f"K0={S.shape[0]} < L={L}")
    if y.shape[1] != S.shape[0]:
        raise DimensionError(f"training window has {y.shape[1]} samples, expected {S.shape[0]}")
    gram = S.conj().T @ S
    return hermitian_solve(gram, S.conj().T @ y.T, site="ls_channel_estimate").T


def residuals(received, training, cir):
    """Training residuals ``y - S h`` per branch, shape ``(N, K0)``."""
    y = np.atleast_2d(np.asarray(received, dtype=np.complex128))
    cir = np.atleast_2d(cir)
    S = toeplitz_shift(np.asarray(training, dtype=np.complex128), cir.shape[1])
    return y - (S @ cir.T).T


def noise_covariance(received, training, cir, loading=COV_LOADING):
    """Spatial (N x N) covariance of the training residuals.

    Only residuals whose full channel history lies inside the training are
    used. The estimate is symmetrized and loaded by
    ``loading * trace / N``; an all-zero residual yields a tiny multiple of
    the identity so the result is always positive definite.
    """
    z = residuals(received, training, cir)
    N, K0 = z.shape
    R = z @ z.conj().T / K0
    R = 0.5 * (R + R.conj().T)
    tr = np.real(np.trace(R))
    eps = loading * tr / N if tr > 0 else loading
    return R + eps * np.eye(N)
