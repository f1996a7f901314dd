"""Stage one: least-squares CCI suppression that keeps the target ISI channel.

For every output branch n a bank of ``N`` FIR filters of ``Lw`` taps is
fitted on the training so that the filtered sum of all branches reproduces
``h_n * x``. Interference that is not explained by the target channel is
what gets removed.
"""

from dataclasses import dataclass

import numpy as np

from .numkit import DimensionError, SingularMatrixError, hermitian_solve, toeplitz_shift

#: Relative loading of the normal equations.
CCI_LOADING = 1e-6


class CciDesignError(ValueError):
    pass


@dataclass(frozen=True)
class CciFilterBank:
    """``w[n, m]`` is the ``Lw``-tap filter from input branch m to output n."""

    w: np.ndarray

    @property
    def branches(self):
        return self.w.shape[0]

    @property
    def taps(self):
        return self.w.shape[2]

    @classmethod
    def identity(cls, N, Lw=1):
        w = np.zeros((N, N, Lw), dtype=np.complex128)
        w[np.arange(N), np.arange(N), Lw - 1] = 1.0
        return cls(w)


def regression_matrices(received, training, L, Lw):
    """Build the stacked data matrix and target-symbol matrix of the LS fit.

    ``received`` is the ``(N, K0)`` training window aligned as for
    :func:`milbrx.estimate.ls_channel_estimate`; ``training`` has
    ``K0 + L - 1`` symbols. Returns ``(zeta, T3)`` of shapes
    ``(K0-Lw+1, N*Lw)`` and ``(K0-Lw+1, L)``.
    """
    y = np.atleast_2d(np.asarray(received, dtype=np.complex128))
    x = np.asarray(training, dtype=np.complex128)
    N, K0 = y.shape
    if K0 - Lw + 1 < 1:
        raise CciDesignError(f"filter length Lw={Lw} exceeds the {K0}-sample training window")
    if len(x) != K0 + L - 1:
        raise DimensionError(f"training has {len(x)} symbols, expected {K0 + L - 1}")
    zeta = np.hstack([toeplitz_shift(y[m], Lw) for m in range(N)])
    T3 = toeplitz_shift(x[:K0 - Lw + L], L)
    return zeta, T3


def _loaded_lstsq(zeta, rhs):
    """Loaded LS solution of ``zeta @ W = rhs`` in whichever form is square-smaller.

    One refinement step against the unloaded Gram matrix follows the loaded
    solve, so the loading bias drops from O(eps) to O(eps**2) on
    well-conditioned data while ill-conditioned directions stay bounded.
    """
    rows, cols = zeta.shape
    zh = zeta.conj().T
    tall = rows >= cols
    G = zh @ zeta if tall else zeta @ zh
    b = zh @ rhs if tall else rhs
    A = G + CCI_LOADING * np.real(np.trace(G)) / G.shape[0] * np.eye(G.shape[0])
    X = hermitian_solve(A, b, site="design_cci_filters")
    X = X + hermitian_solve(A, b - G @ X, site="design_cci_filters")
    return X if tall else zh @ X


def design_cci_filters(received, training, cir, Lw=4):
    """Fit the ``N x N`` filter bank on the training window."""
    y = np.atleast_2d(np.asarray(received, dtype=np.complex128))
    cir = np.atleast_2d(np.asarray(cir, dtype=np.complex128))
    N = y.shape[0]
    if cir.shape[0] != N:
        raise DimensionError(f"{cir.shape[0]} channel rows for {N} branches")
    zeta, T3 = regression_matrices(y, training, cir.shape[1], Lw)
    if not np.any(zeta):
        raise CciDesignError("training window is identically zero")
    target = T3 @ cir.T  # one column per output branch
    try:
        W = _loaded_lstsq(zeta, target)
    except SingularMatrixError as exc:
        raise CciDesignError(str(exc)) from None
    # W[:, n] stacks [w_{n,0}; w_{n,1}; ...]
    return CciFilterBank(W.T.reshape(N, N, Lw))


def apply_cci_filters(bank, streams):
    """Filter and re-align: ``out[n, k] = sum_m (w[n, m] * y[m])[k + Lw - 1]``.

    The ``Lw - 1`` sample delay of the filters is removed so burst indices
    (and the midamble position) are unchanged; outputs keep the input length.
    """
    y = np.atleast_2d(np.asarray(streams, dtype=np.complex128))
    N, T = y.shape
    if bank.branches != N:
        raise DimensionError(f"filter bank is {bank.branches}-branch, streams have {N}")
    Lw = bank.taps
    out = np.zeros((N, T), dtype=np.complex128)
    for n in range(N):
        for m in range(N):
            out[n] += np.convolve(bank.w[n, m], y[m])[Lw - 1:Lw - 1 + T]
    return out


def ls_residual(bank, received, training, cir):
    """Per-branch LS objective ``|zeta W_n - T3 h_n|^2`` of a filter bank."""
    y = np.atleast_2d(received)
    cir = np.atleast_2d(cir)
    zeta, T3 = regression_matrices(y, training, cir.shape[1], bank.taps)
    W = bank.w.reshape(bank.branches, -1).T
    return np.sum(np.abs(zeta @ W - T3 @ cir.T) ** 2, axis=0)
