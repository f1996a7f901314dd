"""MILB channel shortening for SIMO channels.

Given a multi-branch CIR ``h`` (N x L) and the spatial noise covariance R,
:func:`shorten` designs per-branch prefilters ``v_n`` and a banded
Ungerboeck target ``g`` of memory ``nu`` that maximize the mismatched
information-rate bound

    I_R = K + log det(I + G) - Tr(B (I + G))

over ``I + G = U U^H`` with U banded upper-triangular. Everything is done
per DFT bin on a K-point circular block; :func:`shorten_oracle` repeats the
computation with explicit dense block-circulant matrices.

The filtered and summed stream is ``yhat = V^H Y``, i.e. a circular
correlation of each branch with ``v_n``.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numkit import (
    DimensionError,
    SingularMatrixError,
    convolve,
    dft,
    hermitian_solve,
    hermitian_toeplitz,
    idft,
)

log = logging.getLogger(__name__)


class InvalidMemoryError(ValueError):
    pass


class ShorteningDegenerateError(ArithmeticError):
    """The nu x nu MSE sub-matrix could not be inverted (try nu - 1)."""


class OracleScaleError(ValueError):
    pass


@dataclass(frozen=True)
class MilbWork:
    """Per-bin intermediates of the design."""

    lam: np.ndarray  # (K, N) channel frequency response per branch
    delta: np.ndarray  # (K,) 1 / (1 + lam^H R^-1 lam)
    b: np.ndarray  # (K,) first column of the MSE matrix
    U: np.ndarray  # (K,) DFT of conj(u)
    theta: np.ndarray  # (K, N) prefilter spectra


@dataclass(frozen=True)
class ShorteningSolution:
    v: np.ndarray  # (N, K) circular prefilters
    g: np.ndarray  # (nu+1,) target [g_0 .. g_nu], g_0 real
    u: np.ndarray  # (nu+1,) factor with u_0 > 0
    i_rate: float  # nats per K-symbol block
    K: int
    work: Optional[MilbWork] = None

    @property
    def nu(self):
        return len(self.g) - 1

    @property
    def bits_per_symbol(self):
        return self.i_rate / (self.K * np.log(2.0))


def _check(cir, R, nu, K):
    cir = np.atleast_2d(np.asarray(cir, dtype=np.complex128))
    R = np.atleast_2d(np.asarray(R, dtype=np.complex128))
    N, L = cir.shape
    if R.shape != (N, N):
        raise DimensionError(f"R is {R.shape}, expected ({N}, {N})")
    nu = int(nu)
    if nu < 0 or nu >= L:
        raise InvalidMemoryError(f"memory nu={nu} must satisfy 0 <= nu < L={L}")
    K = int(K)
    if K < max(L, 2 * nu + 1):
        raise DimensionError(f"block size K={K} too small for L={L}, nu={nu}")
    if K < 8 * L:
        log.debug("block size K=%d below 8L=%d; circular approximation is coarse", K, 8 * L)
    return cir, R, nu, K


def default_block_size(L, burst_length=0):
    """Smallest power of two not below ``max(8L, burst_length)``."""
    need = max(8 * int(L), int(burst_length), 1)
    return 1 << (need - 1).bit_length()


def optimal_u(b, nu):
    """Closed-form banded factor maximizing the bound, from MSE entries ``b``.

    With ``B_nu`` the nu x nu Hermitian Toeplitz block of b and
    ``b_nu = [b_1^*, ..., b_nu^*]``:
    ``u_0 = (b_0 - b_nu B_nu^-1 b_nu^H)^(-1/2)`` and
    ``[u_1 .. u_nu] = -u_0 b_nu B_nu^-1``.
    """
    b0 = float(np.real(b[0]))
    if nu == 0:
        sigma2 = b0
        tail = np.zeros(0, dtype=np.complex128)
    else:
        Bnu = hermitian_toeplitz(b[:nu])
        try:
            # b_nu B^-1 = conj(B^-1 [b_1 .. b_nu]) since B is Hermitian
            x = np.conj(hermitian_solve(Bnu, b[1:nu + 1], site="optimal_u (B_nu)"))
        except SingularMatrixError as exc:
            raise ShorteningDegenerateError(str(exc)) from None
        sigma2 = b0 - float(np.real(x @ b[1:nu + 1]))
        tail = x
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ShorteningDegenerateError(f"prediction error variance {sigma2!r} is not positive")
    u0 = 1.0 / np.sqrt(sigma2)
    return np.concatenate([[u0], -u0 * tail]).astype(np.complex128)


def g_from_u(u):
    """Target coefficients from ``u * reverse(conj(u)) = [g_nu..g_1, g_0+1, g_1^*..g_nu^*]``."""
    u = np.asarray(u, dtype=np.complex128)
    nu = len(u) - 1
    c = convolve(u, np.conj(u[::-1]))
    g = c[nu::-1].copy()
    g[0] = np.real(g[0]) - 1.0
    return g


def _bound(delta, U):
    P = np.abs(U) ** 2
    return float(len(delta) + np.sum(np.log(P)) - np.sum(delta * P))


def shorten(cir, R, nu, K, keep_work=False):
    """Design prefilters and Ungerboeck target of memory ``nu``.

    Parameters
    ----------
    cir : (N, L) complex
        Channel taps per branch.
    R : (N, N) complex
        Spatial noise covariance (Hermitian PD).
    nu : int
        Trellis memory, ``0 <= nu < L``.
    K : int
        Circular block size.
    """
    cir, R, nu, K = _check(cir, R, nu, K)
    lam = dft(cir, K).T  # (K, N)
    Rinv_lam = hermitian_solve(R, lam.T, site="shorten (R)").T
    q = np.real(np.sum(lam.conj() * Rinv_lam, axis=1))
    delta = 1.0 / (1.0 + q)
    b = idft(delta.astype(np.complex128), K)
    u = optimal_u(b, nu)
    g = g_from_u(u)
    U = dft(np.conj(u), K)
    theta = (np.abs(U) ** 2 * delta)[:, None] * Rinv_lam
    v = idft(theta.T, K)
    work = MilbWork(lam, delta, b, U, theta) if keep_work else None
    return ShorteningSolution(v=v, g=g, u=u, i_rate=_bound(delta, U), K=K, work=work)


def info_rate(cir, R, nu, K):
    """The bound ``I_R`` in nats per block at memory ``nu``."""
    return shorten(cir, R, nu, K).i_rate


def unconstrained_rate(cir, R, K):
    """``sum_k log(1 + lam_k^H R^-1 lam_k)``, the full-memory optimum."""
    cir = np.atleast_2d(np.asarray(cir, dtype=np.complex128))
    lam = dft(cir, K)
    Rinv = np.linalg.inv(R)
    q = np.real(np.einsum("nk,nm,mk->k", lam.conj(), Rinv, lam))
    return float(np.sum(np.log1p(q)))


def apply_prefilter(sol, streams, K=None):
    """Filter each branch with ``v_n`` and sum: ``yhat = V^H Y`` (length K)."""
    K = sol.K if K is None else int(K)
    if K != sol.K:
        raise DimensionError(f"solution was designed for K={sol.K}, got K={K}")
    y = np.atleast_2d(np.asarray(streams, dtype=np.complex128))
    if y.shape[0] != sol.v.shape[0]:
        raise DimensionError(f"{y.shape[0]} streams for a {sol.v.shape[0]}-branch solution")
    y = y[:, :K]
    Y = dft(y, K)
    V = dft(sol.v, K)
    return idft(np.sum(V.conj() * Y, axis=0), K)


# --------------------------------------------------------------------------
# Dense reference


ORACLE_MAX_K = 64


def block_circulant(cir, K):
    """``NK x K`` block-circulant channel; row ``i*N + n``, column j holds ``h_n[(i-j) % K]``."""
    cir = np.atleast_2d(np.asarray(cir, dtype=np.complex128))
    N, L = cir.shape
    H = np.zeros((N * K, K), dtype=np.complex128)
    for j in range(K):
        for l in range(L):
            i = (j + l) % K
            H[i * N:(i + 1) * N, j] += cir[:, l]
    return H


def shorten_oracle(cir, R, nu, K):
    """Dense-matrix version of :func:`shorten` for small K."""
    cir = np.atleast_2d(np.asarray(cir, dtype=np.complex128))
    R = np.atleast_2d(np.asarray(R, dtype=np.complex128))
    N, L = cir.shape
    if K > ORACLE_MAX_K:
        raise OracleScaleError(f"dense oracle limited to K <= {ORACLE_MAX_K}, got {K}")
    if not 0 <= nu < L:
        raise InvalidMemoryError(f"memory nu={nu} must satisfy 0 <= nu < L={L}")
    H = block_circulant(cir, K)
    IR = np.kron(np.eye(K), R)
    IRinv = np.kron(np.eye(K), np.linalg.inv(R))
    B = np.linalg.inv(H.conj().T @ IRinv @ H + np.eye(K))
    b = B[:, 0]
    # closed-form factor from the dense entries
    if nu > 0:
        Bnu = B[:nu, :nu]
        bnu = np.conj(b[1:nu + 1])
        row = np.linalg.solve(Bnu.T, bnu)  # b_nu B_nu^-1 as a row vector
        sigma2 = np.real(b[0] - row @ bnu.conj())
    else:
        row = np.zeros(0, dtype=np.complex128)
        sigma2 = np.real(b[0])
    u0 = 1.0 / np.sqrt(sigma2)
    u = np.concatenate([[u0], -u0 * row])
    # circulant banded upper factor, I + G = U U^H
    Uc = np.zeros((K, K), dtype=np.complex128)
    for i in range(K):
        for t in range(nu + 1):
            Uc[i, (i + t) % K] = u[t]
    IG = Uc @ Uc.conj().T
    g = IG[:nu + 1, 0].copy()
    g[0] -= 1.0
    V = np.linalg.solve(H @ H.conj().T + IR, H @ IG)
    v = np.stack([V[n::N, 0] for n in range(N)])
    _, logdet = np.linalg.slogdet(IG)
    i_rate = float(K + logdet - np.real(np.trace(B @ IG)))
    return ShorteningSolution(v=v, g=g, u=u, i_rate=i_rate, K=K)


def prefilter_matrix(v):
    """Dense ``NK x K`` matrix V with ``V[i*N + n, j] = v_n[(i-j) % K]``."""
    v = np.atleast_2d(v)
    N, K = v.shape
    V = np.zeros((N * K, K), dtype=np.complex128)
    for j in range(K):
        for i in range(K):
            V[i * N:(i + 1) * N, j] = v[:, (i - j) % K]
    return V
