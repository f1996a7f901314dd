"""Trellis equalizers and their complexity accounting.

* :func:`mlm_ungerboeck` - single-stream max-log-MAP on the Ungerboeck
  observation ``yhat`` with banded target ``g`` (the MILB demodulator).
* :func:`ddf_mlm_forney` - multi-branch max-log-MAP on the Forney model with
  per-survivor decision feedback for taps beyond the trellis memory (HOM
  demodulator when fed by :func:`minphase_prefilter`).
* :func:`full_mlse_oracle` - exhaustive sequence search for small blocks.
* :func:`count_ops` - real multiplications per trellis stage.

Metrics are log-likelihood-like and maximized. LLRs follow
``max(bit = 1) - max(bit = 0)``.
"""

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from . import _trellis
from .numkit import DimensionError, dft
from .sigmodel import Alphabet


class Metric(enum.Enum):
    UNGERBOECK = "ungerboeck"
    FORNEY_DDF = "forney-ddf"
    FORNEY_FULL = "forney-full"


@dataclass(frozen=True)
class TrellisSpec:
    alphabet: Alphabet
    nu: int
    metric: Metric = Metric.UNGERBOECK
    L_full: int = 0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"trellis memory must be non-negative, got {self.nu}")
        if self.metric is not Metric.UNGERBOECK and self.L_full < self.nu + 1:
            raise ValueError(f"L_full={self.L_full} must exceed nu={self.nu} for a Forney trellis")

    @property
    def states(self):
        return self.alphabet.size ** self.nu

    @property
    def feedback_depth(self):
        if self.metric is Metric.UNGERBOECK:
            return 0
        return self.L_full - 1 - self.nu


@dataclass(frozen=True)
class OpCounter:
    real_mults_per_stage: int
    lut_ops_per_stage: int = 0


class OracleScaleError(ValueError):
    pass


class PrefilterDesignError(ValueError):
    pass


def _allowed(known, T):
    if known is None:
        return np.full(T, -1, dtype=np.int64)
    known = np.asarray(known, dtype=np.int64)
    if known.shape != (T,):
        raise DimensionError(f"known-symbol mask has shape {known.shape}, expected ({T},)")
    return known


def llr_from_app(app, alphabet):
    """Per-bit max-log LLRs from per-symbol path maxima ``app`` (T, S)."""
    labels = alphabet.labels.astype(bool)
    m = labels.shape[1]
    llr = np.empty((app.shape[0], m))
    for b in range(m):
        llr[:, b] = app[:, labels[:, b]].max(axis=1) - app[:, ~labels[:, b]].max(axis=1)
    return llr


def _hard(app):
    return np.argmax(app, axis=1)


def mlm_ungerboeck(yhat, g, spec, known=None):
    """Max-log-MAP over ``S**nu`` states with the Ungerboeck branch metric.

    Parameters
    ----------
    yhat : (T,) complex
        De-rotated filtered stream, one sample per symbol.
    g : (nu+1,) complex
        Target ``[g_0 .. g_nu]``.
    spec : TrellisSpec
    known : (T,) int, optional
        Label index of known symbols, -1 elsewhere.

    Returns
    -------
    symbols : (T,) int
        Hard label decisions.
    llr : (T, bits_per_symbol) float
    """
    yhat = np.asarray(yhat, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    if yhat.size == 0:
        raise DimensionError("empty stream")
    if len(g) != spec.nu + 1:
        raise DimensionError(f"target has {len(g)} taps, trellis memory needs {spec.nu + 1}")
    app = ungerboeck_app(yhat, g, spec, known)
    return _hard(app), llr_from_app(app, spec.alphabet)


def ungerboeck_app(yhat, g, spec, known=None):
    pts = spec.alphabet.points.astype(np.complex128)
    allowed = _allowed(known, len(yhat))
    metric = _trellis.ungerboeck_metrics(yhat, g, pts, allowed, spec.nu)
    final = np.zeros(spec.states)
    return _trellis.maxlog_app(metric, spec.alphabet.size, spec.nu, final)


def ddf_mlm_forney(streams, cirs, spec, known=None, length=None):
    """Multi-branch Forney max-log-MAP with per-survivor decision feedback.

    ``streams`` is ``(N, T_obs)``. ``length`` is the number of transmitted
    symbols (default ``T_obs - L + 1``); later observations are treated as
    the channel tail of a zero-terminated block.
    """
    y = np.atleast_2d(np.asarray(streams, dtype=np.complex128))
    h = np.atleast_2d(np.asarray(cirs, dtype=np.complex128))
    if y.shape[0] != h.shape[0]:
        raise DimensionError(f"{y.shape[0]} streams but {h.shape[0]} channel rows")
    L = h.shape[1]
    if spec.nu > L - 1:
        raise DimensionError(f"trellis memory {spec.nu} exceeds channel memory {L - 1}")
    T = y.shape[1] - L + 1 if length is None else int(length)
    if T < 1 or T > y.shape[1]:
        raise DimensionError(f"cannot detect {T} symbols from {y.shape[1]} samples")
    pts = spec.alphabet.points.astype(np.complex128)
    metric, final = _trellis.ddf_forney(y, h, pts, _allowed(known, T), spec.nu)
    app = _trellis.maxlog_app(metric, spec.alphabet.size, spec.nu, final)
    return _hard(app), llr_from_app(app, spec.alphabet)


def full_viterbi(streams, cirs, alphabet, known=None, length=None):
    """Full-memory Forney trellis (``nu = L - 1``, no feedback)."""
    L = np.atleast_2d(cirs).shape[1]
    spec = TrellisSpec(alphabet, L - 1, Metric.FORNEY_FULL, L)
    return ddf_mlm_forney(streams, cirs, spec, known=known, length=length)


ORACLE_MAX_SEQUENCES = 1 << 20


def full_mlse_oracle(streams, cirs, alphabet, K):
    """Exhaustive search over all ``S**K`` label sequences.

    Minimizes ``sum_k sum_n |y[n, k] - (h_n * x)[k]|^2`` over every sample of
    ``streams`` (symbols past K are zero). Ties go to the lexicographically
    smallest label sequence.
    """
    y = np.atleast_2d(np.asarray(streams, dtype=np.complex128))
    h = np.atleast_2d(np.asarray(cirs, dtype=np.complex128))
    S = alphabet.size
    if S ** K > ORACLE_MAX_SEQUENCES or K > 12:
        raise OracleScaleError(f"{S}**{K} sequences is too many for exhaustive search")
    T_obs = y.shape[1]
    seqs = np.array(list(itertools.product(range(S), repeat=K)), dtype=np.int64)
    x = alphabet.points[seqs]  # (S**K, K)
    cost = np.zeros(len(seqs))
    for n in range(y.shape[0]):
        conv = np.zeros((len(seqs), T_obs), dtype=np.complex128)
        for l, hl in enumerate(h[n]):
            stop = min(T_obs, K + l)
            if stop > l:
                conv[:, l:stop] += hl * x[:, :stop - l]
        cost += np.sum(np.abs(y[n] - conv) ** 2, axis=1)
    return seqs[int(np.argmin(cost))]


def matched_filter_model(streams, cirs, R, length):
    """Exact Ungerboeck observation for a zero-terminated block.

    Returns ``(yhat, g)`` with ``yhat = H^H R^-1 y`` over ``length`` symbols
    and ``g_l = sum_m h_m^H R^-1 h_{m+l}`` for ``l = 0 .. L-1`` (linear, not
    circular, convolution).
    """
    y = np.atleast_2d(np.asarray(streams, dtype=np.complex128))
    h = np.atleast_2d(np.asarray(cirs, dtype=np.complex128))
    N, L = h.shape
    Rinv = np.linalg.inv(np.atleast_2d(R))
    hw = Rinv @ h  # R^-1 h_l per tap
    yhat = np.zeros(length, dtype=np.complex128)
    for k in range(length):
        for l in range(L):
            if k + l < y.shape[1]:
                yhat[k] += hw[:, l].conj() @ y[:, k + l]
    g = np.array([sum(h[:, m].conj() @ hw[:, m + l] for m in range(L - l)) for l in range(L)])
    g[0] = g[0].real
    return yhat, g


# --------------------------------------------------------------------------
# Minimum-phase prefilter (HOM baseline)


@dataclass(frozen=True)
class MinPhaseDesign:
    """Spatial whitening followed by per-branch all-pass filtering."""

    whitening: np.ndarray  # (N, N) R^-1/2
    whitened_cir: np.ndarray  # (N, L)
    cir: np.ndarray  # (N, L) minimum-phase CIRs

    def allpass(self, K):
        """Per-branch all-pass spectra on a K-point grid, shape ``(N, K)``."""
        H = dft(self.whitened_cir, K)
        Hm = dft(self.cir, K)
        den = np.conj(Hm)
        floor = 1e-12 * np.max(np.abs(Hm), axis=1, keepdims=True)
        den = np.where(np.abs(den) < floor, floor, den)
        return np.conj(H) / den

    def apply(self, streams, K):
        """Whiten and filter ``(N, T)`` streams circularly on K points."""
        y = np.atleast_2d(np.asarray(streams, dtype=np.complex128))
        T = y.shape[1]
        if K < T:
            raise DimensionError(f"block size {K} shorter than stream length {T}")
        yw = self.whitening @ y
        out = np.fft.ifft(self.allpass(K) * np.fft.fft(yw, n=K, axis=1), axis=1)
        return out[:, :T]


def inv_sqrtm(R):
    w, V = np.linalg.eigh(0.5 * (R + R.conj().T))
    if np.any(w <= 0):
        raise PrefilterDesignError("noise covariance is not positive definite")
    return (V / np.sqrt(w)) @ V.conj().T


MINPHASE_TOL = 1e-9
MINPHASE_MAX_FFT = 1 << 16


def _cepstral_minphase(h, nfft, floor):
    H = np.fft.fft(h, nfft)
    P = np.abs(H) ** 2
    logmag = 0.5 * np.log(np.maximum(P, floor * P.max()))
    c = np.fft.ifft(logmag)
    fold = np.zeros(nfft, dtype=np.complex128)
    fold[0] = c[0]
    fold[1:nfft // 2] = 2 * c[1:nfft // 2]
    fold[nfft // 2] = c[nfft // 2]
    hm = np.fft.ifft(np.exp(np.fft.fft(fold)))[:len(h)]
    err = np.max(np.abs(np.abs(np.fft.fft(hm, nfft)) - np.abs(H))) / np.max(np.abs(H))
    return hm, err


def minimum_phase(h, nfft=None, floor=1e-12):
    """Minimum-phase FIR with the same magnitude response, via the cepstrum.

    Without an explicit ``nfft`` the FFT starts at ``max(1024, 32 L)`` and
    doubles until the magnitude response matches to ``MINPHASE_TOL``
    (cepstral aliasing decays slowly for zeros near the unit circle).
    """
    h = np.asarray(h, dtype=np.complex128)
    L = len(h)
    if not np.any(h):
        raise PrefilterDesignError("all-zero channel has no minimum-phase factor")
    if nfft is not None:
        return _cepstral_minphase(h, int(nfft), floor)[0]
    n = max(1024, 1 << (32 * L - 1).bit_length())
    while True:
        hm, err = _cepstral_minphase(h, n, floor)
        if err <= MINPHASE_TOL or n >= MINPHASE_MAX_FFT:
            return hm
        n *= 2


def minphase_prefilter(cir, R, nfft=None):
    """Whiten by ``R^-1/2`` and map every branch CIR to its minimum-phase twin."""
    cir = np.atleast_2d(np.asarray(cir, dtype=np.complex128))
    W = inv_sqrtm(np.atleast_2d(R))
    hw = W @ cir
    hmin = np.stack([minimum_phase(row, nfft) for row in hw])
    return MinPhaseDesign(W, hw, hmin)


# --------------------------------------------------------------------------
# Complexity


TABLE_HOM_FACTOR = 40  # the 4L+2 value implied by the printed HOM column


def count_ops(spec, N, L, use_lut=False, table_mode=False):
    """Real multiplications (and LUT reads) per trellis stage.

    Ungerboeck: ``(4 nu + 2) S**(nu+1)``. Forney with feedback:
    ``N (4 L + 2) S**(nu+1)``; ``table_mode`` substitutes 40 for ``4 L + 2``.
    With ``use_lut`` the per-metric cost is ``S`` (Ungerboeck) or ``N S``
    (Forney) multiplications, and LUT reads are ``nu + 1`` resp. ``N L`` per
    metric.
    """
    S = spec.alphabet.size
    branches = S ** (spec.nu + 1)
    if spec.metric is Metric.UNGERBOECK:
        if use_lut:
            return OpCounter(S * branches, (spec.nu + 1) * branches)
        return OpCounter((4 * spec.nu + 2) * branches)
    if use_lut:
        return OpCounter(N * S * branches, N * L * branches)
    per = TABLE_HOM_FACTOR if table_mode else 4 * L + 2
    return OpCounter(N * per * branches)


class MultCounter:
    """Tallies real multiplications; a complex product counts four."""

    def __init__(self):
        self.count = 0

    def cmul(self, a, b):
        self.count += 4
        return a * b

    def re_mul(self, a, b):
        """``Re{a b}`` with two real products."""
        self.count += 2
        return a.real * b.real - a.imag * b.imag

    def abs2(self, a):
        self.count += 2
        return a.real * a.real + a.imag * a.imag


def ungerboeck_stage_counted(yhat_k, g, spec, k, counter):
    """Instrumented metric evaluation for one stage, one branch at a time.

    Returns the ``(S**nu, S)`` metrics; ``2 conj(x)`` and ``g_0 |x|^2`` are
    per-alphabet constants and cost nothing at run time.
    """
    pts = spec.alphabet.points
    S, nu = spec.alphabet.size, spec.nu
    two_conj = 2 * np.conj(pts)
    energy = np.real(g[0]) * np.abs(pts) ** 2
    dig = _trellis.state_digits(S, nu)
    out = np.empty((S ** nu, S))
    for s in range(S ** nu):
        for a in range(S):
            z = yhat_k
            for i in range(min(k, nu)):
                z = z - counter.cmul(g[i + 1], pts[dig[s, i]])
            out[s, a] = counter.re_mul(two_conj[a], z) - energy[a]
    return out


def forney_stage_counted(y_k, h, spec, k, states_hist, counter):
    """Instrumented DDF metric for one stage (``states_hist`` gives feedback labels)."""
    pts = spec.alphabet.points
    S, nu = spec.alphabet.size, spec.nu
    N, L = h.shape
    dig = _trellis.state_digits(S, nu)
    out = np.empty((S ** nu, S))
    for s in range(S ** nu):
        for a in range(S):
            m = 0.0
            for n in range(N):
                r = y_k[n] - counter.cmul(h[n, 0], pts[a])
                for l in range(1, L):
                    if k - l < 0:
                        continue
                    idx = dig[s, l - 1] if l <= nu else states_hist[s, l - nu - 1]
                    r = r - counter.cmul(h[n, l], pts[idx])
                m -= counter.abs2(r)
            out[s, a] = m
    return out


def mlm_ungerboeck_counted(yhat, g, spec, known=None):
    """Debug twin of :func:`mlm_ungerboeck` that counts multiplications.

    Returns ``(symbols, llr, per_stage_counts)``; the metrics come from the
    instrumented loop and run through the same recursion as the fast path.
    """
    yhat = np.asarray(yhat, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    T = len(yhat)
    allowed = _allowed(known, T)
    S, nu = spec.alphabet.size, spec.nu
    metric = np.empty((T, S ** nu, S))
    counts = np.zeros(T, dtype=np.int64)
    for k in range(T):
        c = MultCounter()
        metric[k] = ungerboeck_stage_counted(yhat[k], g, spec, k, c)
        counts[k] = c.count
        if allowed[k] >= 0:
            keep = metric[k, :, allowed[k]].copy()
            metric[k] = -np.inf
            metric[k, :, allowed[k]] = keep
    app = _trellis.maxlog_app(metric, S, nu, np.zeros(S ** nu))
    return _hard(app), llr_from_app(app, spec.alphabet), counts
