import numpy as np
import pytest

from milbrx.ccistage import (
    CciDesignError,
    CciFilterBank,
    apply_cci_filters,
    design_cci_filters,
    ls_residual,
    regression_matrices,
)
from milbrx.estimate import ls_channel_estimate, training_windows
from milbrx.numkit import DimensionError, toeplitz_shift
from milbrx.sigmodel import mls_training

from conftest import crand
from test_estimate import received_window


def test_scalar_exact_solution(rng):
    x = mls_training()
    h = crand(rng, 1, 4)
    y = received_window(x, h)
    bank = design_cci_filters(y, x, h, Lw=1)
    assert np.max(ls_residual(bank, y, x, h)) < 1e-20
    assert np.allclose(bank.w[0, 0, 0], 1.0, atol=1e-5)


def test_two_branch_noise_free_preserves_channel(rng):
    x = mls_training()
    h = crand(rng, 2, 4)
    y = received_window(x, h)
    bank = design_cci_filters(y, x, h, Lw=1)
    yt = apply_cci_filters(bank, y)
    for n in range(2):
        assert np.max(np.abs(yt[n] - y[n])) < 1e-8


def dense_design(y, x, h, Lw):
    """Unregularized LS filters via the explicit pseudo-inverse of zeta."""
    Z = np.hstack([toeplitz_shift(y[m], Lw) for m in range(y.shape[0])])
    L = h.shape[1]
    T3 = toeplitz_shift(x[:y.shape[1] - Lw + L], L)
    return np.linalg.pinv(Z) @ (T3 @ h.T)


def test_matches_dense_oracle(rng):
    x = mls_training()
    h = crand(rng, 2, 4)
    y = received_window(x, h, rng, 0.3)
    bank = design_cci_filters(y, x, h, Lw=3)
    ref = dense_design(y, x, h, 3)
    assert np.max(np.abs(bank.w.reshape(2, -1).T - ref)) < 1e-8


def test_fat_form_matches_min_norm_oracle(rng):
    x = mls_training()[:12]
    h = crand(rng, 3, 2)
    y = received_window(x, h, rng, 0.3)  # 11 samples, Lw=5 -> 7 rows, 15 columns
    zeta, _ = regression_matrices(y, x, 2, 5)
    assert zeta.shape == (7, 15)
    bank = design_cci_filters(y, x, h, Lw=5)
    ref = dense_design(y, x, h, 5)
    assert np.max(np.abs(bank.w.reshape(3, -1).T - ref)) < 1e-8


def test_loading_keeps_rank_deficient_design_bounded(rng):
    x = mls_training()
    h = crand(rng, 1, 3)
    y = received_window(x, h)
    y = np.vstack([y, y])  # identical branches: zeta has rank Lw
    bank = design_cci_filters(y, x, np.vstack([h, h]), Lw=2)
    assert np.all(np.isfinite(bank.w)) and np.max(np.abs(bank.w)) < 10
    yt = apply_cci_filters(bank, y)
    assert np.max(np.abs(yt[:, 2:-2] - y[:, 2:-2])) < 1e-6


def test_degenerate_training():
    x = mls_training()
    with pytest.raises(CciDesignError):
        design_cci_filters(np.zeros((2, 21)), x, np.ones((2, 6)), Lw=4)
    with pytest.raises(CciDesignError):
        design_cci_filters(np.ones((1, 21)), x, np.ones((1, 6)), Lw=30)


def test_identity_and_swap_banks(rng):
    y = crand(rng, 2, 30)
    assert np.allclose(apply_cci_filters(CciFilterBank.identity(2, 3), y), y)
    w = np.zeros((2, 2, 1), complex)
    w[0, 1, 0] = w[1, 0, 0] = 1
    assert np.allclose(apply_cci_filters(CciFilterBank(w), y), y[::-1])


def test_apply_nested_loop_oracle(rng):
    N, Lw, T = 3, 4, 25
    w = crand(rng, N, N, Lw)
    y = crand(rng, N, T)
    out = apply_cci_filters(CciFilterBank(w), y)
    ref = np.zeros((N, T), complex)
    for n in range(N):
        for m in range(N):
            for k in range(T):
                for j in range(Lw):
                    src = k + Lw - 1 - j
                    if 0 <= src < T:
                        ref[n, k] += w[n, m, j] * y[m, src]
    assert np.allclose(out, ref)


def test_bank_mismatch(rng):
    with pytest.raises(DimensionError):
        apply_cci_filters(CciFilterBank.identity(2), crand(rng, 3, 10))


def test_first_order_stationarity(rng):
    x = mls_training()
    for _ in range(100):
        N = int(rng.integers(1, 4))
        h = crand(rng, N, 3)
        y = received_window(x, h, rng, 0.5)
        bank = design_cci_filters(y, x, h, Lw=2)
        base = ls_residual(bank, y, x, h)
        idx = tuple(rng.integers(0, s) for s in bank.w.shape)
        for step in (1e-3, -1e-3, 1e-3j, -1e-3j):
            w = bank.w.copy()
            w[idx] += step
            assert ls_residual(CciFilterBank(w), y, x, h)[idx[0]] >= base[idx[0]] - 1e-9


def _burst_setup(rng, sir_db=None, snr_db=20.0, N=2, L=4):
    x = np.concatenate([np.sign(rng.standard_normal(40)), mls_training(), np.sign(rng.standard_normal(40))])
    h = crand(rng, N, L) / np.sqrt(L)
    y = np.stack([np.convolve(h[n], x) for n in range(N)])
    clean = y.copy()
    if sir_db is not None:
        s = np.sign(rng.standard_normal(len(x)))
        p = crand(rng, N, L) / np.sqrt(L) * 10 ** (-sir_db / 20)
        y = y + np.stack([np.convolve(p[n], s) for n in range(N)])
    y = y + 10 ** (-snr_db / 20) * crand(rng, *y.shape)
    return x, h, y, clean


def test_target_channel_preserved(rng):
    rel = []
    for _ in range(1000):
        x, h, y, _ = _burst_setup(rng)
        tr = mls_training()
        win = training_windows(y, tr, 40, 4)
        hh = ls_channel_estimate(win, tr, 4)
        yt = apply_cci_filters(design_cci_filters(win, tr, hh, Lw=4), y)
        h2 = ls_channel_estimate(training_windows(yt, tr, 40, 4), tr, 4)
        rel.append(np.linalg.norm(h2 - hh) / np.linalg.norm(hh))
    assert np.mean(rel) < 0.10


def test_interference_suppression(rng):
    before = after = 0.0
    for _ in range(1000):
        x, h, y, clean = _burst_setup(rng, sir_db=0.0, snr_db=30.0)
        tr = mls_training()
        win = training_windows(y, tr, 40, 4)
        hh = ls_channel_estimate(win, tr, 4)
        yt = apply_cci_filters(design_cci_filters(win, tr, hh, Lw=4), y)
        sl = slice(10, 120)
        before += np.sum(np.abs(y[:, sl] - clean[:, sl]) ** 2)
        ref = np.stack([np.convolve(hh[n], x) for n in range(2)])
        after += np.sum(np.abs(yt[:, sl] - ref[:, sl]) ** 2)
    assert 10 * np.log10(before / after) >= 3.0
