"""Compiled max-log trellis kernels.

State convention: a state of memory ``nu`` over an S-ary alphabet holds the
label indices ``(x[k-1], ..., x[k-nu])`` as base-S digits, least
significant digit first. Appending ``a`` as ``x[k]`` moves state ``s`` to
``a + S * (s % S**(nu-1))``. Symbols before time 0 are zero; ``allowed[k]``
is the only admissible label at stage k, or -1 for any.

All kernels maximize; ties keep the lower state / symbol index because only
strictly larger candidates replace an incumbent.
"""

import numpy as np
from numba import njit

NEG = -np.inf


@njit(cache=True)
def state_digits(S, nu):
    ns = S ** nu
    dig = np.zeros((ns, max(nu, 1)), dtype=np.int64)
    for s in range(ns):
        r = s
        for i in range(nu):
            dig[s, i] = r % S
            r //= S
    return dig


@njit(cache=True)
def ungerboeck_metrics(yhat, g, pts, allowed, nu):
    """Branch metrics ``2 Re{x_k^* (yhat_k - sum g_l x_{k-l})} - g_0 |x_k|^2``."""
    T = yhat.shape[0]
    S = pts.shape[0]
    ns = S ** nu
    dig = state_digits(S, nu)
    g0 = g[0].real
    energy = np.empty(S)
    for a in range(S):
        energy[a] = g0 * (pts[a].real ** 2 + pts[a].imag ** 2)
    metric = np.empty((T, ns, S))
    for k in range(T):
        depth = min(k, nu)
        for s in range(ns):
            isi = 0j
            for i in range(depth):
                isi += g[i + 1] * pts[dig[s, i]]
            z = yhat[k] - isi
            for a in range(S):
                if allowed[k] >= 0 and a != allowed[k]:
                    metric[k, s, a] = NEG
                else:
                    metric[k, s, a] = 2.0 * (pts[a].real * z.real + pts[a].imag * z.imag) - energy[a]
    return metric


@njit(cache=True)
def maxlog_app(metric, S, nu, final):
    """Forward/backward max-log recursion on a ``(T, S**nu, S)`` metric table.

    ``final`` holds per-state terminal metrics. Returns ``(T, S)`` maxima of
    the total path metric with ``x_k = a``.
    """
    T = metric.shape[0]
    ns = S ** nu
    top = S ** (nu - 1) if nu > 0 else 1
    alpha = np.full((T + 1, ns), NEG)
    alpha[0, :] = 0.0
    for k in range(T):
        for s in range(ns):
            base = S * (s % top) if nu > 0 else 0
            for a in range(S):
                sp = base + a if nu > 0 else 0
                val = alpha[k, s] + metric[k, s, a]
                if val > alpha[k + 1, sp]:
                    alpha[k + 1, sp] = val
    beta = np.full((T + 1, ns), NEG)
    beta[T, :] = final
    for k in range(T - 1, -1, -1):
        for s in range(ns):
            base = S * (s % top) if nu > 0 else 0
            best = NEG
            for a in range(S):
                sp = base + a if nu > 0 else 0
                val = metric[k, s, a] + beta[k + 1, sp]
                if val > best:
                    best = val
            beta[k, s] = best
    app = np.full((T, S), NEG)
    for k in range(T):
        for s in range(ns):
            base = S * (s % top) if nu > 0 else 0
            for a in range(S):
                sp = base + a if nu > 0 else 0
                val = alpha[k, s] + metric[k, s, a] + beta[k + 1, sp]
                if val > app[k, a]:
                    app[k, a] = val
    return app


@njit(cache=True)
def _symbol(pts, idx):
    if idx < 0:
        return 0j
    return pts[idx]


@njit(cache=True)
def ddf_forney(y, h, pts, allowed, nu):
    """Forney-metric trellis with per-survivor decision feedback.

    ``y`` is ``(N, T_obs)`` with ``T_obs >= T = len(allowed)``; observations
    past T (the channel tail, where transmitted symbols are zero) enter as a
    terminal metric. Returns the metric table and terminal metrics for
    :func:`maxlog_app`. Metric is ``-sum_n |y - h * x|^2``.
    """
    N, L = h.shape
    T = allowed.shape[0]
    T_obs = y.shape[1]
    S = pts.shape[0]
    ns = S ** nu
    top = S ** (nu - 1) if nu > 0 else 1
    D = L - 1 - nu
    Dm = max(D, 1)
    dig = state_digits(S, nu)
    hist = np.full((ns, Dm), -1, dtype=np.int64)
    new_hist = np.full((ns, Dm), -1, dtype=np.int64)
    alpha = np.full(ns, NEG)
    alpha[0:ns] = 0.0
    new_alpha = np.empty(ns)
    pred_s = np.zeros(ns, dtype=np.int64)
    pred_a = np.zeros(ns, dtype=np.int64)
    metric = np.empty((T, ns, S))
    st = np.empty(N, dtype=np.complex128)
    for k in range(T):
        new_alpha[:] = NEG
        for s in range(ns):
            for n in range(N):
                acc = y[n, k] if k < T_obs else 0j
                for l in range(1, nu + 1):
                    if k - l >= 0:
                        acc -= h[n, l] * pts[dig[s, l - 1]]
                for l in range(nu + 1, L):
                    if k - l >= 0:
                        acc -= h[n, l] * _symbol(pts, hist[s, l - nu - 1])
                st[n] = acc
            base = S * (s % top) if nu > 0 else 0
            for a in range(S):
                if allowed[k] >= 0 and a != allowed[k]:
                    metric[k, s, a] = NEG
                    continue
                m = 0.0
                for n in range(N):
                    r = st[n] - h[n, 0] * pts[a]
                    m -= r.real * r.real + r.imag * r.imag
                metric[k, s, a] = m
                sp = base + a if nu > 0 else 0
                val = alpha[s] + m
                if val > new_alpha[sp]:
                    new_alpha[sp] = val
                    pred_s[sp] = s
                    pred_a[sp] = a
        if D > 0:
            for sp in range(ns):
                if new_alpha[sp] == NEG:
                    new_hist[sp, :] = -1
                    continue
                s = pred_s[sp]
                if nu > 0:
                    dropped = dig[s, nu - 1] if k - nu >= 0 else -1
                else:
                    dropped = pred_a[sp]
                new_hist[sp, 0] = dropped
                for i in range(1, D):
                    new_hist[sp, i] = hist[s, i - 1]
            hist[:, :] = new_hist
        alpha[:] = new_alpha
    # terminal metric from the channel tail
    final = np.zeros(ns)
    for s in range(ns):
        tot = 0.0
        for k in range(T, min(T_obs, T + L - 1)):
            for n in range(N):
                acc = y[n, k]
                for l in range(k - T + 1, L):
                    j = k - l
                    if j < 0:
                        continue
                    if j >= T - nu:
                        acc -= h[n, l] * pts[dig[s, T - 1 - j]]
                    else:
                        acc -= h[n, l] * _symbol(pts, hist[s, T - nu - 1 - j])
                tot -= acc.real * acc.real + acc.imag * acc.imag
        final[s] = tot
    return metric, final


@njit(cache=True)
def conv_viterbi(llr, n_info, memory, g0, g1):
    """Viterbi decoding of a terminated rate-1/2 feedforward code.

    ``llr`` is ``(n_info + memory, 2)``, positive favoring bit 1.
    """
    steps = llr.shape[0]
    ns = 1 << memory
    pm = np.full(ns, NEG)
    pm[0] = 0.0
    new_pm = np.empty(ns)
    back = np.zeros((steps, ns), dtype=np.int64)
    out0 = np.zeros((ns, 2), dtype=np.int64)
    out1 = np.zeros((ns, 2), dtype=np.int64)
    for s in range(ns):
        for b in range(2):
            reg = (b << memory) | s
            p0 = 0
            p1 = 0
            r0 = reg & g0
            r1 = reg & g1
            while r0:
                p0 ^= r0 & 1
                r0 >>= 1
            while r1:
                p1 ^= r1 & 1
                r1 >>= 1
            if b == 0:
                out0[s, 0] = p0
                out0[s, 1] = p1
            else:
                out1[s, 0] = p0
                out1[s, 1] = p1
    for t in range(steps):
        new_pm[:] = NEG
        for s in range(ns):
            if pm[s] == NEG:
                continue
            for b in range(2):
                if t >= n_info and b == 1:
                    continue
                o = out1[s] if b == 1 else out0[s]
                m = 0.5 * ((2 * o[0] - 1) * llr[t, 0] + (2 * o[1] - 1) * llr[t, 1])
                nxt = (s >> 1) | (b << (memory - 1))
                val = pm[s] + m
                if val > new_pm[nxt]:
                    new_pm[nxt] = val
                    back[t, nxt] = s
        pm[:] = new_pm
    bits = np.zeros(steps, dtype=np.int64)
    s = 0
    for t in range(steps - 1, -1, -1):
        bits[t] = (s >> (memory - 1)) & 1
        s = back[t, s]
    return bits[:n_info]
