"""Quick oracle-equivalence checks behind ``milbrx selftest``.

Each check compares a fast path with an independent reference on a handful
of seeded random instances and reports the worst deviation.
"""

import numpy as np

from .equalize import (
    Metric,
    TrellisSpec,
    count_ops,
    full_mlse_oracle,
    inv_sqrtm,
    matched_filter_model,
    mlm_ungerboeck,
    mlm_ungerboeck_counted,
)
from .milb import shorten, shorten_oracle, unconstrained_rate
from .sigmodel import ALPHABETS, crandn


def random_cov(rng, N, scale=1.0):
    A = crandn(rng, (N, N))
    return scale * (A @ A.conj().T / N + 0.5 * np.eye(N))


def check_shorten_oracle(rng, instances=20):
    worst = 0.0
    for _ in range(instances):
        N, L = rng.integers(1, 4), rng.integers(2, 5)
        nu, K = int(rng.integers(1, L)), int(rng.choice([16, 32]))
        h, R = crandn(rng, (N, L)), random_cov(rng, N)
        a, b = shorten(h, R, nu, K), shorten_oracle(h, R, nu, K)
        worst = max(worst, np.abs(a.v - b.v).max(), np.abs(a.g - b.g).max(), abs(a.i_rate - b.i_rate))
    return worst <= 1e-8, f"max deviation {worst:.2e}"


def check_identity():
    s = shorten([[1.0, 0.0]], [[1.0]], 1, 32)
    delta = np.zeros(32)
    delta[0] = 1
    err = max(np.abs(s.u - [np.sqrt(2), 0]).max(), np.abs(s.g - [1, 0]).max(),
              np.abs(s.v[0] - delta).max(), abs(s.bits_per_symbol - 1.0))
    return err <= 1e-10, f"max deviation {err:.2e}"


def check_unconstrained(rng, instances=10, K=256):
    worst = 0.0
    for _ in range(instances):
        N, L = rng.integers(1, 4), rng.integers(2, 5)
        h = crandn(rng, (N, L)) / np.sqrt(L)
        R = random_cov(rng, N, 10 ** (-rng.uniform(0, 2)))
        worst = max(worst, abs(shorten(h, R, L - 1, K).i_rate - unconstrained_rate(h, R, K)))
    return worst <= 1e-8, f"max deviation {worst:.2e}"


def check_mlse(rng, instances=10, K=8, L=3):
    bpsk = ALPHABETS["GMSK-bin"]
    bad = 0
    for _ in range(instances):
        N = int(rng.integers(1, 3))
        h, R = crandn(rng, (N, L)), random_cov(rng, N, 0.3)
        x = bpsk.points[rng.integers(0, 2, K)]
        y = np.stack([np.convolve(h[n], x) for n in range(N)])
        y = y + inv_sqrtm(np.linalg.inv(R)) @ crandn(rng, y.shape)
        yhat, g = matched_filter_model(y, h, R, K)
        dec, _ = mlm_ungerboeck(yhat, g, TrellisSpec(bpsk, L - 1))
        W = inv_sqrtm(R)
        ref = full_mlse_oracle(W @ y, W @ h, bpsk, K)
        bad += int(np.any(dec != ref))
    return bad == 0, f"{bad} of {instances} disagree"


def check_counts(rng):
    msgs = []
    ok = True
    for name in ("GMSK-bin", "PSK8", "QAM16", "QAM32"):
        spec = TrellisSpec(ALPHABETS[name], 1)
        yhat = crandn(rng, 6)
        _, _, counts = mlm_ungerboeck_counted(yhat, np.array([1.0, 0.3 + 0.1j]), spec)
        want = count_ops(spec, 2, 8).real_mults_per_stage
        ok &= bool(np.all(counts[1:] == want))
        msgs.append(f"{name} {counts[-1]}/{want}")
    return ok, ", ".join(msgs)


def check_table():
    got = [count_ops(TrellisSpec(ALPHABETS[a], 1), 2, 8).real_mults_per_stage
           for a in ("GMSK-bin", "PSK8", "QAM16", "QAM32")]
    hom = [count_ops(TrellisSpec(ALPHABETS[a], 1, Metric.FORNEY_DDF, 8), 2, 8,
                     table_mode=True).real_mults_per_stage
           for a in ("GMSK-bin", "PSK8", "QAM16", "QAM32")]
    ok = got == [24, 384, 1536, 6144] and hom == [320, 5120, 20480, 81920]
    return ok, f"MILB {got}, HOM table-mode {hom}"


def run(out, seed=2024):
    rng = np.random.default_rng(seed)
    checks = [
        ("shorten vs dense oracle", lambda: check_shorten_oracle(rng)),
        ("identity-channel fixture", check_identity),
        ("full-memory rate = spectral sum", lambda: check_unconstrained(rng)),
        ("Ungerboeck MLM = exhaustive MLSE", lambda: check_mlse(rng)),
        ("instrumented counts = count_ops", lambda: check_counts(rng)),
        ("complexity table", check_table),
    ]
    all_ok = True
    for name, fn in checks:
        ok, msg = fn()
        all_ok &= ok
        out.write(f"{'PASS' if ok else 'FAIL'}  {name}: {msg}\n")
    return all_ok
