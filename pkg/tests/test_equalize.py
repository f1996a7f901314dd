import itertools

import numpy as np
import pytest

from milbrx.equalize import (
    Metric,
    OracleScaleError,
    TrellisSpec,
    count_ops,
    ddf_mlm_forney,
    full_mlse_oracle,
    full_viterbi,
    matched_filter_model,
    minimum_phase,
    minphase_prefilter,
    mlm_ungerboeck,
    mlm_ungerboeck_counted,
)
from milbrx.milb import apply_prefilter, shorten
from milbrx.numkit import DimensionError
from milbrx.sigmodel import ALPHABETS, PROFILES, demap_hard, draw_channel

from conftest import crand, random_pd

BPSK = ALPHABETS["GMSK-bin"]


def transmit(rng, h, K, alphabet=BPSK, sigma=0.0):
    labels = rng.integers(0, alphabet.size, K)
    x = alphabet.points[labels]
    y = np.stack([np.convolve(row, x) for row in np.atleast_2d(h)])
    return labels, y + sigma * crand(rng, *y.shape)


def test_identity_solution_noise_free(rng):
    labels, y = transmit(rng, [[1.0]], 64)
    s = shorten([[1.0, 0.0]], [[1.0]], 1, 64)
    yhat = apply_prefilter(s, y, 64)
    dec, llr = mlm_ungerboeck(yhat, s.g, TrellisSpec(BPSK, 1))
    assert np.array_equal(dec, labels)


@pytest.mark.parametrize("name", list(ALPHABETS))
def test_memoryless_is_nearest_point(rng, name):
    a = ALPHABETS[name]
    yhat = 1.7 * crand(rng, 200)
    g0 = 1.7
    dec, _ = mlm_ungerboeck(yhat, [g0], TrellisSpec(a, 0))
    assert np.array_equal(dec, demap_hard(yhat / g0, a))


def test_ties_go_to_lower_index():
    dec, llr = mlm_ungerboeck(np.zeros(4, complex), [1.0], TrellisSpec(BPSK, 0))
    assert np.array_equal(dec, [0, 0, 0, 0]) and np.all(llr == 0)


def ungerboeck_sequence_metric(yhat, g, x):
    m = 0.0
    for k in range(len(x)):
        isi = sum(g[l] * x[k - l] for l in range(1, len(g)) if k - l >= 0)
        m += 2 * np.real(np.conj(x[k]) * (yhat[k] - isi)) - np.real(g[0]) * abs(x[k]) ** 2
    return m


def test_ungerboeck_and_forney_metrics_differ_by_constant(rng):
    h = crand(rng, 2, 3)
    R = random_pd(rng, 2)
    K = 6
    _, y = transmit(rng, h, K, sigma=0.5)
    yhat, g = matched_filter_model(y, h, R, K)
    Rinv = np.linalg.inv(R)
    diffs = []
    for seq in itertools.product(range(2), repeat=K):
        x = BPSK.points[list(seq)]
        r = y - np.stack([np.convolve(row, x) for row in h])
        forney = -np.real(np.sum(np.conj(r) * (Rinv @ r)))
        diffs.append(ungerboeck_sequence_metric(yhat, g, x) - forney)
    assert np.ptp(diffs) < 1e-9


def test_full_band_matches_exhaustive_mlse(rng):
    for _ in range(10):
        h = crand(rng, 2, 3)
        _, y = transmit(rng, h, 10, sigma=0.7)
        yhat, g = matched_filter_model(y, h, np.eye(2), 10)
        dec, _ = mlm_ungerboeck(yhat, g, TrellisSpec(BPSK, 2))
        assert np.array_equal(dec, full_mlse_oracle(y, h, BPSK, 10))


@pytest.mark.parametrize("name", list(ALPHABETS))
def test_llr_sign_matches_hard_bits(rng, name):
    a = ALPHABETS[name]
    dec, llr = mlm_ungerboeck(crand(rng, 60), [1.2, 0.3 - 0.2j], TrellisSpec(a, 1))
    bits = a.labels[dec]
    nz = llr != 0
    assert np.all((llr[nz] > 0) == (bits[nz] == 1))


def test_known_symbols_are_forced(rng):
    known = np.full(20, -1)
    known[5:10] = 1
    dec, _ = mlm_ungerboeck(crand(rng, 20) + 5, [1.0, 0.2], TrellisSpec(BPSK, 1), known=known)
    assert np.all(dec[5:10] == 1)


def test_ungerboeck_input_errors():
    with pytest.raises(DimensionError):
        mlm_ungerboeck(np.zeros(0), [1.0], TrellisSpec(BPSK, 0))
    with pytest.raises(DimensionError):
        mlm_ungerboeck(np.zeros(5), [1.0, 0.1], TrellisSpec(BPSK, 0))


def test_forney_single_tap_noise_free(rng):
    a = ALPHABETS["QAM16"]
    labels, y = transmit(rng, [[0.8 - 0.3j], [0.4j]], 50, a)
    dec, _ = ddf_mlm_forney(y, [[0.8 - 0.3j], [0.4j]], TrellisSpec(a, 0, Metric.FORNEY_DDF, 1))
    assert np.array_equal(dec, labels)


def test_forney_ddf_equals_full_viterbi_when_tail_negligible(rng):
    a = ALPHABETS["PSK8"]
    h = np.array([[1.0, 0.5 - 0.2j, 1e-7, 1e-7]])
    for _ in range(5):
        _, y = transmit(rng, h, 40, a, sigma=0.3)
        ddf, _ = ddf_mlm_forney(y, h, TrellisSpec(a, 1, Metric.FORNEY_DDF, 4))
        full, _ = full_viterbi(y, h, a)
        assert np.array_equal(ddf, full)


def test_forney_duplicate_branches(rng):
    a = ALPHABETS["PSK8"]
    h = crand(rng, 1, 4)
    _, y = transmit(rng, h, 40, a, sigma=0.5)
    spec = TrellisSpec(a, 1, Metric.FORNEY_DDF, 4)
    one, _ = ddf_mlm_forney(y, h, spec)
    two, _ = ddf_mlm_forney(np.vstack([y, y]), np.vstack([h, h]), spec)
    assert np.array_equal(one, two)


def test_forney_noise_free_with_feedback(rng):
    a = ALPHABETS["PSK8"]
    h = np.array([[1.0, 0.4, 0.2, 0.1], [0.8j, 0.3, -0.2, 0.05]])
    labels, y = transmit(rng, h, 60, a)
    dec, _ = ddf_mlm_forney(y, h, TrellisSpec(a, 1, Metric.FORNEY_DDF, 4))
    assert np.array_equal(dec, labels)


def test_forney_dimension_errors(rng):
    spec = TrellisSpec(BPSK, 1, Metric.FORNEY_DDF, 3)
    with pytest.raises(DimensionError):
        ddf_mlm_forney(crand(rng, 2, 10), crand(rng, 1, 3), spec)


def test_trellis_spec():
    s = TrellisSpec(ALPHABETS["PSK8"], 2, Metric.FORNEY_DDF, 8)
    assert s.states == 64 and s.feedback_depth == 5
    assert TrellisSpec(ALPHABETS["PSK8"], 2).feedback_depth == 0
    with pytest.raises(ValueError):
        TrellisSpec(BPSK, 3, Metric.FORNEY_DDF, 2)


def test_minphase_already_minimum_phase():
    hm = minimum_phase(np.array([2.0, 1.0]))
    assert np.max(np.abs(hm - [2, 1])) < 1e-6


def test_minphase_reflects_maximum_phase():
    hm = minimum_phase(np.array([1.0, 2.0]))
    assert np.max(np.abs(hm - [2, 1])) < 1e-6


def root_reflection_minphase(h):
    """Reference factor: reflect zeros outside the unit circle."""
    h = np.asarray(h, complex)
    z = np.roots(h)
    gain = h[0]
    for i, r in enumerate(z):
        if abs(r) > 1:
            gain = gain * -np.conj(r)
            z[i] = 1 / np.conj(r)
    return gain * np.poly(z)


def test_minphase_vs_root_reflection(rng):
    for _ in range(20):
        h = crand(rng, 4)
        hm = minimum_phase(h)
        ref = root_reflection_minphase(h)
        # equal up to a unit-modulus constant
        c = np.vdot(ref, hm) / np.vdot(ref, ref)
        assert abs(abs(c) - 1) < 1e-6 and np.max(np.abs(hm - c * ref)) < 1e-6
        assert np.max(np.abs(np.abs(np.fft.fft(hm, 64)) - np.abs(np.fft.fft(h, 64)))) < 1e-6


def test_minphase_energy_concentration(rng):
    p = PROFILES["tu"]
    better = 0
    for _ in range(500):
        h = draw_channel(p, 1, rng)[0]
        hm = minimum_phase(h)
        better += np.sum(np.abs(hm[:2]) ** 2) >= np.sum(np.abs(h[:2]) ** 2) - 1e-12
    assert better >= 0.95 * 500


def test_minphase_prefilter_whitens_and_preserves_spectrum(rng):
    h, R = crand(rng, 2, 4), random_pd(rng, 2)
    d = minphase_prefilter(h, R)
    assert np.allclose(d.whitening @ R @ d.whitening.conj().T, np.eye(2), atol=1e-10)
    K = 64
    for n in range(2):
        assert np.allclose(np.abs(np.fft.fft(d.cir[n], K)), np.abs(np.fft.fft(d.whitened_cir[n], K)), atol=1e-6)
    assert np.allclose(np.abs(d.allpass(K)), 1, atol=1e-6)


def test_minphase_all_zero():
    with pytest.raises(ValueError):
        minimum_phase(np.zeros(3))


def test_oracle_noise_free(rng):
    a = ALPHABETS["PSK8"]
    h = crand(rng, 2, 3)
    labels, y = transmit(rng, h, 5, a)
    assert np.array_equal(full_mlse_oracle(y, h, a, 5), labels)


def test_oracle_vs_full_viterbi(rng):
    for _ in range(10):
        h = crand(rng, 1, 3)
        _, y = transmit(rng, h, 8, sigma=0.6)
        assert np.array_equal(full_mlse_oracle(y, h, BPSK, 8), full_viterbi(y, h, BPSK)[0])


def test_oracle_duplicate_branch(rng):
    h = crand(rng, 1, 3)
    _, y = transmit(rng, h, 8, sigma=0.6)
    assert np.array_equal(full_mlse_oracle(y, h, BPSK, 8),
                          full_mlse_oracle(np.vstack([y, y]), np.vstack([h, h]), BPSK, 8))


def test_oracle_scale_guard():
    with pytest.raises(OracleScaleError):
        full_mlse_oracle(np.zeros((1, 20)), [[1.0]], BPSK, 13)


@pytest.mark.parametrize("name,want", [("GMSK-bin", 24), ("PSK8", 384), ("QAM16", 1536), ("QAM32", 6144)])
def test_count_ops_milb(name, want):
    assert count_ops(TrellisSpec(ALPHABETS[name], 1), 2, 8).real_mults_per_stage == want


@pytest.mark.parametrize("name,formula,table", [
    ("GMSK-bin", 272, 320), ("PSK8", 4352, 5120), ("QAM16", 17408, 20480), ("QAM32", 69632, 81920)])
def test_count_ops_hom(name, formula, table):
    spec = TrellisSpec(ALPHABETS[name], 1, Metric.FORNEY_DDF, 8)
    assert count_ops(spec, 2, 8).real_mults_per_stage == formula
    assert count_ops(spec, 2, 8, table_mode=True).real_mults_per_stage == table


def test_count_ratio():
    for N, L in [(1, 4), (2, 8), (3, 6)]:
        a = ALPHABETS["PSK8"]
        m = count_ops(TrellisSpec(a, 1), N, L).real_mults_per_stage
        h = count_ops(TrellisSpec(a, 1, Metric.FORNEY_DDF, L), N, L).real_mults_per_stage
        assert m * N * (2 * L + 1) == 3 * h


def test_count_ops_lut():
    a = ALPHABETS["PSK8"]
    u = count_ops(TrellisSpec(a, 1), 2, 8, use_lut=True)
    f = count_ops(TrellisSpec(a, 1, Metric.FORNEY_DDF, 8), 2, 8, use_lut=True)
    assert u.real_mults_per_stage == 8 * 64 and f.real_mults_per_stage == 2 * 8 * 64
    assert u.lut_ops_per_stage * 16 == f.lut_ops_per_stage * 2  # (nu+1) vs N L per metric


@pytest.mark.parametrize("name", list(ALPHABETS))
@pytest.mark.parametrize("nu", [0, 1, 2])
def test_instrumented_counts(rng, name, nu):
    a = ALPHABETS[name]
    if a.size ** (nu + 1) > 1024:
        pytest.skip("state space too large for the instrumented loop")
    spec = TrellisSpec(a, nu)
    g = np.concatenate([[1.3], crand(rng, nu)])
    yhat = crand(rng, 5)
    dec, llr, counts = mlm_ungerboeck_counted(yhat, g, spec)
    assert np.all(counts[nu:] == count_ops(spec, 1, 4).real_mults_per_stage)
    ref_dec, ref_llr = mlm_ungerboeck(yhat, g, spec)
    assert np.array_equal(dec, ref_dec) and np.allclose(llr, ref_llr)


def test_counts_are_pure():
    spec = TrellisSpec(ALPHABETS["QAM16"], 1)
    assert count_ops(spec, 2, 8) == count_ops(spec, 2, 8)
