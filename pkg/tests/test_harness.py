import math
from dataclasses import replace

import numpy as np
import pytest

from milbrx import harness
from milbrx.harness import MCS_TABLE, LinkConfig, ci_halfwidth, run_burst, sweep, trial_rng
from milbrx.milb import ShorteningDegenerateError


@pytest.mark.parametrize("mcs", list(MCS_TABLE))
@pytest.mark.parametrize("profile", ["flat", "tu", "ht"])
def test_noise_free_perfect_csi(mcs, profile):
    cfg = LinkConfig(mcs=mcs, profile=profile, snr_db=math.inf, perfect_csi=True)
    for t in range(3):
        out = run_burst(cfg, trial_rng(1, 0, t))
        assert out.bit_errors == 0 and not out.block_error


@pytest.mark.parametrize("demod", ["milb", "hom"])
def test_noise_free_estimated_channel(demod):
    cfg = LinkConfig(mcs="MCS8", profile="tu", snr_db=math.inf, demodulator=demod)
    out = run_burst(cfg, trial_rng(2, 0, 0))
    assert out.bit_errors == 0


def test_milb_and_hom_agree_without_isi():
    base = LinkConfig(mcs="MCS8", profile="flat", nu=0, snr_db=8.0, coded=False, branches=2)
    for t in range(20):
        a = run_burst(base, trial_rng(3, 0, t))
        b = run_burst(replace(base, demodulator="hom"), trial_rng(3, 0, t))
        assert np.array_equal(a.decisions, b.decisions)


def test_single_trial_ber_is_a_count():
    res = sweep(LinkConfig(snr_db=6.0), "snr", [6.0], 1, seed=4)
    k = res.ber[0] * res.bits[0]
    assert abs(k - round(k)) < 1e-9 and res.trials[0] == 1


def test_ci_shrinks_with_trials():
    cfg = LinkConfig(mcs="MCS1", profile="tu", snr_db=6.0, coded=False)
    a = sweep(cfg, "snr", [6.0], 400, seed=5)
    c = sweep(cfg, "snr", [6.0], 800, seed=5)
    b = sweep(cfg, "snr", [6.0], 1600, seed=5)
    # binomial half-width scales as 1/sqrt(n)
    assert abs(c.ber_ci[0] / a.ber_ci[0] - 1 / math.sqrt(2)) < 0.1 / math.sqrt(2)
    assert abs(b.ber_ci[0] / a.ber_ci[0] - 0.5) < 0.1 * 0.5


def test_ci_halfwidth():
    assert ci_halfwidth(0.5, 100) == pytest.approx(1.959963984540054 * 0.05)
    assert ci_halfwidth(0.0, 10) == 0.0
    assert math.isnan(ci_halfwidth(0.1, 0))


def test_ber_decreases_with_sir():
    cfg = LinkConfig(mcs="MCS5", profile="tu", interferers=1, snr_db=20.0)
    res = sweep(cfg, "sir", [0, 5, 10, 15], 150, seed=6)
    assert np.all(np.diff(res.ber) < 0)
    assert np.all((res.ber >= 0) & (res.ber <= 1) & (res.bler >= 0) & (res.bler <= 1))


def test_reproducible_serial_parallel():
    cfg = LinkConfig(mcs="MCS5", profile="tu", interferers=1, sir_db=5.0)
    a = sweep(cfg, "snr", [10, 20], 12, seed=7, chunk=5).to_csv()
    b = sweep(cfg, "snr", [10, 20], 12, seed=7, chunk=5).to_csv()
    c = sweep(cfg, "snr", [10, 20], 12, seed=7, workers=2, chunk=5).to_csv()
    assert a == b == c


def test_early_stop_is_schedule_independent():
    cfg = LinkConfig(mcs="MCS1", profile="tu", snr_db=0.0, coded=False)
    a = sweep(cfg, "snr", [0.0], 200, seed=8, exact_trials=False, chunk=10)
    b = sweep(cfg, "snr", [0.0], 200, seed=8, exact_trials=False, chunk=10, workers=2)
    assert a.trials[0] < 200
    assert a.to_csv() == b.to_csv()


def test_csv_format():
    res = sweep(LinkConfig(snr_db=10.0), "snr", [10.0], 2, seed=9)
    lines = res.to_csv().splitlines()
    assert lines[0] == "axis_db,ber,ber_ci,bler,bler_ci,trials,erasures"
    fields = lines[1].split(",")
    assert len(fields) == 7
    mant = fields[1].split("e")[0].replace(".", "").lstrip("-")
    assert len(mant) == 9


def test_stage_failure_counts_as_erasure(monkeypatch):
    def boom(*a, **k):
        raise ShorteningDegenerateError("forced")

    monkeypatch.setattr(harness, "shorten", boom)
    res = sweep(LinkConfig(snr_db=10.0), "snr", [10.0], 3, seed=10)
    assert res.erasures[0] == 3 and res.bler[0] == 1.0 and res.ber[0] == pytest.approx(0.5, abs=0.01)


def test_degenerate_design_falls_back_to_lower_memory(monkeypatch):
    real = harness.shorten
    calls = []

    def picky(h, R, nu, K):
        calls.append(nu)
        if nu > 0:
            raise ShorteningDegenerateError("forced")
        return real(h, R, nu, K)

    monkeypatch.setattr(harness, "shorten", picky)
    out = run_burst(LinkConfig(snr_db=30.0, nu=2), trial_rng(0, 0, 0))
    assert calls == [2, 1, 0] and out.fallback == 2 and not out.erased


def test_uncoded_bler_is_any_raw_error():
    cfg = LinkConfig(mcs="MCS5", snr_db=4.0, coded=False)
    for t in range(10):
        out = run_burst(cfg, trial_rng(11, 0, t))
        assert out.block_error == (out.bit_errors > 0)


def test_coding_lowers_bler():
    cfg = LinkConfig(mcs="MCS1", profile="tu", snr_db=4.0, branches=1)
    coded = sweep(cfg, "snr", [4.0], 200, seed=12)
    raw = sweep(replace(cfg, coded=False), "snr", [4.0], 200, seed=12)
    assert coded.bler[0] < raw.bler[0]


def test_payload_sizes():
    assert MCS_TABLE["MCS5"].payload_bits() == 348
    assert MCS_TABLE["MCS10"].payload_bits() == 580
    assert [MCS_TABLE[m].rate for m in ("MCS1", "MCS5", "MCS8", "MCS10")] == [0.53, 0.37, 0.67, 0.65]


def test_unknown_mcs_and_demodulator():
    with pytest.raises(ValueError):
        run_burst(LinkConfig(mcs="MCS3"), trial_rng(0, 0, 0))
    with pytest.raises(ValueError):
        run_burst(LinkConfig(demodulator="zf", snr_db=10.0), trial_rng(0, 0, 0))
    with pytest.raises(ValueError):
        sweep(LinkConfig(), "snr", [1.0], 0)


def test_ber_degrades_as_memory_shrinks():
    cfg = LinkConfig(mcs="MCS1", profile="tu", branches=1, snr_db=14.0, coded=False,
                     perfect_csi=True)
    ber = [sweep(replace(cfg, nu=nu), "snr", [14.0], 3000, seed=13).ber[0] for nu in (1, 2, 5)]
    ci = [ci_halfwidth(b, 3000 * 116) for b in ber]
    assert ber[0] >= ber[1] - ci[1] and ber[1] >= ber[2] - ci[2]
