import numpy as np
import pytest

from milbrx import coding
from milbrx.coding import CodingConfigError


def reference_encoder(bits):
    """Bit-serial shift-register encoder, taps read from the octal generators."""
    g0 = [int(c) for c in format(coding.G0, "05b")]
    g1 = [int(c) for c in format(coding.G1, "05b")]
    reg = [0] * 5
    out = []
    for b in list(bits) + [0] * coding.MEMORY:
        reg = [int(b)] + reg[:-1]
        out.append((sum(r * t for r, t in zip(reg, g0)) % 2, sum(r * t for r, t in zip(reg, g1)) % 2))
    return np.array(out)


def test_mother_code_matches_shift_register(rng):
    bits = rng.integers(0, 2, 50)
    assert np.array_equal(coding.mother_encode(bits), reference_encoder(bits))


def test_impulse_response_is_generators():
    out = coding.mother_encode([1])
    assert "".join(str(b) for b in out[:, 0]) == "10011"
    assert "".join(str(b) for b in out[:, 1]) == "11101"


@pytest.mark.parametrize("rate", coding.RATES)
def test_noise_free_recovery(rng, rate):
    bits = rng.integers(0, 2, 300)
    code = coding.encode(bits, rate)
    assert np.array_equal(coding.decode(4.0 * code - 2.0, 300, rate), bits)


def test_encode_hard_decode_identity_many(rng):
    for rate in (0.37, 0.53, 0.65, 0.67):
        for _ in range(2500):
            n = int(rng.integers(1, 60))
            bits = rng.integers(0, 2, n)
            assert np.array_equal(coding.decode(2.0 * coding.encode(bits, rate) - 1, n, rate), bits)


@pytest.mark.parametrize("rate", [0.37, 0.53, 0.65, 0.67])
def test_realized_rate_within_three_percent(rate):
    for capacity in (116, 348, 464, 580):
        n = coding.max_info_bits(capacity, rate)
        assert coding.coded_length(n, rate) <= capacity
        assert abs(coding.realized_rate(n, rate) - rate) <= 0.03 * rate


def test_unknown_rate():
    with pytest.raises(CodingConfigError):
        coding.encode([0, 1], 0.5)
    with pytest.raises(CodingConfigError):
        coding.decode(np.zeros(10), 3, 0.52)


def test_rate_one_bypass(rng):
    bits = rng.integers(0, 2, 40)
    assert np.array_equal(coding.encode(bits, 1.0), bits)
    assert coding.coded_length(40, 1.0) == 40


def test_corrects_errors(rng):
    bits = rng.integers(0, 2, 200)
    code = coding.encode(bits, 0.53)
    llr = 2.0 * code - 1.0
    flip = rng.choice(len(code), 8, replace=False)
    llr[flip] *= -1
    assert np.array_equal(coding.decode(llr, 200, 0.53), bits)


def test_decode_length_check():
    with pytest.raises(CodingConfigError):
        coding.decode(np.zeros(7), 10, 0.53)
