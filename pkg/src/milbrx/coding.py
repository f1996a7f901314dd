"""Rate-1/2, constraint-length-5 convolutional code (generators 23, 35 octal)
with puncturing / repetition patterns for the MCS coding rates.

A pattern lists, for each input bit of one period, how many times each of
the two coded bits is sent (0 = punctured, 2 = repeated).
"""

import numpy as np

from ._trellis import conv_viterbi

MEMORY = 4
G0 = 0o23
G1 = 0o35

PATTERNS = {
    0.37: np.array([[2, 1], [1, 1], [2, 1]]),  # 3 -> 8, rate 0.375
    0.53: np.array([[1, 1]] * 7 + [[1, 0]]),  # 8 -> 15, rate 0.533
    0.65: np.array([[1, 1], [1, 0], [1, 1], [1, 0], [1, 1], [1, 0], [1, 1],
                    [1, 0], [1, 1], [1, 0], [1, 1], [1, 0], [1, 1]]),  # 13 -> 20, rate 0.65
    0.67: np.array([[1, 1], [1, 0]]),  # 2 -> 3, rate 0.667
}
RATES = (0.37, 0.53, 0.65, 0.67, 1.0)


class CodingConfigError(ValueError):
    pass


def _pattern(rate):
    for r, p in PATTERNS.items():
        if abs(rate - r) < 1e-9:
            return p
    raise CodingConfigError(f"unsupported coding rate {rate}; choose from {RATES}")


def _taps(gen):
    # MSB of the generator multiplies the current input bit
    return np.array([(gen >> (MEMORY - i)) & 1 for i in range(MEMORY + 1)], dtype=np.int64)


def mother_encode(bits):
    """Terminated rate-1/2 encoding, shape ``(len(bits) + 4, 2)``."""
    bits = np.concatenate([np.asarray(bits, dtype=np.int64), np.zeros(MEMORY, dtype=np.int64)])
    n = len(bits)
    c0 = np.convolve(bits, _taps(G0))[:n] & 1
    c1 = np.convolve(bits, _taps(G1))[:n] & 1
    return np.stack([c0, c1], axis=1)


def _multiplicity(steps, rate):
    pat = _pattern(rate)
    reps = -(-steps // len(pat))
    return np.tile(pat, (reps, 1))[:steps]


def coded_length(n_info, rate):
    if abs(rate - 1.0) < 1e-9:
        return n_info
    return int(_multiplicity(n_info + MEMORY, rate).sum())


def max_info_bits(capacity, rate):
    """Largest payload whose coded length fits in ``capacity`` bits."""
    if abs(rate - 1.0) < 1e-9:
        return capacity
    n = max(int(capacity * rate) + 8, 1)
    while n > 0 and coded_length(n, rate) > capacity:
        n -= 1
    return n


def encode(bits, rate):
    """Encode, then puncture/repeat into a flat bit vector."""
    bits = np.asarray(bits, dtype=np.int64)
    if abs(rate - 1.0) < 1e-9:
        return bits.copy()
    c = mother_encode(bits)
    mult = _multiplicity(len(c), rate)
    return np.repeat(c.reshape(-1), mult.reshape(-1))


def decode(llr, n_info, rate):
    """Viterbi decoding of punctured LLRs (positive favors 1)."""
    llr = np.asarray(llr, dtype=float)
    if abs(rate - 1.0) < 1e-9:
        return (llr[:n_info] > 0).astype(np.int64)
    steps = n_info + MEMORY
    mult = _multiplicity(steps, rate).reshape(-1)
    if llr.size != mult.sum():
        raise CodingConfigError(f"expected {mult.sum()} coded LLRs, got {llr.size}")
    owner = np.repeat(np.arange(2 * steps), mult)
    merged = np.zeros(2 * steps)
    np.add.at(merged, owner, llr)
    return conv_viterbi(merged.reshape(steps, 2), n_info, MEMORY, G0, G1)


def realized_rate(n_info, rate):
    """Input bits per transmitted bit of the punctured code, tail included as input."""
    if abs(rate - 1.0) < 1e-9:
        return 1.0
    return (n_info + MEMORY) / coded_length(n_info, rate)
