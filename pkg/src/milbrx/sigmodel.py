"""Transmit side of the simulator: alphabets, bursts, SIMO ISI channels.

Received branch ``n`` is modeled at symbol rate as

    y[k, n] = sum_l h[n, l] x[k-l] + sum_m sum_l p_m[n, l] s_m[k-l] + noise

with block fading (one channel draw per burst) and CN(0, N0) noise.
"""

from dataclasses import dataclass, field

import numpy as np


class FramingError(ValueError):
    """Bit stream does not fit the alphabet or burst layout."""


_TRAINING_LABELS = {}


@dataclass(frozen=True)
class Alphabet:
    """Unit-energy constellation with a per-symbol phase rotation.

    ``points[i]`` is the symbol carrying the bit label ``i`` (MSB first).
    """

    name: str
    points: np.ndarray
    rotation: float = 0.0

    @property
    def size(self):
        return len(self.points)

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.size))

    @property
    def training_labels(self):
        """Labels ``(plus, minus)`` of the antipodal pair carrying training.

        The pair is the one closest to unit energy, smallest phase first,
        so it is exactly +-1 for the binary and 8PSK alphabets.
        """
        cached = _TRAINING_LABELS.get(self.name)
        if cached is not None and len(self.points) == cached[2]:
            return cached[:2]
        pts = self.points
        best = None
        for i, p in enumerate(pts):
            j = np.flatnonzero(np.abs(pts + p) < 1e-9)
            if j.size == 0:
                continue
            key = (round(abs(abs(p) ** 2 - 1.0), 9), np.angle(p) % (2 * np.pi))
            if best is None or key < best[0]:
                best = (key, i, int(j[0]))
        _TRAINING_LABELS[self.name] = (best[1], best[2], len(pts))
        return best[1], best[2]

    @property
    def labels(self):
        """(S, bits) array of the bit labels, MSB first."""
        m = self.bits_per_symbol
        idx = np.arange(self.size)[:, None]
        return (idx >> np.arange(m - 1, -1, -1)[None, :]) & 1


def _gray(n):
    return n ^ (n >> 1)


def _psk8():
    pts = np.empty(8, dtype=np.complex128)
    for pos in range(8):
        pts[_gray(pos)] = np.exp(2j * np.pi * pos / 8)
    return pts


def _qam16():
    pam = {0b00: -3, 0b01: -1, 0b11: 1, 0b10: 3}
    pts = np.array([complex(pam[i >> 2], pam[i & 3]) for i in range(16)])
    return pts / np.sqrt(10.0)


# Quasi-Gray cross labeling found by local search: 2 of the 52 nearest-neighbor
# pairs differ in two bits, every other pair in one.
_QAM32_GRID = [
    (5, -3), (5, 3), (5, -1), (5, 1), (3, -3), (3, -5), (1, -3), (1, -5),
    (3, 5), (3, 3), (3, -1), (3, 1), (1, 5), (1, 3), (1, -1), (1, 1),
    (-5, -3), (-5, 3), (-5, -1), (-5, 1), (-3, -3), (-3, -5), (-1, -3), (-1, -5),
    (-3, 5), (-3, 3), (-3, -1), (-3, 1), (-1, 5), (-1, 3), (-1, -1), (-1, 1),
]


def _qam32():
    pts = np.array([complex(i, q) for i, q in _QAM32_GRID])
    return pts / np.sqrt(20.0)


ALPHABETS = {
    "GMSK-bin": Alphabet("GMSK-bin", np.array([1.0 + 0j, -1.0 + 0j]), np.pi / 2),
    "PSK8": Alphabet("PSK8", _psk8(), 3 * np.pi / 8),
    "QAM16": Alphabet("QAM16", _qam16(), np.pi / 4),
    "QAM32": Alphabet("QAM32", _qam32(), -np.pi / 4),
}


def get_alphabet(name):
    try:
        return ALPHABETS[name]
    except KeyError:
        raise ValueError(f"unknown alphabet {name!r}; choose from {sorted(ALPHABETS)}") from None


def bits_to_indices(bits, alphabet):
    bits = np.asarray(bits, dtype=np.int64)
    m = alphabet.bits_per_symbol
    if bits.size % m:
        raise FramingError(f"{bits.size} bits is not a multiple of {m} for {alphabet.name}")
    weights = 1 << np.arange(m - 1, -1, -1)
    return bits.reshape(-1, m) @ weights


def indices_to_bits(indices, alphabet):
    return alphabet.labels[np.asarray(indices, dtype=np.int64)].reshape(-1)


def rotate(symbols, alphabet, start=0, inverse=False):
    """Apply (or undo) the per-symbol phase ramp ``exp(j*k*rotation)``."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    if alphabet.rotation == 0.0:
        return symbols.copy()
    k = start + np.arange(symbols.shape[-1])
    ramp = np.exp((-1j if inverse else 1j) * alphabet.rotation * k)
    return symbols * ramp


def modulate(bits, alphabet, rotated=True):
    """Gray-map ``bits`` and apply the alphabet's phase rotation."""
    sym = alphabet.points[bits_to_indices(bits, alphabet)]
    return rotate(sym, alphabet) if rotated else sym


def demap_hard(symbols, alphabet):
    """Nearest-point decision on unrotated symbols; returns label indices."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    d = np.abs(symbols[..., None] - alphabet.points) ** 2
    return np.argmin(d, axis=-1)


# --------------------------------------------------------------------------
# Training sequence and burst layout


def mls_training(length=26, seed=0b00001):
    """Binary +-1 training from the x^5 + x^3 + 1 maximal-length register."""
    state = seed & 0x1F
    if state == 0:
        raise ValueError("LFSR seed must be non-zero")
    out = np.empty(length)
    for i in range(length):
        bit = state & 1
        out[i] = 1.0 - 2.0 * bit
        fb = (state ^ (state >> 2)) & 1
        state = (state >> 1) | (fb << 4)
    return out


DEFAULT_TRAINING = mls_training()


def training_symbols(pattern, alphabet):
    """Map a +-1 training pattern onto the alphabet's antipodal training pair."""
    plus, _ = alphabet.training_labels
    return np.asarray(pattern, dtype=float) * alphabet.points[plus]


@dataclass(frozen=True)
class BurstLayout:
    """Payload / midamble / payload arrangement of a normal burst."""

    payload_half: int = 58
    training: np.ndarray = field(default_factory=lambda: DEFAULT_TRAINING.copy())

    @property
    def training_length(self):
        return len(self.training)

    @property
    def length(self):
        return 2 * self.payload_half + self.training_length

    @property
    def training_span(self):
        return (self.payload_half, self.payload_half + self.training_length)

    @property
    def payload_spans(self):
        t1 = self.payload_half + self.training_length
        return ((0, self.payload_half), (t1, self.length))

    @property
    def payload_mask(self):
        mask = np.zeros(self.length, dtype=bool)
        for a, b in self.payload_spans:
            mask[a:b] = True
        return mask

    @property
    def payload_symbols(self):
        return 2 * self.payload_half


@dataclass
class BurstFrame:
    """One transmitted burst.

    ``symbols`` are rotated channel symbols; ``indices`` hold the payload
    label indices in burst order (training positions are -1).
    """

    symbols: np.ndarray
    indices: np.ndarray
    bits: np.ndarray
    layout: BurstLayout
    alphabet: Alphabet

    @property
    def training_span(self):
        return self.layout.training_span

    @property
    def payload_spans(self):
        return self.layout.payload_spans


def make_burst(bits, alphabet, layout=None):
    """Map payload bits into a burst around the training midamble."""
    layout = layout or BurstLayout()
    bits = np.asarray(bits, dtype=np.int64)
    need = layout.payload_symbols * alphabet.bits_per_symbol
    if bits.size != need:
        raise FramingError(f"burst needs {need} payload bits, got {bits.size}")
    idx = bits_to_indices(bits, alphabet)
    sym = np.empty(layout.length, dtype=np.complex128)
    indices = np.full(layout.length, -1, dtype=np.int64)
    mask = layout.payload_mask
    sym[mask] = alphabet.points[idx]
    indices[mask] = idx
    t0, t1 = layout.training_span
    sym[t0:t1] = training_symbols(layout.training, alphabet)
    return BurstFrame(rotate(sym, alphabet), indices, bits, layout, alphabet)


# --------------------------------------------------------------------------
# Channels


@dataclass(frozen=True)
class ChannelProfile:
    """Symbol-spaced power-delay profile (linear powers summing to one)."""

    name: str
    powers: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=float)
        if p.ndim != 1 or p.size < 1 or np.any(p < 0) or not np.isfinite(p).all():
            raise ValueError(f"profile {self.name!r}: powers must be a non-negative vector")
        object.__setattr__(self, "powers", p / p.sum())

    @property
    def length(self):
        return len(self.powers)

    @classmethod
    def from_db(cls, name, db):
        return cls(name, 10.0 ** (np.asarray(db, dtype=float) / 10.0))


# Symbol-spaced stand-ins for the urban and hilly-terrain profiles. These are
# not the 3GPP tables; HT keeps substantial energy past the second tap.
PROFILES = {
    "flat": ChannelProfile("flat", np.array([1.0])),
    "tu": ChannelProfile.from_db("tu", [-3, 0, -2, -6, -8, -10]),
    "ht": ChannelProfile.from_db("ht", [0, -2, -4, -7, -6, -9, -12, -14]),
}


def get_profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown channel profile {name!r}; choose from {sorted(PROFILES)}") from None


def crandn(rng, shape):
    """Unit-variance circular complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def draw_channel(profile, N, rng, deterministic=False):
    """Rayleigh block-fading CIR of shape ``(N, L)``.

    With ``deterministic=True`` every tap equals ``sqrt(power)`` (test hook).
    """
    if N < 1:
        raise ValueError("need at least one branch")
    amp = np.sqrt(profile.powers)
    if deterministic:
        return np.tile(amp.astype(np.complex128), (N, 1))
    return amp[None, :] * crandn(rng, (N, profile.length))


@dataclass
class InterfererSet:
    """Co-channel interferers: per-interferer ``(N, Lt)`` CIRs and alphabets."""

    cirs: list = field(default_factory=list)
    alphabets: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.cirs)


def draw_interferers(M, profile, N, sir_db, rng, alphabet):
    """Draw ``M`` interferers sharing ``sir_db`` total signal-to-interference ratio.

    Every CIR is a Rayleigh draw from ``profile`` scaled so that the sum of
    average interferer powers per branch is ``10**(-sir_db/10)``.
    """
    if M == 0:
        return InterfererSet()
    scale = np.sqrt(10.0 ** (-sir_db / 10.0) / M)
    cirs = [scale * draw_channel(profile, N, rng) for _ in range(M)]
    return InterfererSet(cirs, [alphabet] * M)


@dataclass
class ReceivedBurst:
    """Per-branch received samples, shape ``(N, B + L - 1)``."""

    streams: np.ndarray
    noise: np.ndarray
    interference: np.ndarray


def _conv_rows(cir, x):
    return np.stack([np.convolve(h, x) for h in cir])


def propagate(burst, cir, interferers, N0, rng):
    """Pass a burst through the SIMO channel, add CCI and white noise.

    The output has ``len(burst) + L - 1`` samples per branch (full linear
    convolution). Interferer symbols are drawn from ``rng`` first, then the
    noise, so that clean and interfered runs can share draws.
    """
    x = burst.symbols if isinstance(burst, BurstFrame) else np.asarray(burst, dtype=np.complex128)
    cir = np.atleast_2d(np.asarray(cir, dtype=np.complex128))
    N, L = cir.shape
    if len(x) < L:
        raise FramingError(f"burst length {len(x)} is shorter than the channel ({L} taps)")
    interferers = interferers or InterfererSet()
    T = len(x) + L - 1
    y = _conv_rows(cir, x)
    intf = np.zeros((N, T), dtype=np.complex128)
    for p, alph in zip(interferers.cirs, interferers.alphabets):
        s = rotate(alph.points[rng.integers(0, alph.size, len(x))], alph)
        full = _conv_rows(np.atleast_2d(p), s)
        n = min(T, full.shape[1])
        intf[:, :n] += full[:, :n]
    noise = np.sqrt(N0) * crandn(rng, (N, T)) if N0 > 0 else np.zeros((N, T), dtype=np.complex128)
    return ReceivedBurst(y + intf + noise, noise, intf)
