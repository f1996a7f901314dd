"""Monte-Carlo link simulation of the two-stage receiver.

One trial = one burst: draw bits, channel, interferers and noise, run the
receiver chain, count bit and block errors. Every trial owns an RNG derived
from ``(seed, point index, trial index)`` so results do not depend on how
trials are scheduled.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import coding
from .ccistage import CciDesignError, apply_cci_filters, design_cci_filters
from .estimate import (
    COV_LOADING,
    InsufficientTrainingError,
    ls_channel_estimate,
    noise_covariance,
    training_windows,
)
from .equalize import (
    Metric,
    PrefilterDesignError,
    TrellisSpec,
    ddf_mlm_forney,
    minphase_prefilter,
    mlm_ungerboeck,
)
from .milb import ShorteningDegenerateError, apply_prefilter, default_block_size, shorten
from .numkit import SingularMatrixError
from .sigmodel import (
    BurstLayout,
    ChannelProfile,
    draw_channel,
    draw_interferers,
    get_alphabet,
    get_profile,
    indices_to_bits,
    make_burst,
    propagate,
    rotate,
    training_symbols,
)

log = logging.getLogger(__name__)

STAGE_ERRORS = (
    SingularMatrixError,
    ShorteningDegenerateError,
    CciDesignError,
    PrefilterDesignError,
    InsufficientTrainingError,
)


@dataclass(frozen=True)
class McsConfig:
    name: str
    alphabet: str
    rate: float

    @property
    def bits_per_symbol(self):
        return get_alphabet(self.alphabet).bits_per_symbol

    def payload_bits(self, layout=None):
        layout = layout or BurstLayout()
        return layout.payload_symbols * self.bits_per_symbol


MCS_TABLE = {
    "MCS1": McsConfig("MCS1", "GMSK-bin", 0.53),
    "MCS5": McsConfig("MCS5", "PSK8", 0.37),
    "MCS8": McsConfig("MCS8", "QAM16", 0.67),
    "MCS10": McsConfig("MCS10", "QAM32", 0.65),
}


@dataclass(frozen=True)
class LinkConfig:
    """Everything one burst needs. ``sir_db=inf`` or ``interferers=0`` means no CCI."""

    mcs: str = "MCS5"
    demodulator: str = "milb"
    profile: Union[str, ChannelProfile] = "tu"
    branches: int = 2
    interferers: int = 0
    interferer_taps: int = 0  # 0 -> same length as the target channel
    snr_db: float = 20.0
    sir_db: float = math.inf
    lw: int = 4
    nu: int = 1
    block_size: int = 0  # 0 -> default_block_size
    stage_one: bool = True
    perfect_csi: bool = False
    coded: bool = True
    deterministic_channel: bool = False
    training: Optional[tuple] = None

    @property
    def channel_profile(self):
        if isinstance(self.profile, ChannelProfile):
            return self.profile
        return get_profile(self.profile)

    @property
    def interferer_profile(self):
        p = self.channel_profile
        if self.interferer_taps and self.interferer_taps != p.length:
            return ChannelProfile(f"{p.name}-intf", np.ones(self.interferer_taps))
        return p

    @property
    def layout(self):
        if self.training is None:
            return BurstLayout()
        return BurstLayout(training=np.asarray(self.training, dtype=float))

    @property
    def mcs_config(self):
        try:
            return MCS_TABLE[self.mcs]
        except KeyError:
            raise ValueError(f"unknown MCS {self.mcs!r}; choose from {sorted(MCS_TABLE)}") from None


@dataclass
class BurstOutcome:
    bit_errors: int
    bits: int
    block_error: bool
    erased: bool = False
    fallback: int = 0  # memory reductions forced by a degenerate design
    decisions: Optional[np.ndarray] = None


def _perfect_estimates(h, interferers, N0, alphabet):
    """True effective (de-rotated) channel and spatial covariance."""
    L = h.shape[1]
    ramp = np.exp(-1j * alphabet.rotation * np.arange(L))
    hh = h * ramp
    N = h.shape[0]
    R = N0 * np.eye(N, dtype=np.complex128)
    for p in interferers.cirs:
        R += p @ p.conj().T
    tr = np.real(np.trace(R))
    return hh, R + (COV_LOADING * tr / N if tr > 0 else COV_LOADING) * np.eye(N)


def _receiver(cfg, y, layout, alphabet, L, h=None, interferers=None, N0=None):
    """Front end, estimation, stage one and demodulation on de-rotated streams."""
    train = training_symbols(layout.training, alphabet)
    t0 = layout.training_span[0]
    B = layout.length
    if cfg.perfect_csi:
        hh, R = _perfect_estimates(h, interferers, N0, alphabet)
    else:
        win = training_windows(y, train, t0, L)
        hh = ls_channel_estimate(win, train, L)
        R = noise_covariance(win, train, hh)
        if cfg.stage_one:
            bank = design_cci_filters(win, train, hh, cfg.lw)
            y = apply_cci_filters(bank, y)
            if log.isEnabledFor(logging.DEBUG):
                log.debug("residual power before stage one %.4e", np.real(np.trace(R)))
            win = training_windows(y, train, t0, L)
            hh = ls_channel_estimate(win, train, L)
            R = noise_covariance(win, train, hh)
    if log.isEnabledFor(logging.DEBUG):
        log.debug("residual power %.4e, cond(R) %.3e", np.real(np.trace(R)), np.linalg.cond(R))
    known = np.full(B, -1, dtype=np.int64)
    plus, minus = alphabet.training_labels
    known[t0:t0 + layout.training_length] = np.where(layout.training > 0, plus, minus)
    K = cfg.block_size or default_block_size(L, y.shape[1])
    fallback = 0
    nu = min(cfg.nu, L - 1)  # no point in a trellis longer than the channel
    if cfg.demodulator == "milb":
        while True:
            try:
                sol = shorten(hh, R, nu, K)
                break
            except ShorteningDegenerateError:
                if nu == 0:
                    raise
                log.warning("degenerate shortening at nu=%d, falling back to nu=%d", nu, nu - 1)
                nu -= 1
                fallback += 1
        log.debug("I_R = %.4f nats/block (%.4f bit/symbol)", sol.i_rate, sol.bits_per_symbol)
        yhat = apply_prefilter(sol, y, K)[:B]
        spec = TrellisSpec(alphabet, sol.nu)
        sym, llr = mlm_ungerboeck(yhat, sol.g, spec, known=known)
    elif cfg.demodulator == "hom":
        design = minphase_prefilter(hh, R)
        yf = design.apply(y, K)
        spec = TrellisSpec(alphabet, nu, Metric.FORNEY_DDF, L)
        sym, llr = ddf_mlm_forney(yf, design.cir, spec, known=known, length=B)
    else:
        raise ValueError(f"unknown demodulator {cfg.demodulator!r}")
    return sym, llr, fallback


def run_burst(cfg, rng):
    """Simulate one burst end to end and count errors."""
    mcs = cfg.mcs_config
    alphabet = get_alphabet(mcs.alphabet)
    layout = cfg.layout
    profile = cfg.channel_profile
    L = profile.length
    capacity = mcs.payload_bits(layout)
    if cfg.coded and mcs.rate < 1.0:
        n_info = coding.max_info_bits(capacity, mcs.rate)
        info = rng.integers(0, 2, n_info)
        code = coding.encode(info, mcs.rate)
        payload = np.concatenate([code, rng.integers(0, 2, capacity - len(code))])
    else:
        info = rng.integers(0, 2, capacity)
        code = info
        payload = info
    burst = make_burst(payload, alphabet, layout)
    h = draw_channel(profile, cfg.branches, rng, deterministic=cfg.deterministic_channel)
    intf = draw_interferers(
        cfg.interferers if math.isfinite(cfg.sir_db) else 0,
        cfg.interferer_profile, cfg.branches, cfg.sir_db, rng, alphabet)
    N0 = 10.0 ** (-cfg.snr_db / 10.0) if math.isfinite(cfg.snr_db) else 0.0
    rx = propagate(burst, h, intf, N0, rng)

    y = rotate(rx.streams, alphabet, inverse=True)
    try:
        sym, llr, fallback = _receiver(cfg, y, layout, alphabet, L, h, intf, N0)
    except STAGE_ERRORS as exc:
        log.info("burst erased: %s", exc)
        return BurstOutcome(capacity // 2, capacity, True, erased=True)

    mask = layout.payload_mask
    rx_bits = indices_to_bits(sym[mask], alphabet)
    bit_errors = int(np.count_nonzero(rx_bits != payload))
    if cfg.coded and mcs.rate < 1.0:
        decoded = coding.decode(llr[mask].reshape(-1)[:len(code)], len(info), mcs.rate)
        block_error = bool(np.any(decoded != info))
    else:
        block_error = bit_errors > 0
    return BurstOutcome(bit_errors, capacity, block_error, fallback=fallback, decisions=sym)


# --------------------------------------------------------------------------
# Sweeps

Z95 = 1.959963984540054


def ci_halfwidth(p, n):
    """95% normal-approximation half-width of a binomial proportion."""
    if n <= 0:
        return math.nan
    return Z95 * math.sqrt(max(p * (1.0 - p), 0.0) / n)


def trial_rng(seed, point, trial):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(point), int(trial)]))


@dataclass
class SweepResult:
    axis: str
    values: np.ndarray
    ber: np.ndarray
    ber_ci: np.ndarray
    bler: np.ndarray
    bler_ci: np.ndarray
    trials: np.ndarray
    bits: np.ndarray
    erasures: np.ndarray
    fallbacks: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        lines = ["axis_db,ber,ber_ci,bler,bler_ci,trials,erasures"]
        for i in range(len(self.values)):
            lines.append(",".join([
                _fmt(self.values[i]), _fmt(self.ber[i]), _fmt(self.ber_ci[i]),
                _fmt(self.bler[i]), _fmt(self.bler_ci[i]),
                str(int(self.trials[i])), str(int(self.erasures[i])),
            ]))
        return "\n".join(lines) + "\n"


def _fmt(x):
    return f"{float(x):.8e}"


def _run_chunk(args):
    cfg, seed, point, start, stop = args
    be = bits = blk = er = fb = 0
    for t in range(start, stop):
        out = run_burst(cfg, trial_rng(seed, point, t))
        be += out.bit_errors
        bits += out.bits
        blk += out.block_error
        er += out.erased
        fb += out.fallback
    return np.array([stop - start, be, bits, blk, er, fb], dtype=np.int64)


CHUNK = 250


def sweep(cfg, axis, values, trials, seed=0, workers=1, exact_trials=True, chunk=CHUNK):
    """Run ``trials`` bursts at every axis value (``axis`` is 'snr' or 'sir').

    Without ``exact_trials`` a point stops after the first chunk (in trial
    order) whose cumulative BER has a CI half-width under 10% of the
    estimate; the stopping decision depends only on ordered chunk totals,
    so serial and parallel runs agree.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if axis not in ("snr", "sir"):
        raise ValueError(f"axis must be 'snr' or 'sir', got {axis!r}")
    values = np.asarray(values, dtype=float)
    totals = np.zeros((len(values), 6), dtype=np.int64)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for p, val in enumerate(values):
            pcfg = replace(cfg, **{f"{axis}_db": float(val)})
            bounds = [(a, min(a + chunk, trials)) for a in range(0, trials, chunk)]
            tot = np.zeros(6, dtype=np.int64)
            batch = max(workers, 1)
            done = False
            for b in range(0, len(bounds), batch):
                jobs = [(pcfg, seed, p, a, z) for a, z in bounds[b:b + batch]]
                parts = pool.map(_run_chunk, jobs) if pool else map(_run_chunk, jobs)
                for part in parts:
                    if done:
                        continue
                    tot += part
                    if not exact_trials and _converged(tot):
                        done = True
                if done:
                    break
            totals[p] = tot
            log.info("%s=%g dB: BER %.3e over %d bursts", axis, val, tot[1] / max(tot[2], 1), tot[0])
    finally:
        if pool:
            pool.shutdown()
    n, be, bits, blk, er, fb = totals.T
    ber = be / np.maximum(bits, 1)
    bler = blk / np.maximum(n, 1)
    return SweepResult(
        axis=axis, values=values, ber=ber,
        ber_ci=np.array([ci_halfwidth(q, m) for q, m in zip(ber, bits)]),
        bler=bler, bler_ci=np.array([ci_halfwidth(q, m) for q, m in zip(bler, n)]),
        trials=n, bits=bits, erasures=er, fallbacks=fb,
        meta={"seed": seed, "demodulator": cfg.demodulator,
              "profile": cfg.channel_profile.name, "mcs": cfg.mcs},
    )


def _converged(tot):
    n, be, bits = tot[0], tot[1], tot[2]
    if be == 0 or bits == 0:
        return False
    p = be / bits
    return ci_halfwidth(p, bits) < 0.1 * p
