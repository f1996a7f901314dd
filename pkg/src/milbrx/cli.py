"""Command-line front end.

Configuration file (INI sections, every key optional)::

    [channel]
    profile = tu            ; flat | tu | ht
    profile_db =            ; custom tap powers in dB, comma separated (overrides profile)
    branches = 2            ; N, 1..8
    interferers = 0         ; M >= 0
    interferer_taps = 0     ; 0 -> same as target channel
    training =              ; custom +1/-1 midamble, comma separated

    [receiver]
    demodulator = milb      ; milb | hom
    mcs = MCS5              ; MCS1 | MCS5 | MCS8 | MCS10
    lw = 4                  ; stage-one filter length >= 1
    nu = 1                  ; trellis memory, 0..L-1
    block_size = 0          ; K, 0 -> automatic
    no_is = false           ; disable stage-one CCI suppression
    perfect_csi = false
    coded = true
    lut_count = false       ; report LUT-mode operation counts

    [sweep]
    snr = 20                ; dB, scalar or start:step:stop
    sir = inf               ; dB, scalar or start:step:stop
    trials = 100
    seed = 0
    workers = 1
    exact_trials = true

The sweep axis is whichever of ``snr``/``sir`` is a range (``snr`` when
neither is). Command-line flags override file values, which override the
defaults above.
"""

import argparse
import configparser
import logging
import math
import sys
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .coding import CodingConfigError
from .equalize import Metric, TrellisSpec, count_ops
from .harness import MCS_TABLE, STAGE_ERRORS, LinkConfig, sweep
from .milb import InvalidMemoryError, shorten
from .numkit import DimensionError
from .sigmodel import ALPHABETS, PROFILES, ChannelProfile, get_alphabet

log = logging.getLogger("milbrx")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    profile: str = "tu"
    profile_db: Optional[tuple] = None
    branches: int = 2
    interferers: int = 0
    interferer_taps: int = 0
    training: Optional[tuple] = None
    demodulator: str = "milb"
    mcs: str = "MCS5"
    lw: int = 4
    nu: int = 1
    block_size: int = 0
    no_is: bool = False
    perfect_csi: bool = False
    coded: bool = True
    lut_count: bool = False
    snr: str = "20"
    sir: str = "inf"
    trials: int = 100
    seed: int = 0
    workers: int = 1
    exact_trials: bool = True

    @property
    def channel_profile(self):
        if self.profile_db is not None:
            return ChannelProfile.from_db("custom", self.profile_db)
        return PROFILES[self.profile]

    def axis(self):
        """``(name, values, fixed_snr, fixed_sir)`` of the sweep."""
        snr, sir = parse_axis(self.snr, "snr"), parse_axis(self.sir, "sir")
        if len(snr) > 1 and len(sir) > 1:
            raise ConfigError("only one of 'snr' and 'sir' may be a range")
        if len(sir) > 1:
            return "sir", sir, snr[0], sir[0]
        return "snr", snr, snr[0], sir[0]

    def link(self):
        _, _, snr, sir = self.axis()
        return LinkConfig(
            mcs=self.mcs, demodulator=self.demodulator, profile=self.channel_profile,
            branches=self.branches, interferers=self.interferers,
            interferer_taps=self.interferer_taps, snr_db=snr, sir_db=sir, lw=self.lw,
            nu=self.nu, block_size=self.block_size, stage_one=not self.no_is,
            perfect_csi=self.perfect_csi, coded=self.coded, training=self.training,
        )


SECTIONS = {
    "channel": ("profile", "profile_db", "branches", "interferers", "interferer_taps", "training"),
    "receiver": ("demodulator", "mcs", "lw", "nu", "block_size", "no_is", "perfect_csi",
                 "coded", "lut_count"),
    "sweep": ("snr", "sir", "trials", "seed", "workers", "exact_trials"),
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_axis(text, key):
    """``"a"`` -> [a]; ``"start:step:stop"`` -> inclusive grid."""
    parts = str(text).strip().split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{key}: expected a number or start:step:stop, got {text!r}") from None
    if len(nums) == 1:
        return np.array(nums)
    if len(nums) != 3:
        raise ConfigError(f"{key}: expected start:step:stop, got {text!r}")
    start, step, stop = nums
    if not (math.isfinite(start) and math.isfinite(stop)) or step <= 0 or stop < start:
        raise ConfigError(f"{key}: range needs finite start <= stop and step > 0, got {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _convert(key, raw):
    typ = _TYPES[key]
    raw = str(raw).strip()
    if typ is bool or typ == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if typ is int or typ == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if key in ("profile_db", "training"):
        if not raw:
            return None
        try:
            return tuple(float(t) for t in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from None
    return raw


def _check_range(key, value, lo, hi):
    if not lo <= value <= hi:
        raise ConfigError(f"{key}={value} out of range [{lo}, {hi}]")


def validate(cfg):
    if cfg.profile_db is None and cfg.profile not in PROFILES:
        raise ConfigError(f"profile: {cfg.profile!r} not in {sorted(PROFILES)}")
    if cfg.demodulator not in ("milb", "hom"):
        raise ConfigError(f"demodulator: {cfg.demodulator!r} not in ['hom', 'milb']")
    if cfg.mcs not in MCS_TABLE:
        raise ConfigError(f"mcs: {cfg.mcs!r} not in {sorted(MCS_TABLE)}")
    if cfg.training is not None and any(abs(abs(t) - 1) > 0 for t in cfg.training):
        raise ConfigError("training: entries must be +1 or -1")
    L = cfg.channel_profile.length
    _check_range("branches", cfg.branches, 1, 8)
    _check_range("nu", cfg.nu, 0, L - 1)
    _check_range("interferers", cfg.interferers, 0, 64)
    _check_range("interferer_taps", cfg.interferer_taps, 0, 64)
    _check_range("lw", cfg.lw, 1, 64)
    _check_range("block_size", cfg.block_size, 0, 1 << 16)
    _check_range("trials", cfg.trials, 1, 10 ** 9)
    _check_range("workers", cfg.workers, 1, 1024)
    _check_range("seed", cfg.seed, 0, 2 ** 63 - 1)
    cfg.axis()
    return cfg


def parse_config(path=None, overrides=None):
    """Defaults, then the INI file at ``path``, then ``overrides`` (key -> str)."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path!r}: {exc}") from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]; expected one of {sorted(SECTIONS)}")
            for key, raw in parser.items(section):
                if key not in SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]; accepted: {', '.join(SECTIONS[section])}")
                values[key] = _convert(key, raw)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = raw if isinstance(raw, bool) else _convert(key, raw)
    return validate(RunConfig(**values))


# --------------------------------------------------------------------------
# Subcommands


def _cmd_sweep(args):
    cfg = parse_config(args.config, _overrides(args))
    name, values, _, _ = cfg.axis()
    link = cfg.link()
    if cfg.lut_count:
        spec = TrellisSpec(get_alphabet(MCS_TABLE[cfg.mcs].alphabet), cfg.nu)
        ops = count_ops(spec, cfg.branches, cfg.channel_profile.length, use_lut=True)
        log.info("LUT mode: %d real mults, %d LUT reads per stage",
                 ops.real_mults_per_stage, ops.lut_ops_per_stage)
    res = sweep(link, name, values, cfg.trials, seed=cfg.seed, workers=cfg.workers,
                exact_trials=cfg.exact_trials)
    text = res.to_csv()
    if args.output:
        with open(args.output, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def read_channel_file(path):
    """Branch tap lines, optionally ``--`` and N lines of R; taps as ``re:im``."""
    try:
        with open(path) as fh:
            lines = [ln.split("#")[0].strip() for ln in fh]
    except OSError as exc:
        raise ConfigError(f"cannot read channel file {path!r}: {exc.strerror}") from None
    lines = [ln for ln in lines if ln]
    if "--" in lines:
        cut = lines.index("--")
        taps, cov = lines[:cut], lines[cut + 1:]
    else:
        taps, cov = lines, []
    if not taps:
        raise ConfigError(f"{path}: no channel taps")
    h = _pairs(taps, path)
    N = h.shape[0]
    if cov:
        R = _pairs(cov, path)
        if R.shape != (N, N):
            raise ConfigError(f"{path}: R must be {N}x{N}, got {R.shape[0]}x{R.shape[1]}")
    else:
        R = np.eye(N, dtype=np.complex128)
    return h, R


def _pairs(lines, path):
    rows = []
    for ln in lines:
        row = []
        for tok in ln.split():
            re_, _, im = tok.partition(":")
            try:
                row.append(complex(float(re_), float(im) if im else 0.0))
            except ValueError:
                raise ConfigError(f"{path}: bad tap {tok!r}, expected re:im") from None
        rows.append(row)
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: rows have unequal lengths")
    return np.array(rows, dtype=np.complex128)


def _c(z):
    return f"{z.real:.9g}:{z.imag:.9g}"


def _cmd_shorten(args):
    h, R = read_channel_file(args.channel)
    K = args.k or max(16, 8 * h.shape[1])
    sol = shorten(h, R, args.nu, K)
    out = sys.stdout
    for n, v in enumerate(sol.v):
        out.write(f"v{n} " + " ".join(_c(z) for z in v) + "\n")
    out.write("g " + " ".join(_c(z) for z in sol.g) + "\n")
    out.write("u " + " ".join(_c(z) for z in sol.u) + "\n")
    out.write(f"I_R {sol.bits_per_symbol:.9g} bit/symbol\n")
    log.info("I_R = %.6g nats per %d-symbol block", sol.i_rate, K)
    return EXIT_OK


OPS_ORDER = ("GMSK-bin", "PSK8", "QAM16", "QAM32")


def ops_table(N, L, nu, lut=False):
    """Rows ``(alphabet, S, C_HOM formula, C_HOM table-mode, C_MILB[, LUT columns])``."""
    rows = []
    for name in OPS_ORDER:
        a = ALPHABETS[name]
        ung = TrellisSpec(a, nu)
        fny = TrellisSpec(a, nu, Metric.FORNEY_DDF, L)
        row = [name, a.size,
               count_ops(fny, N, L).real_mults_per_stage,
               count_ops(fny, N, L, table_mode=True).real_mults_per_stage,
               count_ops(ung, N, L).real_mults_per_stage]
        if lut:
            fl, ul = count_ops(fny, N, L, use_lut=True), count_ops(ung, N, L, use_lut=True)
            row += [fl.real_mults_per_stage, fl.lut_ops_per_stage,
                    ul.real_mults_per_stage, ul.lut_ops_per_stage]
        rows.append(row)
    return rows


def _cmd_ops(args):
    if args.n < 1 or args.l < 1:
        raise ConfigError("ops: --n and --l must be >= 1")
    if not 0 <= args.nu <= args.l - 1:
        raise ConfigError(f"nu={args.nu} out of range [0, {args.l - 1}]")
    head = ["alphabet", "S", "C_HOM", "C_HOM_table", "C_MILB"]
    if args.lut:
        head += ["HOM_lut_mults", "HOM_lut_reads", "MILB_lut_mults", "MILB_lut_reads"]
    out = sys.stdout
    out.write(f"# real multiplications per stage, N={args.n} L={args.l} nu={args.nu}\n")
    out.write(",".join(head) + "\n")
    for row in ops_table(args.n, args.l, args.nu, args.lut):
        out.write(",".join(str(x) for x in row) + "\n")
    out.write(f"# C_HOM = N(4L+2)S^(nu+1) with 4L+2 = {4 * args.l + 2}; "
              f"C_HOM_table uses 40 in place of 4L+2, which reproduces the reference "
              f"HOM column (320/5120/20480/81920) at N=2, nu=1 but does not follow "
              f"from L=8 (4L+2 = 34)\n")
    if args.lut:
        out.write(f"# LUT reads per metric: MILB nu+1 = {args.nu + 1}, HOM N*L = {args.n * args.l}\n")
    return EXIT_OK


def _cmd_selftest(args):
    from . import selftest

    ok = selftest.run(sys.stdout)
    return EXIT_OK if ok else EXIT_NUMERIC


# --------------------------------------------------------------------------


_FLAG_KEYS = ("profile", "branches", "interferers", "demodulator", "mcs", "lw", "nu",
              "block_size", "snr", "sir", "trials", "seed", "workers")
_BOOL_FLAGS = ("no_is", "perfect_csi", "lut_count")


def _overrides(args):
    out = {k: getattr(args, k) for k in _FLAG_KEYS}
    out = {k: (None if v is None else str(v)) for k, v in out.items()}
    for k in _BOOL_FLAGS:
        if getattr(args, k):
            out[k] = True
    if args.exact_trials is not None:
        out["exact_trials"] = args.exact_trials
    if args.uncoded:
        out["coded"] = False
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="milbrx", description=__doc__.split("\n\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-q", "--quiet", action="store_true", help="errors only")
    p.add_argument("-v", "--verbose", action="store_true", help="per-stage diagnostics")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="Monte-Carlo BER/BLER sweep, CSV output",
                       description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--config", help="INI configuration file")
    s.add_argument("--output", "-o", help="CSV path (default stdout)")
    s.add_argument("--profile")
    s.add_argument("--n", dest="branches", type=int)
    s.add_argument("--m", dest="interferers", type=int)
    s.add_argument("--demodulator", choices=("milb", "hom"))
    s.add_argument("--mcs")
    s.add_argument("--lw", type=int)
    s.add_argument("--nu", type=int)
    s.add_argument("--k", dest="block_size", type=int)
    s.add_argument("--snr", help="dB, scalar or start:step:stop")
    s.add_argument("--sir", help="dB, scalar or start:step:stop")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--no-is", dest="no_is", action="store_true", help="disable stage one")
    s.add_argument("--perfect-csi", action="store_true")
    s.add_argument("--lut-count", action="store_true")
    s.add_argument("--uncoded", action="store_true")
    s.add_argument("--exact-trials", dest="exact_trials", action="store_true", default=None)
    s.add_argument("--early-stop", dest="exact_trials", action="store_false")
    s.set_defaults(func=_cmd_sweep)

    h = sub.add_parser(
        "shorten", help="design MILB prefilters for a channel file",
        description="Channel file: one line per branch of whitespace-separated re:im taps; "
                    "optionally a line '--' followed by N lines of N re:im entries of R "
                    "(default R = I). Prints v_n, g, u and I_R in bit/symbol.")
    h.add_argument("channel")
    h.add_argument("--nu", type=int, default=1)
    h.add_argument("--k", type=int, default=0, help="block size (default max(16, 8L))")
    h.set_defaults(func=_cmd_shorten)

    o = sub.add_parser("ops", help="real multiplications per trellis stage")
    o.add_argument("--n", type=int, default=2)
    o.add_argument("--l", type=int, default=8)
    o.add_argument("--nu", type=int, default=1)
    o.add_argument("--lut", action="store_true", help="add LUT-mode counts")
    o.set_defaults(func=_cmd_ops)

    t = sub.add_parser("selftest", help="run the oracle-equivalence checks")
    t.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.ERROR if args.quiet else logging.DEBUG if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CodingConfigError, InvalidMemoryError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (STAGE_ERRORS + (np.linalg.LinAlgError, ArithmeticError)) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
