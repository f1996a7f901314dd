"""Two-stage SIMO burst receiver: CCI suppression, MILB channel shortening
and Max-log-MAP equalization, with a Monte-Carlo link harness."""

from .harness import LinkConfig, run_burst, sweep
from .milb import ShorteningSolution, shorten, shorten_oracle

__version__ = "0.1.0"

__all__ = [
    "LinkConfig",
    "ShorteningSolution",
    "run_burst",
    "shorten",
    "shorten_oracle",
    "sweep",
]
