"""Configured verification runs, sweeps and plot data, plus the command-line front end."""

from .checks import REGISTRY, VerificationRow, verdict_for
from .config import ConfigError, load_config
from .runner import emit_plotdata, run_sweep, run_verify

__all__ = ["REGISTRY", "VerificationRow", "verdict_for", "ConfigError", "load_config", "emit_plotdata", "run_sweep",
           "run_verify"]
