"""Rate-energy optimization for a two-tier network with a full-duplex D2D pair.

A multi-antenna base station serves ``K`` single-antenna cellular users while
two multi-antenna D2D nodes exchange data in full-duplex mode.  Receivers may
harvest RF energy.  The package computes Pareto boundaries of rate and
rate-energy regions under proper and improper Gaussian signaling.
"""

from .model import (
    ChannelSet,
    ConfigError,
    NetworkConfig,
    NetworkInstance,
    load_channels,
    random_channels,
    table1_instance,
    validate,
)
from .stats import TxDesign, rates_and_energies

__all__ = [
    "ChannelSet",
    "ConfigError",
    "NetworkConfig",
    "NetworkInstance",
    "TxDesign",
    "load_channels",
    "random_channels",
    "rates_and_energies",
    "table1_instance",
    "validate",
]

__version__ = "0.1.0"
