"""Quantum Fisher information of N channel uses under parallel, sequential, switch,
superposition and general indefinite-causal-order strategies."""

from .channels import ParamChannel, channel_from_config, choi_power, make_ad_channel, make_swap_channel
from .qfiengine import QfiRequest, QfiResult, parallel_bound, qfi, sequential_bound
from .stratsets import KINDS, StrategyKind

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "ParamChannel",
    "QfiRequest",
    "QfiResult",
    "StrategyKind",
    "channel_from_config",
    "choi_power",
    "make_ad_channel",
    "make_swap_channel",
    "parallel_bound",
    "qfi",
    "sequential_bound",
]
