"""Greedy stepwise transmit antenna selection with power control for downlink multiuser MIMO."""

__version__ = "0.1.0"

from .channel import ChannelMatrix, generate_rayleigh, load_channel, row, save_channel
from .metrics import Measure, MeasureKind, PowerModel, db_to_linear, evaluate, link_stats
from .precoders import PrecoderKind, PrecoderSpec, apply_update, precode_direct, rank_one_update
from .stepwise import AlgoConfig, SelectionResult, optimize_power, run

__all__ = [
    "ChannelMatrix",
    "generate_rayleigh",
    "load_channel",
    "save_channel",
    "row",
    "Measure",
    "MeasureKind",
    "PowerModel",
    "db_to_linear",
    "evaluate",
    "link_stats",
    "PrecoderKind",
    "PrecoderSpec",
    "precode_direct",
    "rank_one_update",
    "apply_update",
    "AlgoConfig",
    "SelectionResult",
    "optimize_power",
    "run",
]
