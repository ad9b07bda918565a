"""Neural offset min-sum and neural sum-product decoding of short linear block codes."""

from .channel import ChannelConfig, ebn0_to_sigma2, modulate_bpsk, transmit
from .codes import AlistError, CodeError, LinearCode, bch, code_from_spec, encode, load_alist, write_alist
from .decoder import decode, hard_decision
from .evaluation import EvalConfig, compare_curves, export_histograms, run_ber
from .params import ConfigError, DecoderParams, count_parameters, load_params, save_params, tie_offsets
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AlistError",
    "ChannelConfig",
    "CodeError",
    "ConfigError",
    "DecoderParams",
    "EvalConfig",
    "LinearCode",
    "TrainConfig",
    "bch",
    "code_from_spec",
    "compare_curves",
    "count_parameters",
    "decode",
    "ebn0_to_sigma2",
    "encode",
    "export_histograms",
    "hard_decision",
    "load_alist",
    "load_params",
    "modulate_bpsk",
    "run_ber",
    "save_params",
    "tie_offsets",
    "train",
    "transmit",
    "write_alist",
    "__version__",
]
