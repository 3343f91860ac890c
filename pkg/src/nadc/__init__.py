"""Behavioral simulator for a level-shifted Hopfield neural ADC."""

from .core import (ActivationSpec, CodeWord, NetworkSpec, activation, activation_inverse, energy,
                   ideal_code, synth_normalized, synth_scaled)
from .dynamics import NeuronState, SettleOptions, SettleResult, default_options, settle, settle_batch
from .array import QuantizerArraySpec, RawCode, TransferTable, calibrate_refs, default_array, quantize, sweep
from .encoder import EncoderDataset, MlpEncoder, TrainConfig, encode, init_mlp, train
from .energy_lab import count_multi_minima, enumerate_local_minima, global_min_code
from .metrics import AdcMetrics, analyze, inl_dnl, transitions
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "ActivationSpec", "CodeWord", "NetworkSpec", "activation", "activation_inverse", "energy",
    "ideal_code", "synth_normalized", "synth_scaled",
    "NeuronState", "SettleOptions", "SettleResult", "default_options", "settle", "settle_batch",
    "QuantizerArraySpec", "RawCode", "TransferTable", "calibrate_refs", "default_array", "quantize", "sweep",
    "EncoderDataset", "MlpEncoder", "TrainConfig", "encode", "init_mlp", "train",
    "count_multi_minima", "enumerate_local_minima", "global_min_code",
    "AdcMetrics", "analyze", "inl_dnl", "transitions",
    "RunConfig", "load_config",
]
