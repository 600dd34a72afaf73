"""Streaming exploit-chain detection over instruction-call traces."""

from .encoder import FeatureEncoder, VECTOR_DIM
from .engine import EngineConfig, detect, detect_naive
from .fingerprints import FingerprintDb, WhiteList, load_fingerprints
from .mlp import MlpModel, init_model, load_model, save_model, train
from .monitor import StateTable
from .trace import InstructionCall, Trace, read_trace

__version__ = "0.1.0"

__all__ = [
    "FeatureEncoder",
    "VECTOR_DIM",
    "EngineConfig",
    "detect",
    "detect_naive",
    "FingerprintDb",
    "WhiteList",
    "load_fingerprints",
    "MlpModel",
    "init_model",
    "load_model",
    "save_model",
    "train",
    "StateTable",
    "InstructionCall",
    "Trace",
    "read_trace",
]
