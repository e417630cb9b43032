"""Hybrid federated learning simulator: gradient and logit uplinks over a noisy MIMO channel."""

from .config import PRESETS, load_config, preset_config
from .errors import (
    CodecError,
    ConfigError,
    ContractError,
    DetectionError,
    EmptyGroupError,
    FormatError,
    HFLError,
    RoundError,
    ShapeError,
)
from .orchestrator import ExperimentConfig, run_ablation, run_experiment, run_round, run_sweep

__version__ = "0.1.0"
