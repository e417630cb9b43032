"""TOML experiment configuration and named presets.

A config file holds top-level experiment keys plus optional ``[fusion]`` and
``[data]`` tables::

    preset = "desk"          # optional starting point, see PRESETS
    N = 8
    K = 8
    snr_db = -15
    arch = [64, 32, 10]

    [fusion]
    eta1 = 0.02

    [data]
    class_sep = 6.0

Keys missing from both the file and the preset take the built-in defaults,
which carry the reference hyperparameters (eta1 = eta2 = 0.01, eta3 = 0.1,
tau = 2, 30 Newton epochs).
"""

import copy
import dataclasses
import sys
from pathlib import Path
from typing import Any, Dict, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import DataSpec
from .errors import ConfigError
from .fusion import FusionConfig
from .nn_core import Architecture
from .orchestrator import ExperimentConfig

_TOP_KEYS = {
    "preset", "N", "K", "snr_db", "rounds", "scheme", "clus_mode", "q_mode", "seed",
    "arch", "activation", "local_batch", "local_epochs", "public_batch", "noiseless",
    "record_timing", "fusion", "data",
}
_FUSION_KEYS = {f.name for f in dataclasses.fields(FusionConfig)}
_DATA_KEYS = {f.name for f in dataclasses.fields(DataSpec)}

# Desk scale: 8x8 MIMO on 6000 synthetic samples. C * public_batch equals the
# parameter count (10 * 241 = 2410), so gradient and logit frames have the
# same length as in the full-scale setting.
DESK = {
    "N": 8,
    "K": 8,
    "snr_db": -20.0,
    "rounds": 100,
    "arch": [64, 32, 10],
    "local_batch": 128,
    "public_batch": 241,
    "fusion": {"eta1": 0.02, "eta2": 1.0, "fd_step": 0.5},
    "data": {"source": "synthetic", "n_samples": 6000, "class_sep": 6.0, "input_dim": 64},
}

# Full scale on MNIST. [784, 100, 10] has 79510 parameters = 10 * 7951.
# The IDX paths must be supplied in the [data] table.
FULL = {
    "N": 30,
    "K": 30,
    "snr_db": -20.0,
    "rounds": 100,
    "arch": [784, 100, 10],
    "local_batch": 64,
    "public_batch": 7951,
    "data": {"source": "idx", "public_size": 7951, "test_size": 10000},
}

PRESETS = {"desk": DESK, "full": FULL}


def _unknown_keys(raw: Dict[str, Any]):
    unknown = sorted(set(raw) - _TOP_KEYS)
    for name, allowed in (("fusion", _FUSION_KEYS), ("data", _DATA_KEYS)):
        table = raw.get(name, {})
        if not isinstance(table, dict):
            raise ConfigError("must be a table", field=name)
        unknown += [f"{name}.{k}" for k in sorted(set(table) - allowed)]
    return unknown


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = copy.deepcopy(value)
    return out


def config_from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """Build a validated config from a parsed mapping (file layout)."""
    unknown = _unknown_keys(raw)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", field="config")

    preset = raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"expected one of {sorted(PRESETS)}", field="preset")
        raw = _merge(PRESETS[preset], {k: v for k, v in raw.items() if k != "preset"})

    top = {k: v for k, v in raw.items() if k not in ("preset", "fusion", "data", "arch", "activation")}
    try:
        fusion = FusionConfig(**raw.get("fusion", {}))
        data = DataSpec(**raw.get("data", {}))
        kwargs = dict(top, fusion=fusion, data=data)
        if "arch" in raw or "activation" in raw:
            default = ExperimentConfig.__dataclass_fields__["arch"].default_factory()
            kwargs["arch"] = Architecture(
                tuple(raw.get("arch", default.layer_sizes)), raw.get("activation", default.activation)
            )
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc), field="config") from exc


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Parse a TOML config file; ``overrides`` are merged on top of the file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", field="config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", field="config") from exc
    return config_from_dict(_merge(raw, overrides or {}))


def preset_config(name: str, **overrides) -> ExperimentConfig:
    return config_from_dict(_merge({"preset": name}, overrides))


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Inverse of :func:`config_from_dict`, for echoing a run's settings."""
    out = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)
           if f.name not in ("arch", "fusion", "data")}
    out["arch"] = list(cfg.arch.layer_sizes)
    out["activation"] = cfg.arch.activation
    out["fusion"] = dataclasses.asdict(cfg.fusion)
    data = dataclasses.asdict(cfg.data)
    if data["means"] is not None:
        data["means"] = [list(map(float, row)) for row in data["means"]]
    out["data"] = data
    return out
