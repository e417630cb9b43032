"""Round loop of hybrid federated learning, its FL/FD degenerations and the DoF ablation.

Every random draw comes from a generator keyed by ``(seed, purpose, round[, ue])``
so any round can be replayed in isolation and arms of an ablation that share
a seed see the same channels and noise.
"""

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .channel import Q_MODES, db_to_linear, noise_enhancement, sample_channel, uplink_transmit, zf_detect
from .data import DataSpec, load_dataset
from .errors import ConfigError, HFLError, RoundError
from .fusion import (
    FusionConfig,
    UpdateDirections,
    aggregate_gradients,
    aggregate_logits,
    hybrid_update,
    select_weight_newton,
)
from .grouping import assign_groups, uniform_assignment
from .link_codec import decode_uplink, encode_uplink, pad_and_frame
from .nn_core import (
    Architecture,
    ExampleBatch,
    ModelParams,
    ce_gradient,
    evaluate_accuracy,
    forward_logits,
    init_model,
    kd_gradient,
    sgd_step,
)

SCHEMES = ("HFL", "FL", "FD")
CLUSTER_MODES = ("forward", "reverse", "all_fl", "all_fd")

# stream purposes
_INIT, _PARTITION, _CHANNEL, _NOISE, _LOCAL, _PUBLIC = range(6)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass
class ExperimentConfig:
    N: int = 30
    K: int = 30
    snr_db: float = -20.0
    rounds: int = 100
    scheme: str = "HFL"
    clus_mode: str = "forward"
    q_mode: str = "diagonal"
    seed: int = 0
    arch: Architecture = field(default_factory=lambda: Architecture((64, 32, 10)))
    data: DataSpec = field(default_factory=DataSpec)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    local_batch: int = 32  # |D_k^(t)|, examples each UE samples per round
    local_epochs: int = 1  # full-batch SGD passes of logit UEs over D_k^(t)
    public_batch: int = 100  # public examples drawn per round for logits and fusion
    noiseless: bool = False  # drop uplink noise (channel and ZF still applied)
    record_timing: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("must be >= 1", field="K")
        if self.N < self.K:
            raise ConfigError(f"zero-forcing needs N >= K (N={self.N}, K={self.K})", field="N")
        if self.rounds < 1:
            raise ConfigError("must be >= 1", field="rounds")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"expected one of {SCHEMES}", field="scheme")
        if self.clus_mode not in CLUSTER_MODES:
            raise ConfigError(f"expected one of {CLUSTER_MODES}", field="clus_mode")
        if self.q_mode not in Q_MODES:
            raise ConfigError(f"expected one of {Q_MODES}", field="q_mode")
        for name in ("local_batch", "local_epochs", "public_batch"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", field=name)
        if self.arch.input_dim != self.data.feature_dim:
            raise ConfigError(
                f"input layer {self.arch.input_dim} does not match data dimension {self.data.feature_dim}",
                field="arch",
            )
        if self.data.source == "synthetic" and self.arch.n_classes != self.data.n_classes:
            raise ConfigError("output layer must equal the number of classes", field="arch")

    @property
    def rho(self) -> float:
        return db_to_linear(self.snr_db)

    @property
    def weight_mode(self) -> str:
        return self.fusion.weight_mode

    def effective(self) -> "ExperimentConfig":
        """Resolve the FL/FD baselines into their HFL degenerations."""
        if self.scheme == "FL":
            fusion = dataclasses.replace(self.fusion, weight_mode="fixed", fixed_alpha=1.0)
            return dataclasses.replace(self, clus_mode="all_fl", fusion=fusion)
        if self.scheme == "FD":
            fusion = dataclasses.replace(self.fusion, weight_mode="fixed", fixed_alpha=0.0)
            return dataclasses.replace(self, clus_mode="all_fd", fusion=fusion)
        return self


@dataclass
class FederationState:
    theta: ModelParams
    shards: List[ExampleBatch]
    public: ExampleBatch
    test: ExampleBatch
    t: int = 0


@dataclass
class RoundMetrics:
    round: int
    accuracy: float
    alpha: float
    k1: int
    mean_q_fl: Optional[float]
    mean_q_fd: Optional[float]
    wall_ms: float


def partition_dataset(data: ExampleBatch, K: int, public_size: int, test_size: int, seed: int):
    """IID split into ``K`` equal private shards plus a public and a test set.

    Returns ``(shards, public, test)``; leftover examples are dropped.
    """
    n = len(data)
    per_ue = (n - public_size - test_size) // K
    if per_ue < 1:
        raise ConfigError(
            f"{n} examples cannot fill {K} shards plus {public_size} public and {test_size} test",
            field="data",
        )
    order = stream(seed, _PARTITION).permutation(n)
    test = data.subset(order[:test_size])
    public = data.subset(order[test_size:test_size + public_size])
    start = test_size + public_size
    shards = [data.subset(order[start + k * per_ue:start + (k + 1) * per_ue]) for k in range(K)]
    return shards, public, test


def build_state(cfg: ExperimentConfig, dataset: Optional[ExampleBatch] = None) -> FederationState:
    if dataset is None:
        dataset = load_dataset(cfg.data)
    shards, public, test = partition_dataset(
        dataset, cfg.K, cfg.data.public_size, cfg.data.test_size, cfg.seed
    )
    theta = init_model(cfg.arch, int(stream(cfg.seed, _INIT).integers(2**63)))
    return FederationState(theta, shards, public, test, 0)


def _draw(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    if size >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=size, replace=False))


def _local_training(theta: ModelParams, batch: ExampleBatch, cfg: ExperimentConfig) -> ModelParams:
    model = theta
    for _ in range(cfg.local_epochs):
        model = sgd_step(model, ce_gradient(model, batch), cfg.fusion.local_rate)
    return model


def _groups(cfg: ExperimentConfig, quality):
    if cfg.clus_mode == "all_fl":
        return uniform_assignment(cfg.K, 0)
    if cfg.clus_mode == "all_fd":
        return uniform_assignment(cfg.K, 1)
    return assign_groups(quality, cfg.clus_mode)


def run_round(state: FederationState, cfg: ExperimentConfig) -> Tuple[FederationState, RoundMetrics]:
    """Execute round ``state.t`` and return the advanced state with its metrics."""
    try:
        return _run_round(state, cfg.effective())
    except HFLError as exc:
        raise RoundError(state.t, exc) from exc


def _run_round(state: FederationState, cfg: ExperimentConfig):
    started = time.perf_counter()
    t, seed, theta = state.t, cfg.seed, state.theta
    rho = cfg.rho

    H = sample_channel(cfg.N, cfg.K, stream(seed, _CHANNEL, t))
    quality = noise_enhancement(H, rho, cfg.q_mode)
    groups = _groups(cfg, quality)

    pub = state.public.subset(_draw(stream(seed, _PUBLIC, t), len(state.public), cfg.public_batch))

    payloads = []
    for k in range(cfg.K):
        shard = state.shards[k]
        batch = shard.subset(_draw(stream(seed, _LOCAL, t, k), len(shard), cfg.local_batch))
        if groups.indicators[k] == 0:
            payload = encode_uplink(ce_gradient(theta, batch), "gradient")
        else:
            local = _local_training(theta, batch, cfg)
            payload = encode_uplink(forward_logits(local, pub).ravel(), "logit")
        payloads.append((payload, len(batch)))

    frame = pad_and_frame([p for p, _ in payloads])
    Y = uplink_transmit(frame, H, rho, stream(seed, _NOISE, t), noiseless=cfg.noiseless)
    X_hat = zf_detect(Y, H, rho)
    recovered = [(decode_uplink(X_hat[k], sb), n) for k, (sb, (_, n)) in
                 enumerate(zip(frame.sidebands, payloads))]

    fl, fd = groups.fl_users, groups.fd_users
    g_hat = aggregate_gradients([recovered[k] for k in fl]) if fl.size else None
    z_hat = aggregate_logits([recovered[k] for k in fd]) if fd.size else None

    kd_grad = kd_gradient(theta, pub, z_hat, cfg.fusion.tau) if z_hat is not None else None
    if g_hat is None:
        alpha = 0.0
    elif z_hat is None:
        alpha = 1.0
    elif cfg.fusion.weight_mode == "fixed":
        alpha = cfg.fusion.fixed_alpha
    else:
        dirs = UpdateDirections(-cfg.fusion.eta1 * g_hat, -cfg.fusion.eta2 * kd_grad)
        alpha, _ = select_weight_newton(theta, dirs, pub, cfg.fusion)

    new_theta = hybrid_update(theta, g_hat, z_hat, alpha, pub, cfg.fusion, kd_grad=kd_grad)
    accuracy = evaluate_accuracy(new_theta, state.test)

    metrics = RoundMetrics(
        round=t,
        accuracy=accuracy,
        alpha=float(alpha),
        k1=groups.K1,
        mean_q_fl=float(quality.q[fl].mean()) if fl.size else None,
        mean_q_fd=float(quality.q[fd].mean()) if fd.size else None,
        wall_ms=(time.perf_counter() - started) * 1e3 if cfg.record_timing else 0.0,
    )
    return dataclasses.replace(state, theta=new_theta, t=t + 1), metrics


def run_experiment(cfg: ExperimentConfig, dataset: Optional[ExampleBatch] = None,
                   return_state: bool = False):
    """Run ``cfg.rounds`` rounds from a fresh state; returns the per-round metrics."""
    state = build_state(cfg, dataset)
    history = []
    for _ in range(cfg.rounds):
        state, metrics = run_round(state, cfg)
        history.append(metrics)
    return (history, state) if return_state else history


ABLATION_ARMS = (
    ("clus-forward", "weight-opt"),
    ("clus-forward", "weight-fix"),
    ("clus-reverse", "weight-opt"),
    ("clus-reverse", "weight-fix"),
)


def ablation_config(base: ExperimentConfig, clus: str, weight: str) -> ExperimentConfig:
    if weight == "weight-opt":
        fusion = dataclasses.replace(base.fusion, weight_mode="optimized")
    else:
        fusion = dataclasses.replace(base.fusion, weight_mode="fixed", fixed_alpha=0.5)
    return dataclasses.replace(base, clus_mode=clus.split("-", 1)[1], fusion=fusion)


def run_ablation(base: ExperimentConfig, dataset: Optional[ExampleBatch] = None
                 ) -> Dict[Tuple[str, str], List[RoundMetrics]]:
    """Forward/reverse clustering x optimized/fixed weight, all on the same seed."""
    if base.scheme != "HFL":
        raise ConfigError("ablation needs scheme = HFL", field="scheme")
    if dataset is None:
        dataset = load_dataset(base.data)
    return {arm: run_experiment(ablation_config(base, *arm), dataset) for arm in ABLATION_ARMS}


def sweep_configs(base: ExperimentConfig, snrs_db, include_noiseless: bool = False):
    """``((snr_label, scheme), cfg)`` for FL, FD and HFL at each SNR."""
    settings = [(f"{float(s):g}dB", dataclasses.replace(base, snr_db=float(s))) for s in snrs_db]
    if include_noiseless:
        settings.append(("noiseless", dataclasses.replace(base, noiseless=True)))
    return [((label, scheme), dataclasses.replace(cfg, scheme=scheme))
            for label, cfg in settings for scheme in SCHEMES]


def run_sweep(base: ExperimentConfig, snrs_db, include_noiseless: bool = False,
              dataset: Optional[ExampleBatch] = None):
    """FL, FD and HFL at each SNR; keys are ``(snr_label, scheme)``."""
    if dataset is None:
        dataset = load_dataset(base.data)
    return {key: run_experiment(cfg, dataset)
            for key, cfg in sweep_configs(base, snrs_db, include_noiseless)}
