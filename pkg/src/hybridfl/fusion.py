"""Base-station fusion of FL (gradient) and FD (logit) uplink payloads.

The global step is the convex combination

    theta' = theta - alpha * eta1 * g_hat - (1 - alpha) * eta2 * grad Q(theta; z_hat)

with ``alpha = sigmoid(s)`` chosen per round by a damped Newton search on
the public-set cross-entropy, or held fixed.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ContractError, EmptyGroupError, ShapeError
from .nn_core import ExampleBatch, ModelParams, ce_loss, kd_gradient

WEIGHT_MODES = ("optimized", "fixed")

FD_STEP = 1e-3  # central-difference step in s
CURVATURE_FLOOR = 1e-8
S_LIMIT = 10.0
MAX_HALVINGS = 30
MAX_STEP = 1.0  # trust radius for one update of s


@dataclass
class FusionConfig:
    eta1: float = 0.01
    eta2: float = 0.01
    eta3: float = 0.1
    tau: float = 2.0
    newton_epochs: int = 30
    weight_mode: str = "optimized"
    fixed_alpha: float = 0.5
    fd_step: Optional[float] = None  # FD-UE local SGD rate; None means eta1

    def __post_init__(self):
        for name in ("eta1", "eta2", "eta3", "tau"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be positive, got {getattr(self, name)}", field=name)
        if self.newton_epochs < 1:
            raise ConfigError("must be >= 1", field="newton_epochs")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"expected one of {WEIGHT_MODES}", field="weight_mode")
        if not 0.0 <= self.fixed_alpha <= 1.0:
            raise ConfigError("must lie in [0, 1]", field="fixed_alpha")
        if self.fd_step is not None and self.fd_step < 0:
            raise ConfigError("must be non-negative", field="fd_step")

    @property
    def local_rate(self) -> float:
        return self.eta1 if self.fd_step is None else self.fd_step


@dataclass
class UpdateDirections:
    d_fl: np.ndarray
    d_fd: np.ndarray


def sigmoid(s):
    return 1.0 / (1.0 + np.exp(-s))


def aggregation_weights(sizes: Sequence[float]) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.size == 0:
        raise EmptyGroupError("no payloads to aggregate")
    if np.any(sizes <= 0):
        raise ContractError("dataset sizes must be positive")
    return sizes / sizes.sum()


def _weighted_mean(items) -> np.ndarray:
    items = list(items)
    if not items:
        raise EmptyGroupError("no payloads to aggregate")
    vectors = [np.asarray(v, dtype=np.float64).ravel() for v, _ in items]
    if len({v.size for v in vectors}) != 1:
        raise ShapeError("payloads differ in length")
    w = aggregation_weights([n for _, n in items])
    out = np.zeros_like(vectors[0])
    for wk, v in zip(w, vectors):  # fixed UE order keeps the reduction deterministic
        out += wk * v
    return out


def aggregate_gradients(grads) -> np.ndarray:
    """Dataset-size weighted mean of ``(gradient, size)`` pairs."""
    return _weighted_mean(grads)


def aggregate_logits(logits) -> np.ndarray:
    """Dataset-size weighted mean of ``(logit block, size)`` pairs, flattened."""
    return _weighted_mean(logits)


def update_directions(theta: ModelParams, g_hat, z_hat, public_batch: ExampleBatch,
                      cfg: FusionConfig) -> UpdateDirections:
    """FL direction ``-eta1 g_hat`` and FD direction ``-eta2 grad Q``; zero when a group is empty."""
    zero = np.zeros_like(theta.values)
    d_fl = zero if g_hat is None else -cfg.eta1 * np.asarray(g_hat, dtype=np.float64)
    if z_hat is None:
        d_fd = zero.copy()
    else:
        d_fd = -cfg.eta2 * kd_gradient(theta, public_batch, z_hat, cfg.tau)
    return UpdateDirections(d_fl, d_fd)


def newton_weight_search(loss_of_alpha: Callable[[float], float], eta3: float = 0.1,
                         epochs: int = 30, h: float = FD_STEP) -> Tuple[float, float]:
    """Damped Newton on ``L(s) = loss_of_alpha(sigmoid(s))`` from ``s = 0``.

    Derivatives are central differences with step ``h``. Where the curvature
    estimate is at or below ``CURVATURE_FLOOR`` a plain damped gradient step
    is taken instead. Steps are capped at ``MAX_STEP`` in ``s``; a step that
    would raise the loss (or make it non-finite) is halved until it does
    not, up to ``MAX_HALVINGS`` times, and dropped otherwise. ``s`` stays in
    ``[-S_LIMIT, S_LIMIT]``.
    Returns ``(alpha, s)``.
    """
    def L(s):
        return float(loss_of_alpha(float(sigmoid(s))))

    s = 0.0
    l0 = L(s)
    if not np.isfinite(l0):
        return 0.5, 0.0
    for _ in range(epochs):
        lm, lp = L(s - h), L(s + h)
        if not (np.isfinite(lm) and np.isfinite(lp)):
            break
        d1 = (lp - lm) / (2.0 * h)
        d2 = (lp - 2.0 * l0 + lm) / (h * h)
        step = float(np.clip(eta3 * (d1 / d2 if d2 > CURVATURE_FLOOR else d1), -MAX_STEP, MAX_STEP))
        for _ in range(MAX_HALVINGS):
            trial = float(np.clip(s - step, -S_LIMIT, S_LIMIT))
            l_trial = L(trial)
            if np.isfinite(l_trial) and l_trial <= l0:
                s, l0 = trial, l_trial
                break
            step *= 0.5
    return float(sigmoid(s)), s


def select_weight_newton(theta: ModelParams, dirs: UpdateDirections, public_batch: ExampleBatch,
                         cfg: FusionConfig) -> Tuple[float, float]:
    """Pick the FL/FD mixing weight minimizing public-set CE after the step."""
    if len(public_batch) == 0:
        raise ContractError("public batch is empty")
    base = theta.values + dirs.d_fd
    delta = dirs.d_fl - dirs.d_fd

    def loss(alpha):
        return ce_loss(ModelParams(base + alpha * delta, theta.arch), public_batch)

    return newton_weight_search(loss, cfg.eta3, cfg.newton_epochs)


def hybrid_update(theta: ModelParams, g_hat, z_hat, alpha: float, public_batch: ExampleBatch,
                  cfg: FusionConfig, kd_grad: Optional[np.ndarray] = None) -> ModelParams:
    """Apply the convex-combination global step.

    ``g_hat=None`` (no FL users) requires ``alpha == 0``; ``z_hat=None`` (no FD
    users) requires ``alpha == 1``. ``kd_grad`` may carry a precomputed
    ``grad Q`` at ``theta``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha={alpha} outside [0, 1]")
    if g_hat is None and alpha > 0:
        raise ContractError("empty FL group needs alpha = 0")
    if z_hat is None and alpha < 1:
        raise ContractError("empty FD group needs alpha = 1")
    values = theta.values.copy()
    if g_hat is not None:
        g_hat = np.asarray(g_hat, dtype=np.float64)
        if g_hat.shape != values.shape:
            raise ShapeError("aggregated gradient does not match the model")
        values = values - alpha * cfg.eta1 * g_hat
    if z_hat is not None:
        if kd_grad is None:
            kd_grad = kd_gradient(theta, public_batch, z_hat, cfg.tau)
        values = values - (1.0 - alpha) * cfg.eta2 * kd_grad
    return ModelParams(values, theta.arch)
