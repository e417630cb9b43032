"""Per-round FL/FD partition of UEs by two-class Jenks natural breaks."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .channel import LinkQuality
from .errors import ConfigError

CLUSTER_MODES = ("forward", "reverse")

# relative slack under which two splits count as tied
_TIE_RTOL = 1e-12


@dataclass
class GroupAssignment:
    indicators: np.ndarray  # 0 -> FL (gradient), 1 -> FD (logit)
    threshold: float
    K1: int

    @property
    def fl_users(self) -> np.ndarray:
        return np.flatnonzero(self.indicators == 0)

    @property
    def fd_users(self) -> np.ndarray:
        return np.flatnonzero(self.indicators == 1)


def _split_cost(values: np.ndarray, i: int) -> float:
    lo, hi = values[:i], values[i:]
    return float(((lo - lo.mean()) ** 2).sum() + ((hi - hi.mean()) ** 2).sum())


def jenks_split(values, classes: int = 2) -> Tuple[float, np.ndarray]:
    """Two-class natural breaks (1-D 2-means) on ``values``.

    Returns ``(threshold, labels)`` with ``labels[k] = 0`` iff
    ``values[k] <= threshold``; the threshold is the largest value of the
    lower class. Only splits between distinct sorted values are considered,
    so equal values always share a class. Near-equal costs are ties and go
    to the split with the smaller lower class. All-equal input puts
    everything in the lower class.
    """
    if classes != 2:
        raise ConfigError("only two classes are supported", field="classes")
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        raise ConfigError("need at least two values to split", field="values")
    s = np.sort(x)
    candidates = [i for i in range(1, s.size) if s[i - 1] < s[i]]
    if not candidates:
        return float(s[-1]), np.zeros(x.size, dtype=np.int64)
    costs = np.array([_split_cost(s, i) for i in candidates])
    slack = _TIE_RTOL * max(float(((s - s.mean()) ** 2).sum()), np.finfo(float).tiny)
    best = candidates[int(np.flatnonzero(costs <= costs.min() + slack)[0])]
    threshold = float(s[best - 1])
    return threshold, (x > threshold).astype(np.int64)


def assign_groups(quality: LinkQuality, mode: str = "forward") -> GroupAssignment:
    """Forward: low noise enhancement sends gradients. Reverse: the opposite."""
    if mode not in CLUSTER_MODES:
        raise ConfigError(f"unknown clustering mode {mode!r}", field="clus_mode")
    threshold, labels = jenks_split(quality.q)
    indicators = labels if mode == "forward" else 1 - labels
    return GroupAssignment(indicators, threshold, int(np.sum(indicators == 0)))


def uniform_assignment(K: int, indicator: int) -> GroupAssignment:
    """Everyone in one group (FL for ``indicator=0``, FD for ``1``)."""
    indicators = np.full(K, indicator, dtype=np.int64)
    return GroupAssignment(indicators, float("nan"), int(np.sum(indicators == 0)))
