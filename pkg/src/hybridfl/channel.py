"""Rayleigh MIMO uplink with AWGN and zero-forcing detection."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DetectionError, ShapeError

MAX_CONDITION = 1e10
Q_MODES = ("diagonal", "exact")


@dataclass
class LinkQuality:
    q: np.ndarray
    rho: float
    mode: str = "diagonal"


def db_to_linear(snr_db: float) -> float:
    return float(10.0 ** (snr_db / 10.0))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) samples.

    Real and imaginary parts are drawn as interleaved pairs, so a prefix of
    the flattened output does not depend on the total size.
    """
    shape = tuple(np.atleast_1d(shape))
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def sample_channel(N: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``N x K`` i.i.d. CN(0, 1) channel, redrawing ill-conditioned ones."""
    if K < 1 or N < K:
        raise ConfigError(f"zero-forcing needs N >= K >= 1, got N={N}, K={K}", field="N")
    while True:
        H = complex_gaussian(rng, (N, K))
        if np.linalg.cond(H.conj().T @ H) <= MAX_CONDITION:
            return H


def uplink_transmit(X, H: np.ndarray, rho: float, rng=None, noiseless: bool = False) -> np.ndarray:
    """Received block ``Y = sqrt(rho) H X + n``, one column per time slot.

    ``X`` is a ``K x L`` symbol matrix or a :class:`TransmitFrame`. Noise is
    drawn slot-major (``L x N`` then transposed), so slot ``m`` sees the same
    noise vector for a given generator state whatever the frame length.
    """
    X = getattr(X, "X", X)
    if H.shape[1] != X.shape[0]:
        raise ShapeError(f"channel has {H.shape[1]} columns but frame has {X.shape[0]} rows")
    if rho <= 0:
        raise ConfigError("SNR must be positive", field="rho")
    Y = np.sqrt(np.longdouble(rho)) * (H @ X)
    if noiseless:
        return Y
    if rng is None:
        raise ConfigError("a generator is required unless noiseless=True", field="rng")
    return Y + complex_gaussian(rng, (X.shape[1], H.shape[0])).T


def zf_matrix(H: np.ndarray, rho: float) -> np.ndarray:
    """``(H^H H)^{-1} H^H / sqrt(rho)`` in extended precision.

    The float64 solve is followed by one refinement step ``W <- (2I - W H) W``
    in ``clongdouble``, which squares the left-inverse residual. This keeps
    noiseless detection exact to float64 for large payload magnitudes.
    """
    gram = H.conj().T @ H
    if np.linalg.cond(gram) > MAX_CONDITION:
        raise DetectionError("H^H H is numerically singular")
    W = np.linalg.solve(gram, H.conj().T).astype(np.clongdouble)
    residual = np.eye(H.shape[1], dtype=np.clongdouble) - W @ H.astype(np.clongdouble)
    W = W + residual @ W
    return W / np.sqrt(np.longdouble(rho))


def zf_detect(Y, H: np.ndarray, rho: float) -> np.ndarray:
    """``(H^H H)^{-1} H^H Y / sqrt(rho)``; returns the ``K x L`` symbol estimate."""
    if Y.shape[0] != H.shape[0]:
        raise ShapeError(f"received block has {Y.shape[0]} rows, channel has {H.shape[0]}")
    return zf_matrix(H, rho) @ Y


def effective_noise_covariance(H: np.ndarray, rho: float) -> np.ndarray:
    return np.linalg.inv(rho * (H.conj().T @ H))


def noise_enhancement(H: np.ndarray, rho: float, mode: str = "diagonal") -> LinkQuality:
    """Per-UE noise-enhancement factors.

    ``diagonal``: ``1 / (rho [H^H H]_kk)``. ``exact``: ``[(H^H H)^{-1}]_kk / rho``,
    the actual post-ZF noise variance of UE k. The two coincide for
    orthogonal columns.
    """
    if mode not in Q_MODES:
        raise ConfigError(f"unknown mode {mode!r}", field="q_mode")
    gram = H.conj().T @ H
    if mode == "diagonal":
        q = 1.0 / (rho * np.real(np.diag(gram)))
    else:
        q = np.real(np.diag(np.linalg.inv(gram))) / rho
    return LinkQuality(q=q, rho=rho, mode=mode)
