"""Map real payloads (gradients, logit blocks) to unit-peak complex symbols.

Chain: pair adjacent reals into complex symbols, standardize with the complex
mean and RMS deviation, divide by the peak modulus, zero-pad to the frame
length. The mean, deviation and peak travel on an error-free sideband.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import CodecError

KINDS = ("gradient", "logit")
EPS = 1e-12


@dataclass(frozen=True)
class Sideband:
    mean: complex
    deviation: float
    peak: float
    original_length: int
    kind: str

    def __post_init__(self):
        if self.deviation < 0 or self.peak < 0:
            raise CodecError("deviation and peak must be non-negative")
        if self.original_length < 1:
            raise CodecError("original_length must be >= 1")
        if self.kind not in KINDS:
            raise CodecError(f"unknown payload kind {self.kind!r}")

    @property
    def n_symbols(self) -> int:
        return (self.original_length + 1) // 2


@dataclass
class SymbolStream:
    symbols: np.ndarray
    sideband: Sideband


@dataclass
class TransmitFrame:
    X: np.ndarray
    sidebands: List[Sideband]

    @property
    def n_users(self) -> int:
        return self.X.shape[0]

    @property
    def n_slots(self) -> int:
        return self.X.shape[1]


def pair_complex(u) -> np.ndarray:
    """``out[m] = u[2m] + 1j*u[2m+1]`` (0-based); odd tails get a zero imaginary part."""
    u = np.asarray(u, dtype=np.float64).ravel()
    if u.size == 0:
        raise CodecError("cannot pair an empty payload")
    if u.size % 2:
        u = np.append(u, 0.0)
    return u[0::2] + 1j * u[1::2]


def unpair_complex(c, length: int) -> np.ndarray:
    c = np.asarray(c, dtype=np.complex128).ravel()
    if 2 * c.size < length:
        raise CodecError(f"{c.size} symbols cannot hold {length} reals")
    out = np.empty(2 * c.size)
    out[0::2] = c.real
    out[1::2] = c.imag
    return out[:length]


def _restore(x: np.ndarray, sb: Sideband) -> np.ndarray:
    scale = np.longdouble(sb.peak) * np.longdouble(sb.deviation)
    return (np.asarray(x, dtype=np.clongdouble) * scale + np.clongdouble(sb.mean)).astype(
        np.complex128
    )


def encode_uplink(u, kind: str) -> SymbolStream:
    """Pair, standardize and peak-normalize ``u`` (no padding).

    Symbols are held in extended precision so a noiseless roundtrip is exact
    to float64 even at large payload magnitudes. Constant payloads hit the
    epsilon guard: deviation and/or peak become 1 and are recorded on the
    sideband, so decoding still returns the input.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    if not np.all(np.isfinite(u)):
        raise CodecError("payload contains non-finite values")
    c = pair_complex(u)
    mu = complex(c.mean())
    dev = c.astype(np.clongdouble) - np.clongdouble(mu)
    sigma = float(np.sqrt(np.mean(np.abs(dev) ** 2)))
    if sigma < EPS:
        sigma = 1.0
    peak = float(np.max(np.abs(dev / np.longdouble(sigma))))
    if peak < EPS:
        peak = 1.0
    sb = Sideband(mean=mu, deviation=sigma, peak=peak, original_length=u.size, kind=kind)
    x = dev / (np.longdouble(peak) * np.longdouble(sigma))
    return SymbolStream(x, sb)


def pad_and_frame(streams: Sequence[SymbolStream]) -> TransmitFrame:
    """Stack streams row-wise in UE order, zero-padding at the tail to the longest."""
    if not streams:
        raise CodecError("no streams to frame")
    L = max(s.symbols.size for s in streams)
    X = np.zeros((len(streams), L), dtype=np.clongdouble)
    for k, s in enumerate(streams):
        X[k, :s.symbols.size] = s.symbols
    return TransmitFrame(X, [s.sideband for s in streams])


def decode_uplink(detected, sideband: Sideband) -> np.ndarray:
    """Invert :func:`encode_uplink` on a detected (possibly padded) symbol row."""
    detected = np.asarray(detected).ravel()
    n = sideband.n_symbols
    if detected.size < n:
        raise CodecError(f"detected stream has {detected.size} symbols, need {n}")
    return unpair_complex(_restore(detected[:n], sideband), sideband.original_length)
