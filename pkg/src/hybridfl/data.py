"""Dataset sources: MNIST-style IDX files and a Gaussian-cluster generator."""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, FormatError
from .nn_core import ExampleBatch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DATA_SOURCES = ("synthetic", "idx")


@dataclass
class DataSpec:
    source: str = "synthetic"
    # idx source
    image_path: Optional[str] = None
    label_path: Optional[str] = None
    subset: Optional[int] = None  # keep the first n examples
    pool: Optional[int] = None  # average-pool images down to pool x pool
    # synthetic source
    n_classes: int = 10
    input_dim: int = 64
    n_samples: int = 6000
    class_sep: float = 3.0
    noise_std: float = 1.0
    means: Optional[Sequence[Sequence[float]]] = None
    # splits
    public_size: int = 1000
    test_size: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"expected one of {DATA_SOURCES}", field="data.source")
        if self.source == "idx" and not (self.image_path and self.label_path):
            raise ConfigError("idx source needs image_path and label_path", field="data.image_path")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes", field="data.n_classes")
        for name in ("input_dim", "n_samples", "public_size", "test_size"):
            if getattr(self, name) < 1:
                raise ConfigError("must be positive", field=f"data.{name}")
        if self.noise_std <= 0:
            raise ConfigError("must be positive", field="data.noise_std")
        if self.means is not None:
            m = np.asarray(self.means, dtype=np.float64)
            if m.shape != (self.n_classes, self.input_dim):
                raise ConfigError(
                    f"means must be {self.n_classes}x{self.input_dim}, got {m.shape}",
                    field="data.means",
                )

    @property
    def feature_dim(self) -> int:
        if self.source == "idx":
            return self.pool * self.pool if self.pool else 28 * 28
        return self.input_dim


def _read_idx(path, expected_magic: int, expected_dims: int) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    header_len = 4 + 4 * expected_dims
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated dimension header", offset=len(raw))
    dims = struct.unpack(f">{expected_dims}I", raw[4:header_len])
    n_bytes = int(np.prod(dims))
    if len(raw) - header_len != n_bytes:
        raise FormatError(
            f"{path}: header declares {n_bytes} data bytes, file holds {len(raw) - header_len}",
            offset=header_len,
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_len).reshape(dims)


def load_idx_dataset(image_path, label_path) -> ExampleBatch:
    """Load an IDX image/label pair; pixels scaled to [0, 1], images flattened row-major."""
    images = _read_idx(image_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(label_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", offset=4)
    if labels.size and labels.max() > 9:
        raise FormatError(f"label {int(labels.max())} outside [0, 10)", offset=8)
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return ExampleBatch(inputs, labels.astype(np.int64))


def pool_images(inputs: np.ndarray, side: int, pool_to: int) -> np.ndarray:
    """Center-crop square images to a multiple of ``pool_to`` and average-pool."""
    block = side // pool_to
    if block < 1:
        raise ConfigError(f"cannot pool {side}x{side} images to {pool_to}", field="data.pool")
    crop = block * pool_to
    off = (side - crop) // 2
    img = inputs.reshape(-1, side, side)[:, off:off + crop, off:off + crop]
    return img.reshape(-1, pool_to, block, pool_to, block).mean(axis=(2, 4)).reshape(-1, pool_to**2)


def class_counts(n: int, n_classes: int) -> np.ndarray:
    counts = np.full(n_classes, n // n_classes)
    counts[: n % n_classes] += 1
    return counts


def gen_synthetic_dataset(spec: DataSpec, seed: Optional[int] = None) -> ExampleBatch:
    """Balanced isotropic Gaussian clusters, shuffled.

    Class means are ``spec.means`` if given, otherwise random directions of
    length ``class_sep`` (in units of ``noise_std``).
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    C, d = spec.n_classes, spec.input_dim
    if spec.means is not None:
        means = np.asarray(spec.means, dtype=np.float64)
    else:
        dirs = rng.standard_normal((C, d))
        means = spec.class_sep * spec.noise_std * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    counts = class_counts(spec.n_samples, C)
    labels = np.repeat(np.arange(C), counts)
    inputs = means[labels] + spec.noise_std * rng.standard_normal((labels.size, d))
    order = rng.permutation(labels.size)
    return ExampleBatch(inputs[order], labels[order])


def load_dataset(spec: DataSpec) -> ExampleBatch:
    if spec.source == "synthetic":
        return gen_synthetic_dataset(spec)
    data = load_idx_dataset(spec.image_path, spec.label_path)
    if spec.subset is not None:
        data = data.subset(slice(0, spec.subset))
    if spec.pool:
        side = int(round(np.sqrt(data.inputs.shape[1])))
        data = ExampleBatch(pool_images(data.inputs, side, spec.pool), data.labels)
    return data


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array in IDX format (images if 3-D, labels if 1-D)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {3: IDX_IMAGES_MAGIC, 1: IDX_LABELS_MAGIC}.get(array.ndim)
    if magic is None:
        raise FormatError(f"unsupported IDX rank {array.ndim}")
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + array.tobytes())
