"""Depthwise-separable CNN backbone: architecture, weights, and weight file IO.

The architecture is the classic 224 x 224 x 3 mobile stack: a 3x3 stride-2
convolution, thirteen depthwise-separable blocks (depthwise 3x3 + pointwise
1x1, each followed by inference-mode batch normalization and ReLU6), global
average pooling, and a dense softmax head. A width multiplier in (0, 1]
thins every channel count to max(1, round(alpha * c)) so the whole test
suite can run in seconds at alpha=0.25, 32x32.

Weight container ("MBWT"), little-endian:

    magic   4 bytes  b"MBWT"
    version u32      1
    count   u32      number of tensors
    then per tensor:
        name_len u16
        name     UTF-8 bytes
        ndim     u8
        dims     u32 * ndim
        data     float32 * prod(dims), row-major

Tensors are written in sorted-name order so files are byte-reproducible.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .layers import (
    BatchNormInference,
    Conv2D,
    Dense,
    DepthwiseConv2D,
    GlobalAvgPool,
    LayerChain,
    ReLU6,
)

MAGIC = b"MBWT"
FORMAT_VERSION = 1
BN_EPSILON = 1e-3

# (stride of the depthwise conv, pointwise output channels) per block
_BLOCK_TABLE = [
    (1, 64),
    (2, 128),
    (1, 128),
    (2, 256),
    (1, 256),
    (2, 512),
    (1, 512),
    (1, 512),
    (1, 512),
    (1, 512),
    (1, 512),
    (2, 1024),
    (1, 1024),
]
_STEM_CHANNELS = 32


class WeightFormatError(ValueError):
    """Base class for weight container problems."""


class BadMagicError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass


class ShapeTableMismatchError(WeightFormatError):
    pass


def scaled_channels(base: int, width_multiplier: float) -> int:
    """Thin a channel count: max(1, round-half-up(alpha * c))."""
    return max(1, int(np.floor(width_multiplier * base + 0.5)))


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; the layer list is derived, not stored."""

    input_size: int = 224
    input_channels: int = 3
    width_multiplier: float = 1.0
    num_classes: int = 7

    def __post_init__(self):
        if self.input_size < 1:
            raise ValueError(f"input_size must be >= 1, got {self.input_size}")
        if not 0 < self.width_multiplier <= 1:
            raise ValueError(f"width_multiplier must be in (0, 1], got {self.width_multiplier}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.input_channels != 3:
            raise ValueError("input_channels is fixed at 3 (RGB)")

    @property
    def feature_dim(self) -> int:
        """Length of the pooled feature vector feeding the head."""
        return scaled_channels(_BLOCK_TABLE[-1][1], self.width_multiplier)

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "input_channels": self.input_channels,
            "width_multiplier": self.width_multiplier,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class WeightStore:
    """Named-parameter container; values are float32 numpy arrays."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        return sorted(self.entries)

    def equals(self, other: "WeightStore") -> bool:
        if self.names() != other.names():
            return False
        return all(
            np.array_equal(self.entries[k], other.entries[k], equal_nan=True)
            for k in self.entries
        )


@dataclass(frozen=True)
class BundleStats:
    """On-disk size and measured wall-clock load time of a weight file."""

    weight_size_bytes: int
    load_time_seconds: float


def _conv_names(prefix: str, folded: bool) -> list[str]:
    if folded:
        return [f"{prefix}/kernel", f"{prefix}/bias"]
    return [
        f"{prefix}/kernel",
        f"{prefix}/bn/gamma",
        f"{prefix}/bn/beta",
        f"{prefix}/bn/mean",
        f"{prefix}/bn/variance",
    ]


def param_shapes(spec: ModelSpec, folded: bool = False) -> dict[str, tuple[int, ...]]:
    """Exact parameter shape table demanded by a spec.

    ``folded`` describes inference-optimized weights where batchnorm has been
    absorbed into the convolutions (kernel + bias per conv, no bn tensors).
    """
    alpha = spec.width_multiplier
    shapes: dict[str, tuple[int, ...]] = {}

    def add_conv(prefix, kh, kw, c_in, c_out, depthwise=False):
        kshape = (kh, kw, c_in, 1) if depthwise else (kh, kw, c_in, c_out)
        names = _conv_names(prefix, folded)
        shapes[names[0]] = kshape
        for name in names[1:]:
            shapes[name] = (c_out,)

    c = scaled_channels(_STEM_CHANNELS, alpha)
    add_conv("conv1", 3, 3, spec.input_channels, c)
    for idx, (stride, out_base) in enumerate(_BLOCK_TABLE, start=1):
        out = scaled_channels(out_base, alpha)
        add_conv(f"block{idx:02d}/dw", 3, 3, c, c, depthwise=True)
        add_conv(f"block{idx:02d}/pw", 1, 1, c, out)
        c = out
    shapes["head/weights"] = (c, spec.num_classes)
    shapes["head/bias"] = (spec.num_classes,)
    return shapes


def validate_store(store: WeightStore, spec: ModelSpec, folded: bool = False) -> None:
    """Check the store holds exactly the parameters the model spec demands."""
    expected = param_shapes(spec, folded)
    missing = sorted(set(expected) - set(store.entries))
    extra = sorted(set(store.entries) - set(expected))
    if missing or extra:
        raise ShapeTableMismatchError(
            f"weight store does not match model spec: missing={missing}, unexpected={extra}"
        )
    for name, shape in expected.items():
        got = tuple(store.entries[name].shape)
        if got != shape:
            raise ShapeTableMismatchError(f"tensor {name!r} has shape {got}, expected {shape}")


def init_weights(spec: ModelSpec, seed: int) -> WeightStore:
    """Seeded random weights: scaled-uniform conv/dense kernels
    (bound = sqrt(6 / (fan_in + fan_out))), identity batchnorm."""
    rng = np.random.default_rng(seed)
    entries: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(spec, folded=False).items():
        if name.endswith("/kernel"):
            kh, kw, a, b = shape
            if b == 1 and name.endswith("dw/kernel"):
                fan_in = fan_out = kh * kw
            else:
                fan_in, fan_out = kh * kw * a, kh * kw * b
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            entries[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        elif name == "head/weights":
            f, k = shape
            bound = np.sqrt(6.0 / (f + k))
            entries[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        elif name.endswith("/gamma") or name.endswith("/variance"):
            entries[name] = np.ones(shape, dtype=np.float32)
        else:  # beta, mean, biases
            entries[name] = np.zeros(shape, dtype=np.float32)
    return WeightStore(entries)


def build_model(spec: ModelSpec, store: WeightStore, folded: bool = False) -> LayerChain:
    """Assemble the layer chain from a validated store.

    Every backbone layer is frozen; only the dense head is trainable.
    """
    validate_store(store, spec, folded)

    def conv_layers(prefix, stride, depthwise=False):
        cls = DepthwiseConv2D if depthwise else Conv2D
        kernel = store[f"{prefix}/kernel"]
        if folded:
            conv = cls(prefix, kernel, stride=stride, padding="same", bias=store[f"{prefix}/bias"])
            return [conv, ReLU6(f"{prefix}/relu")]
        conv = cls(prefix, kernel, stride=stride, padding="same")
        bn = BatchNormInference(
            f"{prefix}/bn",
            store[f"{prefix}/bn/gamma"],
            store[f"{prefix}/bn/beta"],
            store[f"{prefix}/bn/mean"],
            store[f"{prefix}/bn/variance"],
            epsilon=BN_EPSILON,
        )
        return [conv, bn, ReLU6(f"{prefix}/relu")]

    chain: list = conv_layers("conv1", stride=2)
    for idx, (stride, _) in enumerate(_BLOCK_TABLE, start=1):
        chain += conv_layers(f"block{idx:02d}/dw", stride, depthwise=True)
        chain += conv_layers(f"block{idx:02d}/pw", stride=1)
    chain.append(GlobalAvgPool("pool"))
    chain.append(Dense("head", store["head/weights"], store["head/bias"], trainable=True))
    return LayerChain(chain)


def _check_batch(spec: ModelSpec, batch: np.ndarray) -> np.ndarray:
    batch = ops.as_tensor(batch)
    expected = (spec.input_size, spec.input_size, spec.input_channels)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ops.ShapeError(f"batch shape {batch.shape} != (N, {expected[0]}, {expected[1]}, {expected[2]})")
    return batch


def extract_features(store: WeightStore, spec: ModelSpec, batch: np.ndarray,
                     folded: bool = False) -> np.ndarray:
    """Frozen-stack output at the pooling layer: N x H x W x C -> N x F."""
    batch = _check_batch(spec, batch)
    chain = build_model(spec, store, folded)
    features = batch
    for layer in chain.layers:
        if isinstance(layer, Dense):
            break
        features = layer.forward(features)
    return features


def predict_probs(store: WeightStore, spec: ModelSpec, batch: np.ndarray,
                  folded: bool = False) -> np.ndarray:
    """Full forward pass to softmax class probabilities, N x K."""
    batch = _check_batch(spec, batch)
    chain = build_model(spec, store, folded)
    return ops.softmax(chain.forward(batch))


def save_weights(store: WeightStore, path) -> int:
    """Write the MBWT container; returns bytes written. Empty stores are rejected."""
    if not store.entries:
        raise ValueError("refusing to save an empty weight store")
    blob = weights_to_bytes(store)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def weights_to_bytes(store: WeightStore) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(store.entries))]
    for name in store.names():
        tensor = np.ascontiguousarray(store.entries[name], dtype=np.float32)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(tensor.astype("<f4").tobytes())
    return b"".join(parts)


def weights_from_bytes(blob: bytes, offset: int = 0) -> tuple[WeightStore, int]:
    """Parse an MBWT blob starting at ``offset``; returns (store, end offset)."""
    view = memoryview(blob)

    def take(n: int, what: str) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise TruncatedFileError(f"file truncated while reading {what}")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise BadMagicError("not a MBWT weight file (bad magic bytes)")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != FORMAT_VERSION:
        raise WeightFormatError(f"unsupported weight format version {version}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(name_len, "name")).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, "ndim"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, "dims"))
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(take(4 * size, f"tensor {name!r} data"), dtype="<f4")
        entries[name] = data.reshape(dims).astype(np.float32)
    return WeightStore(entries), offset


def load_weights(path, expected_spec: ModelSpec | None = None,
                 folded: bool = False) -> tuple[WeightStore, BundleStats]:
    """Read an MBWT file; returns the store plus measured size/load-time stats.

    When ``expected_spec`` is given the store is validated against its shape
    table and a mismatch raises ShapeTableMismatchError.
    """
    start = time.perf_counter()
    with open(path, "rb") as fh:
        blob = fh.read()
    store, end = weights_from_bytes(blob)
    if end != len(blob):
        raise WeightFormatError(f"{len(blob) - end} trailing bytes after tensor data")
    elapsed = time.perf_counter() - start
    if expected_spec is not None:
        validate_store(store, expected_spec, folded)
    return store, BundleStats(weight_size_bytes=len(blob), load_time_seconds=elapsed)
