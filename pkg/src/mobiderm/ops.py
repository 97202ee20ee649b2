"""Layer primitives for the depthwise-separable CNN, forward and backward.

Tensors are numpy ``float32`` arrays in row-major (C) order. Image batches
are laid out N x H x W x C. Values are stored in 32-bit floats; every
reduction (convolution sums, means, loss) accumulates in 64-bit and casts
back, which keeps agreement with scalar reference implementations tight.

All functions here are pure: they never mutate their inputs and are safe to
call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShapeError",
    "ConvParams",
    "BatchNormParams",
    "conv2d",
    "conv2d_backward",
    "depthwise_conv2d",
    "depthwise_conv2d_backward",
    "batchnorm_infer",
    "batchnorm_infer_backward",
    "relu6",
    "relu6_backward",
    "global_avg_pool",
    "global_avg_pool_backward",
    "dense",
    "dense_backward",
    "softmax",
    "cross_entropy",
    "softmax_cross_entropy",
    "softmax_cross_entropy_backward",
    "as_tensor",
]

PROB_FLOOR = 1e-12  # clamp for log() inside the cross-entropy


class ShapeError(ValueError):
    """Raised when tensor dimensions do not match an operation's contract."""


def as_tensor(x) -> np.ndarray:
    """Coerce to a contiguous float32 array."""
    return np.ascontiguousarray(x, dtype=np.float32)


@dataclass(frozen=True)
class ConvParams:
    """Convolution parameters.

    kernel is kh x kw x c_in x c_out for a standard convolution and
    kh x kw x c x 1 for a depthwise one. padding is "same" (zero padding,
    output H' = ceil(H / stride), odd padding goes to the bottom/right) or
    "valid" (no padding).
    """

    kernel: np.ndarray
    stride: int = 1
    padding: str = "valid"
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise ShapeError(f"kernel must be 4-d, got shape {self.kernel.shape}")
        if self.kernel.shape[0] < 1 or self.kernel.shape[1] < 1:
            raise ShapeError(f"kernel spatial dims must be >= 1, got {self.kernel.shape[:2]}")
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.padding not in ("same", "valid"):
            raise ShapeError(f"padding must be 'same' or 'valid', got {self.padding!r}")


@dataclass(frozen=True)
class BatchNormParams:
    """Per-channel inference-mode batch normalization parameters."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-3

    def __post_init__(self):
        c = self.gamma.shape
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape != c:
                raise ShapeError(f"{name} shape {getattr(self, name).shape} != gamma shape {c}")
        if self.epsilon < 0:
            raise ShapeError(f"epsilon must be >= 0, got {self.epsilon}")
        if np.any(self.running_var < 0):
            raise ShapeError("running_var entries must be >= 0")


def _pad_amount(size: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Return (pad_before, pad_after, out_size) along one spatial axis."""
    if padding == "valid":
        if size < k:
            raise ShapeError(f"input size {size} smaller than kernel {k} with 'valid' padding")
        return 0, 0, (size - k) // stride + 1
    out = -(-size // stride)  # ceil(size / stride)
    total = max((out - 1) * stride + k - size, 0)
    before = total // 2
    return before, total - before, out


def _pad_input(x: np.ndarray, kh: int, kw: int, stride: int, padding: str):
    n, h, w, c = x.shape
    ph0, ph1, out_h = _pad_amount(h, kh, stride, padding)
    pw0, pw1, out_w = _pad_amount(w, kw, stride, padding)
    if ph0 or ph1 or pw0 or pw1:
        x = np.pad(x, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))
    return x, out_h, out_w, (ph0, pw0)


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Sliding windows of a padded batch: N x H' x W' x kh x kw x C."""
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    view = view[:, :: stride, :: stride]  # N x H' x W' x C x kh x kw
    return view[:, :out_h, :out_w].transpose(0, 1, 2, 4, 5, 3)


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Standard cross-correlation over an N x H x W x Cin batch.

    Returns N x H' x W' x Cout in float32; the patch-by-kernel contraction
    runs in float64.
    """
    kh, kw, c_in, c_out = p.kernel.shape
    if x.ndim != 4:
        raise ShapeError(f"input must be N x H x W x C, got shape {x.shape}")
    if x.shape[3] != c_in:
        raise ShapeError(f"input has {x.shape[3]} channels but kernel expects {c_in}")
    if p.bias is not None and p.bias.shape != (c_out,):
        raise ShapeError(f"bias shape {p.bias.shape} != ({c_out},)")

    xp, out_h, out_w, _ = _pad_input(x, kh, kw, p.stride, p.padding)
    n = x.shape[0]
    cols = _windows(xp, kh, kw, p.stride, out_h, out_w).reshape(n * out_h * out_w, kh * kw * c_in)
    kmat = p.kernel.reshape(kh * kw * c_in, c_out)
    out = cols.astype(np.float64) @ kmat.astype(np.float64)
    if p.bias is not None:
        out += p.bias.astype(np.float64)
    return out.reshape(n, out_h, out_w, c_out).astype(np.float32)


def conv2d_backward(dy: np.ndarray, x: np.ndarray, p: ConvParams):
    """Gradients of conv2d: returns (dx, dkernel, dbias or None)."""
    kh, kw, c_in, c_out = p.kernel.shape
    xp, out_h, out_w, (ph0, pw0) = _pad_input(x, kh, kw, p.stride, p.padding)
    n, h, w, _ = x.shape
    if dy.shape != (n, out_h, out_w, c_out):
        raise ShapeError(f"dy shape {dy.shape} != expected {(n, out_h, out_w, c_out)}")

    cols = _windows(xp, kh, kw, p.stride, out_h, out_w).reshape(n * out_h * out_w, kh * kw * c_in)
    dy_mat = dy.reshape(n * out_h * out_w, c_out).astype(np.float64)

    dkernel = (cols.astype(np.float64).T @ dy_mat).reshape(kh, kw, c_in, c_out).astype(np.float32)
    dbias = dy_mat.sum(axis=0).astype(np.float32) if p.bias is not None else None

    dcols = (dy_mat @ p.kernel.reshape(kh * kw * c_in, c_out).astype(np.float64).T)
    dcols = dcols.reshape(n, out_h, out_w, kh, kw, c_in)
    dxp = np.zeros(xp.shape, dtype=np.float64)
    s = p.stride
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + s * out_h : s, j : j + s * out_w : s, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, ph0 : ph0 + h, pw0 : pw0 + w, :].astype(np.float32)
    return dx, dkernel, dbias


def depthwise_conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Per-channel spatial convolution; channel k of the output depends only
    on channel k of the input."""
    kh, kw, c, mult = p.kernel.shape
    if x.ndim != 4:
        raise ShapeError(f"input must be N x H x W x C, got shape {x.shape}")
    if mult != 1:
        raise ShapeError(f"depthwise kernel must have one filter per channel, got multiplier {mult}")
    if x.shape[3] != c:
        raise ShapeError(f"input has {x.shape[3]} channels but kernel expects {c}")
    if p.bias is not None and p.bias.shape != (c,):
        raise ShapeError(f"bias shape {p.bias.shape} != ({c},)")

    xp, out_h, out_w, _ = _pad_input(x, kh, kw, p.stride, p.padding)
    win = _windows(xp, kh, kw, p.stride, out_h, out_w)  # N x H' x W' x kh x kw x C
    k = p.kernel[:, :, :, 0].astype(np.float64)
    out = np.einsum("nhwklc,klc->nhwc", win.astype(np.float64), k)
    if p.bias is not None:
        out += p.bias.astype(np.float64)
    return out.astype(np.float32)


def depthwise_conv2d_backward(dy: np.ndarray, x: np.ndarray, p: ConvParams):
    """Gradients of depthwise_conv2d: returns (dx, dkernel, dbias or None)."""
    kh, kw, c, _ = p.kernel.shape
    xp, out_h, out_w, (ph0, pw0) = _pad_input(x, kh, kw, p.stride, p.padding)
    n, h, w, _ = x.shape
    if dy.shape != (n, out_h, out_w, c):
        raise ShapeError(f"dy shape {dy.shape} != expected {(n, out_h, out_w, c)}")

    win = _windows(xp, kh, kw, p.stride, out_h, out_w).astype(np.float64)
    dy64 = dy.astype(np.float64)
    dkernel = np.einsum("nhwklc,nhwc->klc", win, dy64)[:, :, :, None].astype(np.float32)
    dbias = dy64.sum(axis=(0, 1, 2)).astype(np.float32) if p.bias is not None else None

    dxp = np.zeros(xp.shape, dtype=np.float64)
    k = p.kernel[:, :, :, 0].astype(np.float64)
    s = p.stride
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + s * out_h : s, j : j + s * out_w : s, :] += dy64 * k[i, j]
    dx = dxp[:, ph0 : ph0 + h, pw0 : pw0 + w, :].astype(np.float32)
    return dx, dkernel, dbias


def _check_channels(x: np.ndarray, p: BatchNormParams) -> int:
    c = p.gamma.shape[0]
    if x.shape[-1] != c:
        raise ShapeError(f"input has {x.shape[-1]} channels but batchnorm has {c}")
    return c


def batchnorm_infer(x: np.ndarray, p: BatchNormParams) -> np.ndarray:
    """Inference-mode batch normalization using running statistics:
    out = gamma * (x - mean) / sqrt(var + eps) + beta, per channel."""
    _check_channels(x, p)
    scale = p.gamma.astype(np.float64) / np.sqrt(p.running_var.astype(np.float64) + p.epsilon)
    shift = p.beta.astype(np.float64) - p.running_mean.astype(np.float64) * scale
    return (x.astype(np.float64) * scale + shift).astype(np.float32)


def batchnorm_infer_backward(dy: np.ndarray, x: np.ndarray, p: BatchNormParams):
    """Gradients of batchnorm_infer: returns (dx, dgamma, dbeta).

    Running statistics are constants here, so dx is a pure per-channel scale.
    """
    _check_channels(x, p)
    inv = 1.0 / np.sqrt(p.running_var.astype(np.float64) + p.epsilon)
    dy64 = dy.astype(np.float64)
    axes = tuple(range(x.ndim - 1))
    dx = (dy64 * (p.gamma.astype(np.float64) * inv)).astype(np.float32)
    xhat = (x.astype(np.float64) - p.running_mean.astype(np.float64)) * inv
    dgamma = (dy64 * xhat).sum(axis=axes).astype(np.float32)
    dbeta = dy64.sum(axis=axes).astype(np.float32)
    return dx, dgamma, dbeta


def relu6(x: np.ndarray) -> np.ndarray:
    """Elementwise min(max(x, 0), 6)."""
    return np.minimum(np.maximum(x, 0), 6).astype(np.float32)


def relu6_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    mask = (x > 0) & (x < 6)
    return (dy * mask).astype(np.float32)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Per-channel spatial mean: N x H x W x C -> N x C."""
    if x.ndim != 4:
        raise ShapeError(f"input must be N x H x W x C, got shape {x.shape}")
    return x.astype(np.float64).mean(axis=(1, 2)).astype(np.float32)


def global_avg_pool_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    if dy.shape != (n, c):
        raise ShapeError(f"dy shape {dy.shape} != expected {(n, c)}")
    return np.broadcast_to(dy[:, None, None, :] / np.float32(h * w), x.shape).astype(np.float32)


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine layer: out = x @ weights + bias for x of shape N x F."""
    if x.ndim != 2 or weights.ndim != 2:
        raise ShapeError(f"dense expects 2-d input/weights, got {x.shape} and {weights.shape}")
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(f"inner dims disagree: input F={x.shape[1]}, weights F={weights.shape[0]}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[1]},)")
    out = x.astype(np.float64) @ weights.astype(np.float64) + bias.astype(np.float64)
    return out.astype(np.float32)


def dense_backward(dy: np.ndarray, x: np.ndarray, weights: np.ndarray):
    """Gradients of dense: returns (dx, dweights, dbias)."""
    dy64 = dy.astype(np.float64)
    dx = (dy64 @ weights.astype(np.float64).T).astype(np.float32)
    dweights = (x.astype(np.float64).T @ dy64).astype(np.float32)
    dbias = dy64.sum(axis=0).astype(np.float32)
    return dx, dweights, dbias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be N x K, got shape {logits.shape}")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=1, keepdims=True)).astype(np.float32)


def cross_entropy(probs: np.ndarray, one_hot: np.ndarray) -> float:
    """Mean over the batch of -log(probability of the true class)."""
    if probs.shape != one_hot.shape:
        raise ShapeError(f"probs shape {probs.shape} != one_hot shape {one_hot.shape}")
    p_true = (probs.astype(np.float64) * one_hot.astype(np.float64)).sum(axis=1)
    return float(-np.log(np.maximum(p_true, PROB_FLOOR)).mean())


def softmax_cross_entropy(logits: np.ndarray, one_hot: np.ndarray) -> tuple[float, np.ndarray]:
    """Fused loss: returns (mean cross-entropy, softmax probabilities)."""
    probs = softmax(logits)
    return cross_entropy(probs, one_hot), probs


def softmax_cross_entropy_backward(probs: np.ndarray, one_hot: np.ndarray) -> np.ndarray:
    """Gradient of the fused mean loss at the logits: (probs - one_hot) / N."""
    n = probs.shape[0]
    return ((probs.astype(np.float64) - one_hot.astype(np.float64)) / n).astype(np.float32)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Integer labels N -> one-hot N x K float32."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-d, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float32)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
