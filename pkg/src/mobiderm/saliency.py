"""Input-gradient saliency maps and heatmap overlays.

The saliency score differentiates the pre-softmax logit of the requested
class with respect to the input pixels, aggregates per pixel over channels,
and normalizes by the maximum. A completely flat gradient field (for
example a zero-weight head) yields an all-zero map flagged as flat rather
than a division by zero.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import ops
from .layers import LayerChain

# color ramp stops for heatmap rendering: value in [0, 1] -> RGB
_RAMP_STOPS = [
    (0.00, (0, 0, 96)),
    (0.25, (0, 64, 255)),
    (0.50, (0, 224, 160)),
    (0.75, (255, 224, 0)),
    (1.00, (255, 32, 32)),
]


@dataclass
class SaliencyMap:
    values: np.ndarray  # H x W float32 in [0, 1]
    class_index: int
    source_size: tuple[int, int]
    flat: bool = False  # true when every gradient was zero


def saliency(chain: LayerChain, image: np.ndarray, class_index: int,
             channel_aggregate: str = "max") -> SaliencyMap:
    """Gradient of one class logit with respect to the input pixels.

    ``image`` is a single preprocessed H x W x C tensor matching the model
    input size. Per-pixel score is max over channels of |gradient| (or the
    mean with ``channel_aggregate="mean"``), normalized so the peak is 1.
    """
    if image.ndim != 3:
        raise ops.ShapeError(f"image must be H x W x C, got shape {image.shape}")
    if channel_aggregate not in ("max", "mean"):
        raise ValueError(f"channel_aggregate must be 'max' or 'mean', got {channel_aggregate!r}")
    batch = ops.as_tensor(image)[None]
    logits = chain.forward(batch, record=True)
    num_classes = logits.shape[1]
    if not 0 <= class_index < num_classes:
        raise ValueError(f"class index {class_index} out of range [0, {num_classes})")
    seed = np.zeros_like(logits)
    seed[0, class_index] = 1.0
    grad = chain.backward(seed)[0]  # H x W x C

    magnitude = np.abs(grad.astype(np.float64))
    score = magnitude.max(axis=2) if channel_aggregate == "max" else magnitude.mean(axis=2)
    peak = score.max()
    flat = peak == 0.0
    if not flat:
        score = score / peak
    return SaliencyMap(values=score.astype(np.float32), class_index=class_index,
                       source_size=(image.shape[0], image.shape[1]), flat=flat)


def input_gradient(chain: LayerChain, image: np.ndarray, class_index: int) -> np.ndarray:
    """Raw (unnormalized, signed) input gradient of one class logit."""
    batch = ops.as_tensor(image)[None]
    logits = chain.forward(batch, record=True)
    seed = np.zeros_like(logits)
    seed[0, class_index] = 1.0
    return chain.backward(seed)[0]


def color_ramp(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats through the fixed piecewise-linear ramp to RGB uint8."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    out = np.zeros(v.shape + (3,), dtype=np.float64)
    for (lo, lo_rgb), (hi, hi_rgb) in zip(_RAMP_STOPS[:-1], _RAMP_STOPS[1:]):
        mask = (v >= lo) & (v <= hi)
        frac = np.where(hi > lo, (v - lo) / (hi - lo), 0.0)
        for c in range(3):
            seg = lo_rgb[c] + frac * (hi_rgb[c] - lo_rgb[c])
            out[..., c] = np.where(mask, seg, out[..., c])
    return np.round(out).astype(np.uint8)


def render_heatmap(smap: SaliencyMap, base_image: np.ndarray, alpha: float) -> bytes:
    """Blend the ramp-colored map over a [0, 255] H x W x 3 image; PNG bytes.

    alpha = 0 reproduces the base image pixel for pixel.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    base = np.asarray(base_image, dtype=np.float64)
    if base.ndim != 3 or base.shape[2] != 3:
        raise ops.ShapeError(f"base image must be H x W x 3, got shape {base.shape}")
    if base.shape[:2] != smap.values.shape:
        raise ops.ShapeError(
            f"saliency map {smap.values.shape} and image {base.shape[:2]} sizes differ")
    base_u8 = np.clip(np.round(base), 0, 255).astype(np.uint8)
    if alpha == 0.0:
        blended = base_u8
    else:
        heat = color_ramp(smap.values).astype(np.float64)
        blended = np.clip(np.round((1 - alpha) * base + alpha * heat), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(blended, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
