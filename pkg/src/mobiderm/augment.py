"""Seeded stochastic image augmentation used by the augmented training arm.

A sampled transform composes, in order: horizontal flip (probability 0.5),
then rotation * shear * zoom about the image center, then translation. The
result is resampled by inverse mapping with bilinear interpolation; source
coordinates that fall outside the image are clamped to the nearest edge
pixel, so every output value is a convex combination of source pixels.

Conventions (the source tooling for these parameters varies, so ours are

fixed here and tested):
  - rotation is sampled in degrees from U(-range, +range);
  - shifts are fractions of width/height, sampled uniformly, applied as a
    forward translation of the content (a +1 px horizontal shift moves
    content right);
  - shear is an angle; radians by default, degrees via ``shear_in_degrees``;
  - zoom z is isotropic from U(1 - range, 1 + range), z > 1 enlarges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentationConfig:
    """Augmentation parameter block (all ranges are half-widths)."""

    rescale: float = 1.0 / 255.0
    rotation_range_deg: float = 40.0
    width_shift_range: float = 0.2
    height_shift_range: float = 0.2
    shear_range: float = 0.2
    zoom_range: float = 0.2
    horizontal_flip: bool = True
    fill_mode: str = "nearest"
    shear_in_degrees: bool = False

    def __post_init__(self):
        for name in ("rotation_range_deg", "width_shift_range", "height_shift_range",
                     "shear_range", "zoom_range"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.rescale <= 0:
            raise ValueError("rescale must be > 0")
        if self.fill_mode != "nearest":
            raise ValueError(f"only 'nearest' fill is supported, got {self.fill_mode!r}")

    def to_dict(self) -> dict:
        return {
            "rescale": self.rescale,
            "rotation_range_deg": self.rotation_range_deg,
            "width_shift_range": self.width_shift_range,
            "height_shift_range": self.height_shift_range,
            "shear_range": self.shear_range,
            "zoom_range": self.zoom_range,
            "horizontal_flip": self.horizontal_flip,
            "fill_mode": self.fill_mode,
            "shear_in_degrees": self.shear_in_degrees,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationConfig":
        return cls(**d)


@dataclass(frozen=True)
class AffineTransform:
    """Sampled draw of one augmentation transform."""

    rotation_deg: float = 0.0
    shift_x: float = 0.0  # pixels, + moves content right
    shift_y: float = 0.0  # pixels, + moves content down
    shear: float = 0.0  # radians
    zoom: float = 1.0
    flip_horizontal: bool = False

    def is_identity(self) -> bool:
        return (self.rotation_deg == 0 and self.shift_x == 0 and self.shift_y == 0
                and self.shear == 0 and self.zoom == 1.0 and not self.flip_horizontal)

    def matrix(self, height: int, width: int) -> np.ndarray:
        """Forward 3x3 point map in pixel coordinates (x right, y down)."""
        cx, cy = (width - 1) / 2.0, (height - 1) / 2.0

        def translate(tx, ty):
            return np.array([[1, 0, tx], [0, 1, ty], [0, 0, 1]], dtype=np.float64)

        theta = np.deg2rad(self.rotation_deg)
        rot = np.array(
            [[np.cos(theta), -np.sin(theta), 0],
             [np.sin(theta), np.cos(theta), 0],
             [0, 0, 1]], dtype=np.float64)
        shear = np.array(
            [[1, -np.sin(self.shear), 0],
             [0, np.cos(self.shear), 0],
             [0, 0, 1]], dtype=np.float64)
        zoom = np.diag([self.zoom, self.zoom, 1.0])
        flip = np.array([[-1, 0, 2 * cx], [0, 1, 0], [0, 0, 1]], dtype=np.float64) \
            if self.flip_horizontal else np.eye(3)

        about_center = translate(cx, cy) @ rot @ shear @ zoom @ translate(-cx, -cy)
        return translate(self.shift_x, self.shift_y) @ about_center @ flip


def sample_transform(config: AugmentationConfig, rng: np.random.Generator,
                     height: int, width: int) -> AffineTransform:
    """Draw one transform. Draw order is fixed (rotation, shifts, shear,
    zoom, flip) so a given rng state always yields the same transform."""
    r = config.rotation_range_deg
    rotation = float(rng.uniform(-r, r)) if r else 0.0
    sx = float(rng.uniform(-config.width_shift_range, config.width_shift_range) * width) \
        if config.width_shift_range else 0.0
    sy = float(rng.uniform(-config.height_shift_range, config.height_shift_range) * height) \
        if config.height_shift_range else 0.0
    shear = float(rng.uniform(-config.shear_range, config.shear_range)) if config.shear_range else 0.0
    if config.shear_in_degrees:
        shear = float(np.deg2rad(shear))
    zoom = float(rng.uniform(1 - config.zoom_range, 1 + config.zoom_range)) \
        if config.zoom_range else 1.0
    flip = bool(rng.random() < 0.5) if config.horizontal_flip else False
    return AffineTransform(rotation, sx, sy, shear, zoom, flip)


def apply_transform(img: np.ndarray, t: AffineTransform) -> np.ndarray:
    """Warp an H x W x C image by inverse mapping with bilinear sampling and
    nearest-edge clamping. An identity transform returns the input bit-exact."""
    if t.is_identity():
        return np.array(img, dtype=np.float32, copy=True)
    h, w = img.shape[:2]
    inv = np.linalg.inv(t.matrix(h, w))

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]

    # nearest-edge fill: clamp source coordinates into the image
    src_x = np.clip(src_x, 0.0, w - 1.0)
    src_y = np.clip(src_y, 0.0, h - 1.0)

    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (src_x - x0)[..., None]
    wy = (src_y - y0)[..., None]

    img64 = img.astype(np.float64)
    top = img64[y0, x0] * (1 - wx) + img64[y0, x1] * wx
    bottom = img64[y1, x0] * (1 - wx) + img64[y1, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(np.float32)


def augment(img: np.ndarray, config: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    """Sample a transform, warp the [0, 255] image, then multiply by the
    configured rescale (1/255 by default, yielding values in [0, 1])."""
    h, w = img.shape[:2]
    t = sample_transform(config, rng, h, w)
    # float64 multiply, then cast: bit-identical to the rescale preprocessing
    return (apply_transform(img, t).astype(np.float64) * float(config.rescale)).astype(np.float32)


def item_rng(global_seed: int, epoch: int, item_index: int) -> np.random.Generator:
    """Independent per-item stream so parallel augmentation stays deterministic."""
    return np.random.default_rng(np.random.SeedSequence((global_seed, epoch, item_index)))
