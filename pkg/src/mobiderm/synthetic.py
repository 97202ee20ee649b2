"""Desk-scale synthetic image corpus for exercising the full pipeline.

Seven classes named after the target disease labels, each with a distinct
base color and texture family (stripes, checker, dots, blotches) plus
per-image jitter and noise. Color statistics separate the classes well even
through a randomly initialized frozen backbone, which is what the
end-to-end tests rely on.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

CLASS_NAMES = [
    "acne",
    "chickenpox",
    "eczema",
    "pityriasis_rosea",
    "psoriasis",
    "tinea_corporis",
    "vitiligo",
]

# RGB anchor and texture family per class; the pattern blends the anchor
# with a nearby contrast color, so the image mean stays pinned at the anchor
# regardless of how much area the pattern covers
_RECIPES = {
    "acne": ((220, 50, 50), "dots"),
    "chickenpox": ((50, 200, 50), "dots"),
    "eczema": ((50, 80, 230), "blotches"),
    "pityriasis_rosea": ((235, 215, 40), "stripes"),
    "psoriasis": ((210, 50, 210), "checker"),
    "tinea_corporis": ((40, 210, 210), "stripes"),
    "vitiligo": ((240, 240, 240), "blotches"),
}
_CONTRAST_SHIFT = np.array([35.0, -35.0, 25.0])


def _texture(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """A [0, 1] single-channel pattern."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind == "stripes":
        period = rng.uniform(4, 10)
        angle = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period + phase)
        return 0.5 + 0.5 * wave
    if kind == "checker":
        cell = rng.integers(3, 7)
        offset = rng.integers(0, cell, size=2)
        return (((yy + offset[0]) // cell + (xx + offset[1]) // cell) % 2).astype(np.float64)
    if kind == "dots":
        out = np.zeros((size, size))
        for _ in range(rng.integers(12, 18)):
            cx, cy = rng.uniform(0, size, size=2)
            r = rng.uniform(1.5, size / 8)
            out += np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r)))
        return np.clip(out, 0, 1)
    if kind == "blotches":
        coarse = rng.random((4, 4))
        img = Image.fromarray((coarse * 255).astype(np.uint8)).resize((size, size), Image.BILINEAR)
        return np.asarray(img, dtype=np.float64) / 255.0
    raise ValueError(f"unknown texture kind {kind!r}")


def make_image(class_name: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """One uint8 H x W x 3 sample of the class recipe."""
    anchor, kind = _RECIPES[class_name]
    base = np.asarray(anchor, dtype=np.float64) + rng.uniform(-8, 8, size=3)
    contrast = base + _CONTRAST_SHIFT * rng.uniform(0.8, 1.2)
    tex = _texture(kind, size, rng)[..., None]
    img = base * (1 - tex) + contrast * tex
    img += rng.normal(0, 6, size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def generate_corpus(root, per_class: int = 200, size: int = 32, seed: int = 0,
                    classes: list[str] | None = None) -> Path:
    """Write a class-per-directory PNG corpus; returns the root path."""
    root = Path(root)
    classes = CLASS_NAMES if classes is None else classes
    rng = np.random.default_rng(seed)
    for name in classes:
        class_dir = root / name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            img = make_image(name, size, rng)
            Image.fromarray(img, mode="RGB").save(class_dir / f"{name}_{i:04d}.png")
    return root
