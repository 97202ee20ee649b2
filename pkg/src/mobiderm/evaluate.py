"""Confusion matrices, rank-1 accuracy, and report rendering."""

from __future__ import annotations

import io
import logging
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray  # K x K int64
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(pred_indices, true_indices, num_classes: int,
              class_names: list[str] | None = None) -> ConfusionMatrix:
    """Tally counts[true][pred] over paired index lists."""
    pred = np.asarray(pred_indices, dtype=np.int64)
    true = np.asarray(true_indices, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError(f"prediction/truth lists must be equal-length 1-d, got {pred.shape} vs {true.shape}")
    if pred.size and (pred.min() < 0 or pred.max() >= num_classes
                      or true.min() < 0 or true.max() >= num_classes):
        raise ValueError(f"class index out of range [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    if class_names is None:
        class_names = [f"class_{i}" for i in range(num_classes)]
    if len(class_names) != num_classes:
        raise ValueError("class_names length must equal num_classes")
    return ConfusionMatrix(counts=counts, class_names=list(class_names))


def normalize(cm: ConfusionMatrix) -> np.ndarray:
    """Row-normalized matrix in float64; rows of an evaluated class sum to 1.

    Empty rows come back all-zero with a warning rather than dividing by zero.
    """
    counts = cm.counts.astype(np.float64)
    row_sums = counts.sum(axis=1, keepdims=True)
    empty = row_sums[:, 0] == 0
    if empty.any():
        names = [cm.class_names[i] for i in np.flatnonzero(empty)]
        log.warning("confusion matrix has empty true-class rows: %s", names)
    safe = np.where(row_sums == 0, 1.0, row_sums)
    out = counts / safe
    out[empty] = 0.0
    return out


def rank1_accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of samples whose top prediction is the true class: trace / total."""
    total = cm.total
    if total == 0:
        raise ValueError("cannot compute accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / total)


def per_class_accuracy(cm: ConfusionMatrix) -> list[float]:
    """Diagonal of the row-normalized matrix (0.0 for empty rows)."""
    return [float(v) for v in np.diag(normalize(cm))]


def render_text(cm: ConfusionMatrix, normalized: bool = False) -> str:
    """Plain-text table of counts or row fractions."""
    width = max(12, max(len(n) for n in cm.class_names) + 2)
    header = " " * width + "".join(f"{n[:width - 1]:>{width}}" for n in cm.class_names)
    lines = [header]
    values = normalize(cm) if normalized else cm.counts
    for i, name in enumerate(cm.class_names):
        cells = "".join(
            f"{values[i, j]:>{width}.3f}" if normalized else f"{values[i, j]:>{width}d}"
            for j in range(len(cm.class_names))
        )
        lines.append(f"{name[:width - 1]:<{width}}" + cells)
    return "\n".join(lines)


def render_png(cm: ConfusionMatrix, normalized: bool = False) -> bytes:
    """Heat-table PNG of the matrix (counts or row fractions)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = normalize(cm) if normalized else cm.counts.astype(np.float64)
    k = len(cm.class_names)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * k + 2), max(3.5, 0.9 * k + 1.5)))
    im = ax.imshow(values, cmap="Blues")
    ax.set_xticks(range(k), cm.class_names, rotation=45, ha="right")
    ax.set_yticks(range(k), cm.class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title("normalized confusion matrix" if normalized else "confusion matrix")
    threshold = values.max() / 2 if values.max() > 0 else 0.5
    for i in range(k):
        for j in range(k):
            text = f"{values[i, j]:.2f}" if normalized else f"{int(values[i, j])}"
            color = "white" if values[i, j] > threshold else "black"
            ax.text(j, i, text, ha="center", va="center", color=color, fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    buf = io.BytesIO()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fig.savefig(buf, format="png", dpi=110)
    plt.close(fig)
    return buf.getvalue()


def report_text(metrics: dict) -> str:
    """Human-readable experiment report from a metrics dictionary."""
    cm = ConfusionMatrix(counts=np.asarray(metrics["confusion"], dtype=np.int64),
                         class_names=list(metrics["class_names"]))
    lines = [
        f"arm: {metrics['arm']}    seed: {metrics['seed']}",
        f"rank-1 accuracy: {metrics['accuracy']:.4f}",
        "",
        "per-class accuracy:",
    ]
    for name, acc in zip(metrics["class_names"], metrics["per_class_accuracy"]):
        lines.append(f"  {name:<20} {acc:.4f}")
    lines += ["", "confusion (counts):", render_text(cm), "",
              "confusion (row-normalized):", render_text(cm, normalized=True)]
    config = metrics.get("config")
    if config:
        lines += ["", "config:"]
        for key in sorted(config):
            lines.append(f"  {key}: {config[key]}")
    return "\n".join(lines) + "\n"
