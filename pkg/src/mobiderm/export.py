"""Deployment chain: training checkpoint -> frozen bundle -> optimized bundle.

Both artifact kinds share one envelope: a 4-byte magic ("MBCK" for
checkpoints, "MBDL" for deployable bundles), a u32 envelope version, a u32
JSON header length, the UTF-8 JSON header, then a complete MBWT tensor blob
(see backbone module for its byte layout). Checkpoints carry optimizer
moment tensors under ``optimizer/...`` names inside the blob; freezing
strips them. Optimizing folds every batchnorm into its preceding
convolution, which changes outputs by float32 rounding only.

Writers are deterministic (sorted tensors, no timestamps), so freezing the
same checkpoint twice produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backbone as bb

CHECKPOINT_MAGIC = b"MBCK"
BUNDLE_MAGIC = b"MBDL"
ENVELOPE_VERSION = 1
OPTIMIZER_PREFIX = "optimizer/"


class TransformError(ValueError):
    """Raised when a bundle transformation cannot be applied."""


@dataclass
class Checkpoint:
    """Training artifact: full weights plus head optimizer state."""

    store: bb.WeightStore
    spec: bb.ModelSpec
    labels: list[str]
    hyperparams: dict
    adam_tensors: dict[str, np.ndarray] = field(default_factory=dict)
    adam_steps: int = 0
    preprocessing: str = "default"


@dataclass
class FrozenBundle:
    """Deployable artifact: inference weights, labels, metadata. No optimizer state."""

    store: bb.WeightStore
    spec: bb.ModelSpec
    labels: list[str]
    preprocessing: str = "default"
    optimized: bool = False
    format_version: int = ENVELOPE_VERSION


def _write_envelope(path, magic: bytes, header: dict, store: bb.WeightStore) -> int:
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bb.weights_to_bytes(store)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", ENVELOPE_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(blob)
    return 12 + len(header_bytes) + len(blob)


def _read_envelope(path, magic: bytes) -> tuple[dict, bb.WeightStore]:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise bb.TruncatedFileError(f"{path}: file too short for an envelope header")
    if data[:4] != magic:
        raise bb.BadMagicError(
            f"{path}: expected magic {magic.decode()!r}, found {data[:4]!r}")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != ENVELOPE_VERSION:
        raise bb.WeightFormatError(f"unsupported envelope version {version}")
    if len(data) < 12 + header_len:
        raise bb.TruncatedFileError(f"{path}: truncated JSON header")
    header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    store, end = bb.weights_from_bytes(data, offset=12 + header_len)
    if end != len(data):
        raise bb.WeightFormatError(f"{path}: trailing bytes after tensor data")
    return header, store


def save_checkpoint(ckpt: Checkpoint, path) -> int:
    """Write a checkpoint; optimizer tensors ride inside the weight blob."""
    entries = dict(ckpt.store.entries)
    for name, tensor in ckpt.adam_tensors.items():
        key = name if name.startswith(OPTIMIZER_PREFIX) else OPTIMIZER_PREFIX + name
        entries[key] = tensor
    header = {
        "spec": ckpt.spec.to_dict(),
        "labels": ckpt.labels,
        "hyperparams": ckpt.hyperparams,
        "adam_steps": ckpt.adam_steps,
        "preprocessing": ckpt.preprocessing,
    }
    return _write_envelope(path, CHECKPOINT_MAGIC, header, bb.WeightStore(entries))


def load_checkpoint(path) -> Checkpoint:
    header, store = _read_envelope(path, CHECKPOINT_MAGIC)
    weights = {k: v for k, v in store.entries.items() if not k.startswith(OPTIMIZER_PREFIX)}
    adam = {k: v for k, v in store.entries.items() if k.startswith(OPTIMIZER_PREFIX)}
    return Checkpoint(
        store=bb.WeightStore(weights),
        spec=bb.ModelSpec.from_dict(header["spec"]),
        labels=list(header["labels"]),
        hyperparams=dict(header["hyperparams"]),
        adam_tensors=adam,
        adam_steps=int(header.get("adam_steps", 0)),
        preprocessing=header.get("preprocessing", "default"),
    )


def freeze(source: Checkpoint | FrozenBundle) -> FrozenBundle:
    """Strip training-only state, validate the result is forward-complete.

    Freezing an already-frozen bundle is a no-op pass-through, so the
    save -> load -> save chain is idempotent.
    """
    if isinstance(source, FrozenBundle):
        bundle = source
    else:
        bundle = FrozenBundle(
            store=bb.WeightStore(dict(source.store.entries)),
            spec=source.spec,
            labels=list(source.labels),
            preprocessing=source.preprocessing,
            optimized=False,
        )
    bb.validate_store(bundle.store, bundle.spec, folded=bundle.optimized)
    if len(bundle.labels) != bundle.spec.num_classes:
        raise ValueError(
            f"{len(bundle.labels)} labels for a {bundle.spec.num_classes}-class model")
    probe = np.zeros((1, bundle.spec.input_size, bundle.spec.input_size, 3), dtype=np.float32)
    probs = bb.predict_probs(bundle.store, bundle.spec, probe, folded=bundle.optimized)
    if not np.all(np.isfinite(probs)):
        raise ValueError("frozen model failed its forward validation pass")
    return bundle


def labels_text(labels: list[str]) -> str:
    """One label per line in class-index order, newline-terminated."""
    return "".join(f"{label}\n" for label in labels)


def save_bundle(bundle: FrozenBundle, path, labels_path=None) -> int:
    """Write a deployable bundle, plus a labels text file next to it
    (``<path>.labels.txt`` unless given explicitly)."""
    header = {
        "spec": bundle.spec.to_dict(),
        "labels": bundle.labels,
        "preprocessing": bundle.preprocessing,
        "optimized": bundle.optimized,
        "format_version": bundle.format_version,
    }
    size = _write_envelope(path, BUNDLE_MAGIC, header, bundle.store)
    if labels_path is None:
        labels_path = Path(str(path) + ".labels.txt")
    Path(labels_path).write_text(labels_text(bundle.labels), encoding="utf-8")
    return size


def load_bundle(path) -> tuple[FrozenBundle, bb.BundleStats]:
    """Read a bundle and report measured size/load time."""
    start = time.perf_counter()
    header, store = _read_envelope(path, BUNDLE_MAGIC)
    elapsed = time.perf_counter() - start
    bundle = FrozenBundle(
        store=store,
        spec=bb.ModelSpec.from_dict(header["spec"]),
        labels=list(header["labels"]),
        preprocessing=header.get("preprocessing", "default"),
        optimized=bool(header.get("optimized", False)),
        format_version=int(header.get("format_version", ENVELOPE_VERSION)),
    )
    bb.validate_store(bundle.store, bundle.spec, folded=bundle.optimized)
    size = Path(path).stat().st_size
    return bundle, bb.BundleStats(weight_size_bytes=size, load_time_seconds=elapsed)


def optimize(frozen: FrozenBundle) -> FrozenBundle:
    """Fold each batchnorm into the convolution it follows.

    Per output channel c: scale_c = gamma_c / sqrt(var_c + eps), then
    kernel' = kernel * scale_c and bias' = beta_c - mean_c * scale_c.
    The folded store holds strictly fewer tensors. Applying this twice is
    an error because no batchnorm tensors remain.
    """
    names = frozen.store.names()
    bn_gammas = [n for n in names if n.endswith("/bn/gamma")]
    if frozen.optimized or not bn_gammas:
        raise TransformError("bundle has no batchnorm tensors to fold")

    entries = dict(frozen.store.entries)
    for gamma_name in bn_gammas:
        prefix = gamma_name[: -len("/bn/gamma")]
        kernel_name = f"{prefix}/kernel"
        if kernel_name not in entries:
            raise TransformError(f"batchnorm {prefix}/bn has no preceding convolution kernel")
        gamma = entries.pop(f"{prefix}/bn/gamma").astype(np.float64)
        beta = entries.pop(f"{prefix}/bn/beta").astype(np.float64)
        mean = entries.pop(f"{prefix}/bn/mean").astype(np.float64)
        var = entries.pop(f"{prefix}/bn/variance").astype(np.float64)
        scale = gamma / np.sqrt(var + bb.BN_EPSILON)
        kernel = entries[kernel_name].astype(np.float64)
        if kernel.shape[3] == 1 and kernel.shape[2] == scale.shape[0]:  # depthwise
            kernel = kernel * scale[None, None, :, None]
        else:
            kernel = kernel * scale[None, None, None, :]
        entries[kernel_name] = kernel.astype(np.float32)
        entries[f"{prefix}/bias"] = (beta - mean * scale).astype(np.float32)

    folded = FrozenBundle(
        store=bb.WeightStore(entries),
        spec=frozen.spec,
        labels=list(frozen.labels),
        preprocessing=frozen.preprocessing,
        optimized=True,
    )
    bb.validate_store(folded.store, folded.spec, folded=True)
    if len(folded.store) >= len(frozen.store):
        raise TransformError("folding did not reduce the tensor count")
    return folded


def bundle_stats(path, repeats: int = 3) -> bb.BundleStats:
    """File size plus the median of ``repeats`` timed loads (median damps
    scheduler jitter on small files)."""
    size = Path(path).stat().st_size
    times = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        _read_envelope(path, BUNDLE_MAGIC)
        times.append(time.perf_counter() - start)
    return bb.BundleStats(weight_size_bytes=size, load_time_seconds=float(np.median(times)))


def model_id(path) -> str:
    """Short content hash identifying a bundle file."""
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return digest[:12]
