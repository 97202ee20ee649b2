"""HTTP inference service: receive a lesion photo, classify, optionally
explain.

The service owns one immutable loaded bundle; concurrent requests share it
freely. The only mutation is the admin reload endpoint, which swaps the
bundle under an exclusive lock. Preprocessing mode travels inside the
bundle header, so serving can never diverge from how the model was trained.
"""

from __future__ import annotations

import base64
import io
import logging
import threading
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from . import data as data_mod
from . import export
from . import saliency as sal
from .backbone import BundleStats, build_model

log = logging.getLogger(__name__)

MAX_UPLOAD_BYTES = 10 * 1024 * 1024
SALIENCY_ALPHA = 0.5


@dataclass
class LoadedModel:
    bundle: export.FrozenBundle
    stats: BundleStats
    model_id: str


class ModelHolder:
    """Holds the served bundle; reloads are serialized by a lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._model: LoadedModel | None = None

    def load(self, path) -> LoadedModel:
        with self._lock:
            bundle, stats = export.load_bundle(path)
            loaded = LoadedModel(bundle=bundle, stats=stats, model_id=export.model_id(path))
            self._model = loaded
            log.info("loaded bundle %s (%d bytes, %.3fs)", loaded.model_id,
                     stats.weight_size_bytes, stats.load_time_seconds)
            return loaded

    @property
    def model(self) -> LoadedModel | None:
        return self._model


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _decode_upload(body: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(body)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32)


async def _image_bytes(request: Request) -> bytes | None:
    """Image payload from a multipart field (any name) or the raw body."""
    content_type = request.headers.get("content-type", "")
    if content_type.startswith("multipart/form-data"):
        form = await request.form()
        for value in form.values():
            if hasattr(value, "read"):
                return await value.read()
        return None
    return await request.body()


def create_app(bundle_path=None, static_dir=None) -> FastAPI:
    """Build the service; when ``bundle_path`` is None the API answers 503
    until a bundle is loaded through /api/reload."""
    app = FastAPI(title="mobiderm inference service")
    holder = ModelHolder()
    app.state.holder = holder
    if bundle_path is not None:
        holder.load(bundle_path)

    @app.get("/healthz")
    def healthz():
        loaded = holder.model
        if loaded is None:
            return _error(503, "model not loaded")
        return {
            "status": "ready",
            "model_id": loaded.model_id,
            "load_time_seconds": loaded.stats.load_time_seconds,
            "weight_size_bytes": loaded.stats.weight_size_bytes,
        }

    @app.get("/api/labels")
    def labels():
        loaded = holder.model
        if loaded is None:
            return _error(503, "model not loaded")
        return loaded.bundle.labels

    @app.post("/api/classify")
    async def classify(request: Request, saliency: int = 0):
        loaded = holder.model
        if loaded is None:
            return _error(503, "model not loaded")
        body = await _image_bytes(request)
        if not body:
            return _error(400, "no image payload found in request")
        if len(body) > MAX_UPLOAD_BYTES:
            return _error(413, f"image exceeds the {MAX_UPLOAD_BYTES // (1024 * 1024)} MB limit")
        try:
            raw = _decode_upload(body)
        except Exception:
            return _error(400, "payload is not a decodable image")

        bundle = loaded.bundle
        size = bundle.spec.input_size
        resized = data_mod.bilinear_resize(raw, size, size)
        batch = data_mod.PREPROCESSORS[bundle.preprocessing](resized)[None]
        chain = build_model(bundle.spec, bundle.store, folded=bundle.optimized)
        from . import ops

        probs = ops.softmax(chain.forward(batch))[0]
        order = np.argsort(-probs, kind="stable")
        predictions = [
            {"label": bundle.labels[i], "probability": float(probs[i])} for i in order
        ]
        response = {
            "predictions": predictions,
            "top_label": bundle.labels[int(order[0])],
            "model_id": loaded.model_id,
        }
        if saliency:
            smap = sal.saliency(chain, batch[0], int(order[0]))
            png = sal.render_heatmap(smap, resized, alpha=SALIENCY_ALPHA)
            response["saliency_png"] = base64.b64encode(png).decode("ascii")
        return response

    @app.post("/api/reload")
    def reload_model(path: str):
        try:
            loaded = holder.load(path)
        except FileNotFoundError:
            return _error(404, f"bundle not found: {path}")
        return {"status": "ready", "model_id": loaded.model_id}

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app
