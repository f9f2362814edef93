"""HTTP surface of the perceptual sidecar.

POST /targets            photo PNG -> {"target_id": ...}
POST /loss?target_id=..&lambda_weight=..&clip_layer=..&n_augment=..&seed=..
                         sketch PNG -> binary frame:
                         4-byte LE header length, JSON header
                         {scalars, width, height, channels, sections, config},
                         then raw float32 little-endian H x W x 3 pixel_grad.
POST /lpips              multipart image_a/image_b -> {"lpips": ...}
GET  /config             model variants and layer choices in effect.

Model inference is serialized by a lock; the target cache is the only
state.
"""

from __future__ import annotations

import io
import json
import logging
import struct
import threading
import uuid

import numpy as np
import torch
from fastapi import FastAPI, File, Query, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from PIL import Image, UnidentifiedImageError

from strokeforge_service.models import IMAGE_SIZE, VGG_FEATURE_LAYER
from strokeforge_service.scoring import Scorer

log = logging.getLogger(__name__)


def decode_png(data: bytes) -> torch.Tensor:
    """PNG bytes -> (3, H, W) float64 tensor in [0, 1]; grayscale replicates."""
    img = Image.open(io.BytesIO(data))
    if img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float64) / 255.0
    else:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    t = torch.from_numpy(arr.copy())
    if t.ndim == 2:
        t = t.unsqueeze(0).expand(3, -1, -1).contiguous()
    else:
        t = t.permute(2, 0, 1).contiguous()
    return t


def create_app(scorer: Scorer | None = None,
               image_size: int = IMAGE_SIZE) -> FastAPI:
    app = FastAPI(title="strokeforge-service", version="0.1.0")
    scorer = scorer or Scorer.build()
    targets: dict[str, torch.Tensor] = {}
    target_feature_cache: dict[tuple[str, int], tuple] = {}
    inference_lock = threading.Lock()

    config_echo = {
        **scorer.info,
        "image_size": image_size,
        "vgg_layer": VGG_FEATURE_LAYER,
        "clip_layers": scorer.clip.num_layers,
    }

    def _bad_image(exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=422, content={"detail": f"bad image: {exc}"})

    @app.get("/config")
    def config():
        return config_echo

    @app.post("/targets")
    async def register_target(request: Request):
        try:
            image = decode_png(await request.body())
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            return _bad_image(exc)
        if image.shape[1:] != (image_size, image_size):
            return JSONResponse(status_code=422, content={
                "detail": f"expected {image_size}x{image_size}, "
                          f"got {image.shape[2]}x{image.shape[1]}"})
        token = uuid.uuid4().hex
        targets[token] = image
        return {"target_id": token, "width": image_size, "height": image_size}

    @app.post("/loss")
    async def loss(request: Request,
                   target_id: str = Query(...),
                   lambda_weight: float = Query(0.1, ge=0),
                   clip_layer: int = Query(4, ge=0),
                   n_augment: int = Query(0, ge=0),
                   seed: int = Query(0)):
        target = targets.get(target_id)
        if target is None:
            return JSONResponse(status_code=404, content={"detail": "unknown target"})
        try:
            sketch = decode_png(await request.body())
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            return _bad_image(exc)
        if sketch.shape != target.shape:
            return JSONResponse(status_code=422, content={
                "detail": f"sketch {tuple(sketch.shape)} vs target {tuple(target.shape)}"})

        with inference_lock:
            cached = None
            if n_augment == 0:
                key = (target_id, scorer.clamp_layer(clip_layer))
                if key not in target_feature_cache:
                    target_feature_cache[key] = scorer.target_features(target, key[1])
                cached = target_feature_cache[key]
            scalars, grad = scorer.loss_terms(sketch, target, lambda_weight,
                                              clip_layer, n_augment, seed,
                                              cached_target=cached)

        if not torch.isfinite(grad).all() or not all(np.isfinite(v) for v in scalars.values()):
            return JSONResponse(status_code=500, content={
                "detail": "non-finite loss or gradient", "scalars": scalars})

        grad_hwc = grad.permute(1, 2, 0).numpy().astype("<f4")
        blob = grad_hwc.tobytes()
        header = json.dumps({
            "scalars": scalars,
            "width": grad_hwc.shape[1],
            "height": grad_hwc.shape[0],
            "channels": 3,
            "sections": [{"name": "pixel_grad", "dtype": "float32",
                          "byte_length": len(blob)}],
            "config": {**config_echo, "lambda_weight": lambda_weight,
                       "clip_layer": scorer.clamp_layer(clip_layer),
                       "n_augment": n_augment, "seed": seed},
        }).encode("utf-8")
        return Response(content=struct.pack("<I", len(header)) + header + blob,
                        media_type="application/octet-stream")

    @app.post("/lpips")
    async def lpips(image_a: UploadFile = File(...), image_b: UploadFile = File(...)):
        try:
            a = decode_png(await image_a.read())
            b = decode_png(await image_b.read())
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            return _bad_image(exc)
        if a.shape != b.shape:
            return JSONResponse(status_code=422, content={"detail": "shape mismatch"})
        with inference_lock:
            value = scorer.lpips(a, b)
        return {"lpips": value}

    return app


def main() -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(prog="strokeforge-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8001)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)
    uvicorn.run(create_app(), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
