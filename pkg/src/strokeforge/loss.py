"""Training objective: scalar loss terms plus the pixel-space gradient.

Two interchangeable backends produce a LossReport per optimization step:

* remote — a perceptual sidecar scores the sketch against the target with
  CLIP- and VGG-based terms and returns d(total)/d(pixels); the core never
  touches model weights. Augmentation happens server-side, seeded per step.
* builtin — a model-free multi-scale image pyramid MSE with an analytic
  gradient, so the whole engine runs offline. The pyramid value stands in
  for the feature term; both CLIP terms are zero.

Every report satisfies total = clip1 + lambda * clip2 + vgg.
"""

from __future__ import annotations

import io
import os
import struct
import time
from dataclasses import dataclass

import numpy as np
import requests
from numpy.typing import NDArray
from PIL import Image
from scipy import ndimage

from strokeforge.errors import ConfigError, DomainError, NumericError, TransportError
from strokeforge.geometry import Sketch

SERVICE_URL_ENV = "STROKEFORGE_SERVICE_URL"

# 5-tap binomial kernel, the classic Gaussian-pyramid smoother.
_PYR_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class LossConfig:
    lambda_weight: float = 0.1
    clip_layer: int = 4
    vgg_layer: str = "block4_relu"
    augmentations_per_step: int = 4
    backend: str = "builtin"
    pyramid_levels: int = 4
    service_url: str | None = None
    timeout: float = 60.0
    retries: int = 2

    def __post_init__(self) -> None:
        if self.lambda_weight < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_weight}")
        if self.backend not in ("builtin", "remote"):
            raise ConfigError(f"unknown loss backend {self.backend!r}")
        if self.backend == "remote" and self.augmentations_per_step < 1:
            raise ConfigError("remote backend requires augmentations_per_step >= 1")
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")

    def resolved_service_url(self) -> str:
        url = self.service_url or os.environ.get(SERVICE_URL_ENV)
        if not url:
            raise ConfigError(
                f"remote backend needs a service URL (--service-url or ${SERVICE_URL_ENV})")
        return url.rstrip("/")


@dataclass(frozen=True)
class LossReport:
    clip1: float
    clip2: float
    clip: float
    vgg: float
    total: float
    pixel_grad: NDArray[np.float64]

    def __post_init__(self) -> None:
        for name in ("clip1", "clip2", "clip", "vgg", "total"):
            if not np.isfinite(getattr(self, name)):
                raise NumericError(f"loss term {name} is not finite")
        if not np.all(np.isfinite(self.pixel_grad)):
            raise NumericError("pixel gradient contains non-finite values")

    def check_ledger(self, lambda_weight: float, tol: float = 1e-6) -> None:
        """Assert the bookkeeping identities the terms must satisfy."""
        if abs(self.clip - (self.clip1 + lambda_weight * self.clip2)) > tol:
            raise NumericError("clip term does not equal clip1 + lambda*clip2")
        if abs(self.total - (self.clip + self.vgg)) > tol:
            raise NumericError("total does not equal clip + vgg")
        if not (-tol <= self.clip1 <= 2.0 + tol):
            raise NumericError(f"cosine distance {self.clip1} outside [0, 2]")


def combine(clip1: float, clip2: float, vgg: float,
            lambda_weight: float = 0.1) -> tuple[float, float]:
    """Weighted sum of the scalar terms: returns (clip, total)."""
    if lambda_weight < 0:
        raise ConfigError(f"lambda must be >= 0, got {lambda_weight}")
    vals = (clip1, clip2, vgg)
    if not all(np.isfinite(v) for v in vals):
        raise NumericError(f"loss terms must be finite, got {vals}")
    clip = clip1 + lambda_weight * clip2
    return clip, clip + vgg


def _blur(img: NDArray[np.float64]) -> NDArray[np.float64]:
    # Zero padding keeps this operator exactly self-adjoint.
    out = ndimage.correlate1d(img, _PYR_KERNEL, axis=0, mode="constant", cval=0.0)
    return ndimage.correlate1d(out, _PYR_KERNEL, axis=1, mode="constant", cval=0.0)


def _downsample(img: NDArray[np.float64]) -> NDArray[np.float64]:
    return _blur(img)[::2, ::2]


def _downsample_adjoint(grad: NDArray[np.float64], shape: tuple[int, int]) -> NDArray[np.float64]:
    stuffed = np.zeros(shape)
    stuffed[::2, ::2] = grad
    return _blur(stuffed)


def pyramid_loss(a: NDArray[np.float64], b: NDArray[np.float64],
                 levels: int) -> tuple[float, NDArray[np.float64]]:
    """Multi-scale MSE: sum over pyramid levels of mean squared difference.

    Level 1 compares the inputs directly; each further level compares one
    more blur-and-decimate step. Returns the loss and its analytic
    gradient with respect to `a`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"image shapes differ: {a.shape} vs {b.shape}")
    if levels < 1:
        raise DomainError(f"levels must be >= 1, got {levels}")

    pa, pb = [a], [b]
    for _ in range(levels - 1):
        if min(pa[-1].shape) < 2:
            break
        pa.append(_downsample(pa[-1]))
        pb.append(_downsample(pb[-1]))

    loss = 0.0
    grad: NDArray[np.float64] | None = None
    for la, lb in zip(reversed(pa), reversed(pb)):
        diff = la - lb
        loss += float(np.mean(diff ** 2))
        level_grad = 2.0 * diff / diff.size
        grad = level_grad if grad is None else level_grad + _downsample_adjoint(grad, la.shape)
    return loss, grad


def _encode_png(image: NDArray[np.float64]) -> bytes:
    """[0, 1] floats to PNG bytes; grayscale goes out 16-bit to keep the
    service's gradients free of visible quantization steps."""
    arr = np.asarray(image, dtype=np.float64)
    buf = io.BytesIO()
    if arr.ndim == 2:
        u16 = np.clip(np.round(arr * 65535.0), 0, 65535).astype(np.uint16)
        Image.fromarray(u16).save(buf, format="PNG")
    else:
        u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png_image(data: bytes) -> NDArray[np.float64]:
    """PNG bytes to [0, 1] floats; inverse of _encode_png for any bit depth."""
    img = Image.open(io.BytesIO(data))
    if img.mode in ("I;16", "I"):
        return np.asarray(img, dtype=np.float64) / 65535.0
    if img.mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def decode_loss_frame(content: bytes) -> tuple[dict, NDArray[np.float64]]:
    """Parse the service's binary loss response.

    Layout: 4-byte little-endian header length, UTF-8 JSON header, then the
    raw tensor sections it declares. The pixel gradient section is
    float32, row-major, H x W x channels; channel gradients are summed
    into one H x W plane because the core's render is single-channel.
    """
    import json

    if len(content) < 4:
        raise TransportError("loss response shorter than its length prefix")
    (hlen,) = struct.unpack("<I", content[:4])
    header = json.loads(content[4:4 + hlen].decode("utf-8"))
    offset = 4 + hlen
    grad = None
    for section in header["sections"]:
        nbytes = section["byte_length"]
        blob = content[offset:offset + nbytes]
        if len(blob) != nbytes:
            raise TransportError(f"section {section['name']} truncated")
        offset += nbytes
        if section["name"] == "pixel_grad":
            h, w, c = header["height"], header["width"], header["channels"]
            grad = np.frombuffer(blob, dtype="<f4").reshape(h, w, c).astype(np.float64)
    if grad is None:
        raise TransportError("loss response carried no pixel_grad section")
    return header, grad.sum(axis=2)


class RemoteLossClient:
    """Blocking HTTP client for the perceptual sidecar, with bounded retry."""

    def __init__(self, base_url: str, timeout: float = 60.0, retries: int = 2):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self._http = requests.Session()

    def _post(self, path: str, **kwargs) -> requests.Response:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._http.post(self.base_url + path, timeout=self.timeout, **kwargs)
                if resp.status_code >= 500:
                    raise TransportError(f"{path} -> {resp.status_code}: {resp.text[:200]}")
                return resp
            except (requests.RequestException, TransportError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(0.2 * (attempt + 1))
        raise TransportError(f"perceptual service unreachable at {self.base_url}{path}: {last}")

    def register_target(self, image: NDArray[np.float64]) -> str:
        resp = self._post("/targets", data=_encode_png(image),
                          headers={"Content-Type": "image/png"})
        if resp.status_code != 200:
            raise TransportError(f"target registration failed: {resp.status_code} {resp.text[:200]}")
        return resp.json()["target_id"]

    def loss(self, target_id: str, sketch_image: NDArray[np.float64], *,
             lambda_weight: float, clip_layer: int, n_augment: int,
             seed: int) -> tuple[dict, NDArray[np.float64]]:
        params = {
            "target_id": target_id,
            "lambda_weight": lambda_weight,
            "clip_layer": clip_layer,
            "n_augment": n_augment,
            "seed": seed,
        }
        resp = self._post("/loss", params=params, data=_encode_png(sketch_image),
                          headers={"Content-Type": "image/png"})
        if resp.status_code != 200:
            raise TransportError(f"loss request failed: {resp.status_code} {resp.text[:200]}")
        header, grad = decode_loss_frame(resp.content)
        return header["scalars"], grad

    def lpips(self, image_a: NDArray[np.float64], image_b: NDArray[np.float64]) -> float:
        files = {
            "image_a": ("a.png", _encode_png(image_a), "image/png"),
            "image_b": ("b.png", _encode_png(image_b), "image/png"),
        }
        resp = self._post("/lpips", files=files)
        if resp.status_code != 200:
            raise TransportError(f"lpips request failed: {resp.status_code} {resp.text[:200]}")
        return float(resp.json()["lpips"])


class BuiltinLossBackend:
    """Model-free pyramid loss; deterministic, so clean == step loss."""

    def __init__(self, target: NDArray[np.float64], config: LossConfig):
        self.target = np.asarray(target, dtype=np.float64)
        self.config = config

    def step_loss(self, sketch_image: NDArray[np.float64], seed: int = 0) -> LossReport:
        value, grad = pyramid_loss(sketch_image, self.target, self.config.pyramid_levels)
        report = LossReport(clip1=0.0, clip2=0.0, clip=0.0, vgg=value, total=value,
                            pixel_grad=grad)
        report.check_ledger(self.config.lambda_weight)
        return report

    def clean_loss(self, sketch_image: NDArray[np.float64]) -> float:
        value, _ = pyramid_loss(sketch_image, self.target, self.config.pyramid_levels)
        return value


class RemoteLossBackend:
    """One perceptual-service session: the target registers once."""

    def __init__(self, target: NDArray[np.float64], config: LossConfig,
                 client: RemoteLossClient | None = None):
        self.target = np.asarray(target, dtype=np.float64)
        self.config = config
        self.client = client or RemoteLossClient(config.resolved_service_url(),
                                                 timeout=config.timeout,
                                                 retries=config.retries)
        self._target_id: str | None = None

    def _ensure_target(self) -> str:
        if self._target_id is None:
            self._target_id = self.client.register_target(self.target)
        return self._target_id

    def _request(self, sketch_image: NDArray[np.float64], n_augment: int,
                 seed: int) -> LossReport:
        if np.asarray(sketch_image).shape != self.target.shape[:2]:
            raise DomainError(
                f"sketch image shape {np.asarray(sketch_image).shape} does not match "
                f"target {self.target.shape[:2]}")
        scalars, grad = self.client.loss(
            self._ensure_target(), sketch_image,
            lambda_weight=self.config.lambda_weight,
            clip_layer=self.config.clip_layer,
            n_augment=n_augment, seed=seed)
        report = LossReport(clip1=scalars["clip1"], clip2=scalars["clip2"],
                            clip=scalars["clip"], vgg=scalars["vgg"],
                            total=scalars["total"], pixel_grad=grad)
        report.check_ledger(self.config.lambda_weight)
        return report

    def step_loss(self, sketch_image: NDArray[np.float64], seed: int = 0) -> LossReport:
        return self._request(sketch_image, self.config.augmentations_per_step, seed)

    def clean_loss(self, sketch_image: NDArray[np.float64]) -> float:
        return self._request(sketch_image, 0, 0).total


def make_backend(target: NDArray[np.float64], config: LossConfig):
    if config.backend == "remote":
        return RemoteLossBackend(target, config)
    return BuiltinLossBackend(target, config)


def perceptual_loss(sketch_image: NDArray[np.float64], target_image: NDArray[np.float64],
                    config: LossConfig, *, n_augment: int | None = None,
                    seed: int = 0) -> LossReport:
    """Score one sketch image against one target under the configured backend."""
    sketch_image = np.asarray(sketch_image, dtype=np.float64)
    target_image = np.asarray(target_image, dtype=np.float64)
    if sketch_image.shape != target_image.shape:
        raise DomainError(
            f"image shapes differ: {sketch_image.shape} vs {target_image.shape}")
    backend = make_backend(target_image, config)
    if n_augment is None:
        return backend.step_loss(sketch_image)
    if isinstance(backend, RemoteLossBackend):
        return backend._request(sketch_image, n_augment, seed)
    return backend.step_loss(sketch_image, seed)


def evaluate_clean(sketch: Sketch, target: NDArray[np.float64], config: LossConfig) -> float:
    """Augmentation-free loss of the rendered sketch; drives convergence."""
    from strokeforge.raster import render

    img = render(sketch).image
    return make_backend(np.asarray(target, dtype=np.float64), config).clean_loss(img)
