"""Quantitative evaluation: native SSIM, sidecar LPIPS, batch reports."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.signal import fftconvolve

from strokeforge.errors import DomainError, TransportError
from strokeforge.loss import RemoteLossClient

log = logging.getLogger(__name__)

# Canonical Wang et al. SSIM constants for [0, 1]-valued images.
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _ssim_window() -> NDArray[np.float64]:
    ax = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * SSIM_SIGMA ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b) -> float:
    """Mean structural similarity over 11x11 Gaussian windows (sigma 1.5)."""
    a = np.asarray(getattr(a, "pixels", a), dtype=np.float64)
    b = np.asarray(getattr(b, "pixels", b), dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise DomainError(f"need a 2-D image of at least {SSIM_WINDOW}px per side")

    win = _ssim_window()
    c1 = SSIM_K1 ** 2  # dynamic range is 1
    c2 = SSIM_K2 ** 2

    def filt(x):
        return fftconvolve(x, win, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def lpips(a, b, client: RemoteLossClient) -> float:
    """Perceptual distance scored by the sidecar; raises TransportError offline."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DomainError(f"image shapes differ: {a.shape} vs {b.shape}")
    return client.lpips(a, b)


@dataclass(frozen=True)
class EvalItem:
    image_id: str
    strokes: int
    ssim: float | None
    lpips: float | None
    error: str | None = None


@dataclass(frozen=True)
class EvalReport:
    items: tuple[EvalItem, ...]
    mean_ssim: float | None
    mean_lpips: float | None
    canvas: tuple[int, int] | None = None

    def to_json(self) -> str:
        return json.dumps({
            "items": [vars(i) for i in self.items],
            "mean_ssim": self.mean_ssim,
            "mean_lpips": self.mean_lpips,
            "canvas": list(self.canvas) if self.canvas else None,
        }, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["image_id", "strokes", "ssim", "lpips"])
        for item in self.items:
            writer.writerow([item.image_id, item.strokes,
                             "" if item.ssim is None else f"{item.ssim:.6f}",
                             "" if item.lpips is None else f"{item.lpips:.6f}"])
        return buf.getvalue()


def evaluate_batch(pairs, with_lpips: bool = False,
                   client: RemoteLossClient | None = None,
                   canvas: tuple[int, int] | None = None) -> EvalReport:
    """Score (image_id, strokes, photo, render) items; failures don't stop the batch."""
    pairs = list(pairs)
    if not pairs:
        raise DomainError("evaluate_batch needs at least one pair")
    if with_lpips and client is None:
        raise DomainError("with_lpips requires a service client")

    items: list[EvalItem] = []
    for image_id, strokes, photo, sketch_render in pairs:
        s_val = l_val = None
        err = None
        try:
            s_val = ssim(photo, sketch_render)
            if with_lpips:
                l_val = lpips(photo, sketch_render, client)
        except (DomainError, TransportError) as exc:
            err = str(exc)
            log.warning("evaluation of %s failed: %s", image_id, exc)
        items.append(EvalItem(image_id=str(image_id), strokes=int(strokes),
                              ssim=s_val, lpips=l_val, error=err))

    ssims = [i.ssim for i in items if i.ssim is not None]
    lps = [i.lpips for i in items if i.lpips is not None]
    return EvalReport(items=tuple(items),
                      mean_ssim=float(np.mean(ssims)) if ssims else None,
                      mean_lpips=float(np.mean(lps)) if lps else None,
                      canvas=canvas)
