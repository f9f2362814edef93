"""Loss terms, augmentation, and the LPIPS-style metric.

All terms are computed under torch autograd so the pixel gradient of the
total comes out exact, including the path back through the augmentation
warps to the un-augmented sketch image.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from strokeforge_service import models


@dataclass
class Scorer:
    clip: torch.nn.Module
    vgg: torch.nn.Module
    info: dict

    @classmethod
    def build(cls) -> "Scorer":
        clip, clip_info = models.load_clip()
        vgg, vgg_info = models.load_vgg16()
        # Double precision: reduction noise in float32 forwards is larger
        # than the per-pixel loss sensitivities the clients probe.
        clip.double()
        vgg.double()
        for p in clip.parameters():
            p.requires_grad_(False)
        for p in vgg.parameters():
            p.requires_grad_(False)
        return cls(clip=clip, vgg=vgg, info={**clip_info, **vgg_info})

    def clamp_layer(self, layer: int) -> int:
        return max(0, min(layer, self.clip.num_layers - 1))

    def target_features(self, target: torch.Tensor,
                        clip_layer: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Precomputable (embedding, layer activation, VGG feature) of a
        registered target, valid for the un-augmented loss path."""
        layer = self.clamp_layer(clip_layer)
        taps = [models.VGG_RELU_LAYERS[models.VGG_FEATURE_LAYER]]
        with torch.no_grad():
            emb, hidden = self.clip(target.unsqueeze(0))
            feat = models.vgg_activations(self.vgg, target.unsqueeze(0), taps)[0]
        return emb, hidden[layer], feat

    def loss_terms(self, sketch: torch.Tensor, target: torch.Tensor,
                   lambda_weight: float, clip_layer: int,
                   n_augment: int, seed: int,
                   cached_target=None) -> tuple[dict, torch.Tensor]:
        """Scalar terms plus d(total)/d(sketch pixels).

        sketch/target: (3, H, W) in [0, 1]. The gradient is with respect
        to the un-augmented sketch: augmentation warps are differentiable
        and autograd carries the chain back through them. cached_target
        (from target_features) short-circuits the target pass when no
        augmentation is requested.
        """
        sketch = sketch.detach().clone().requires_grad_(True)
        layer = self.clamp_layer(clip_layer)
        taps = [models.VGG_RELU_LAYERS[models.VGG_FEATURE_LAYER]]

        if n_augment > 0:
            sk_batch, tg_batch = _augment_pair(sketch, target, n_augment, seed)
        else:
            sk_batch = sketch.unsqueeze(0)
            tg_batch = None if cached_target is not None else target.unsqueeze(0)

        emb_s, hidden_s = self.clip(sk_batch)
        feat_s = models.vgg_activations(self.vgg, sk_batch, taps)[0]
        if tg_batch is None:
            emb_t, act_t, feat_t = cached_target
        else:
            with torch.no_grad():
                emb_t, hidden_t = self.clip(tg_batch)
                act_t = hidden_t[layer]
                feat_t = models.vgg_activations(self.vgg, tg_batch, taps)[0]

        clip1 = (1.0 - F.cosine_similarity(emb_s, emb_t, dim=1)).mean()
        clip2 = ((hidden_s[layer] - act_t) ** 2).mean()
        vgg = ((feat_s - feat_t) ** 2).mean()

        clip = clip1 + lambda_weight * clip2
        total = clip + vgg
        (grad,) = torch.autograd.grad(total, sketch)

        scalars = {
            "clip1": float(clip1.detach()),
            "clip2": float(clip2.detach()),
            "clip": float(clip.detach()),
            "vgg": float(vgg.detach()),
            "total": float(total.detach()),
        }
        return scalars, grad.detach()

    def lpips(self, a: torch.Tensor, b: torch.Tensor) -> float:
        """VGG16 perceptual distance: channel-normalized feature MSE summed
        over the five classic ReLU taps (uniform layer weights)."""
        taps = sorted(models.VGG_RELU_LAYERS.values())
        with torch.no_grad():
            fa = models.vgg_activations(self.vgg, a.unsqueeze(0), taps)
            fb = models.vgg_activations(self.vgg, b.unsqueeze(0), taps)
        score = 0.0
        for xa, xb in zip(fa, fb):
            na = xa / (xa.norm(dim=1, keepdim=True) + 1e-10)
            nb = xb / (xb.norm(dim=1, keepdim=True) + 1e-10)
            score += float(((na - nb) ** 2).sum(dim=1).mean())
        return score


def _augment_pair(sketch: torch.Tensor, target: torch.Tensor,
                  n_augment: int, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Seeded random affine crops (scale 0.8-1.0, translation <= 5%),
    applied identically to sketch and target, differentiably."""
    gen = torch.Generator().manual_seed(seed & 0x7FFFFFFF)
    scales = (0.8 + 0.2 * torch.rand(n_augment, generator=gen)).to(sketch.dtype)
    shifts = (0.1 * torch.rand(n_augment, 2, generator=gen) - 0.05).to(sketch.dtype)

    thetas = torch.zeros(n_augment, 2, 3, dtype=sketch.dtype)
    thetas[:, 0, 0] = scales
    thetas[:, 1, 1] = scales
    thetas[:, :, 2] = shifts
    size = (n_augment, 3, sketch.shape[1], sketch.shape[2])
    grid = F.affine_grid(thetas, size, align_corners=False)

    sk = F.grid_sample(sketch.unsqueeze(0).expand(n_augment, -1, -1, -1), grid,
                       align_corners=False, padding_mode="border")
    with torch.no_grad():
        tg = F.grid_sample(target.unsqueeze(0).expand(n_augment, -1, -1, -1), grid,
                           align_corners=False, padding_mode="border")
    return sk, tg
