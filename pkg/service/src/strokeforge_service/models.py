"""Vision models backing the loss terms.

Pretrained weights are loaded when they can be (torchvision cache or a
reachable mirror; a HuggingFace CLIP checkpoint via
$STROKEFORGE_CLIP_MODEL). When they cannot, the same architectures are
built with deterministically seeded random weights so every functional
contract of the service (gradients, ledger identities, determinism)
still holds; responses echo which variant is active.
"""

from __future__ import annotations

import logging
import os

import torch
import torchvision
from torch import nn

log = logging.getLogger(__name__)

IMAGE_SIZE = 224
_IMAGENET_MEAN = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
_IMAGENET_STD = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)

# torchvision vgg16.features indices of each block's last ReLU.
VGG_RELU_LAYERS = {"relu1_2": 4, "relu2_2": 9, "relu3_3": 16,
                   "relu4_3": 23, "relu5_3": 30}
VGG_FEATURE_LAYER = "relu4_3"  # feature loss taps the 4th conv block


class VisionTransformer(nn.Module):
    """Compact CLIP-style ViT image encoder with exposed hidden states."""

    def __init__(self, image_size: int = IMAGE_SIZE, patch: int = 16,
                 hidden: int = 192, heads: int = 3, layers: int = 8,
                 embed_dim: int = 128):
        super().__init__()
        n_tokens = (image_size // patch) ** 2 + 1
        self.patch_embed = nn.Conv2d(3, hidden, kernel_size=patch, stride=patch)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, hidden))
        self.pos_embed = nn.Parameter(torch.zeros(1, n_tokens, hidden))
        self.blocks = nn.ModuleList(
            [nn.TransformerEncoderLayer(
                d_model=hidden, nhead=heads, dim_feedforward=hidden * 4,
                batch_first=True, norm_first=True, activation="gelu")
             for _ in range(layers)])
        self.norm = nn.LayerNorm(hidden)
        self.proj = nn.Linear(hidden, embed_dim, bias=False)
        nn.init.normal_(self.pos_embed, std=0.02)
        nn.init.normal_(self.cls_token, std=0.02)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns (projected cls embedding, hidden state after each block)."""
        x = self.patch_embed(images).flatten(2).transpose(1, 2)
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embed
        hidden_states = []
        for block in self.blocks:
            x = block(x)
            hidden_states.append(x)
        pooled = self.norm(x[:, 0])
        return self.proj(pooled), hidden_states

    @property
    def num_layers(self) -> int:
        return len(self.blocks)


class HfClipEncoder(nn.Module):
    """Wrapper exposing a pretrained HF CLIP vision tower the same way."""

    def __init__(self, model):
        super().__init__()
        self.model = model

    def forward(self, images):
        out = self.model(pixel_values=images, output_hidden_states=True)
        # hidden_states[0] is the embedding layer output; drop it so index
        # l means "after block l+1", matching the fallback encoder.
        return out.pooler_output, list(out.hidden_states[1:])

    @property
    def num_layers(self) -> int:
        return self.model.config.num_hidden_layers


def load_clip() -> tuple[nn.Module, dict]:
    name = os.environ.get("STROKEFORGE_CLIP_MODEL", "")
    if name:
        try:
            from transformers import CLIPVisionModel

            model = CLIPVisionModel.from_pretrained(name)
            model.eval()
            log.info("loaded pretrained CLIP vision tower %s", name)
            return HfClipEncoder(model), {"clip_model": name, "clip_pretrained": True}
        except Exception as exc:  # noqa: BLE001 - fall back to the seeded encoder
            log.warning("could not load CLIP %s (%s); using seeded encoder", name, exc)
    torch.manual_seed(1234)
    model = VisionTransformer()
    model.eval()
    return model, {"clip_model": "vit-192x8-seeded", "clip_pretrained": False}


def load_vgg16() -> tuple[nn.Module, dict]:
    try:
        weights = torchvision.models.VGG16_Weights.IMAGENET1K_V1
        features = torchvision.models.vgg16(weights=weights).features
        info = {"vgg_model": "vgg16-imagenet", "vgg_pretrained": True}
        log.info("loaded pretrained VGG16")
    except Exception as exc:  # noqa: BLE001 - offline sandbox: seeded weights
        log.warning("could not load pretrained VGG16 (%s); using seeded weights", exc)
        torch.manual_seed(4321)
        features = torchvision.models.vgg16(weights=None).features
        # With random filters the ReLU/MaxPool kinks sit arbitrarily close
        # to zero, which wrecks finite-difference checks of the gradients;
        # the seeded stand-in therefore uses their smooth counterparts.
        for i, layer in enumerate(features):
            if isinstance(layer, nn.ReLU):
                features[i] = nn.Softplus(beta=25.0)
            elif isinstance(layer, nn.MaxPool2d):
                features[i] = nn.AvgPool2d(kernel_size=2, stride=2)
        info = {"vgg_model": "vgg16-seeded-smooth", "vgg_pretrained": False}
    features.eval()
    return features, info


def imagenet_normalize(images: torch.Tensor) -> torch.Tensor:
    return (images - _IMAGENET_MEAN) / _IMAGENET_STD


def vgg_activations(features: nn.Module, images: torch.Tensor,
                    taps: list[int]) -> list[torch.Tensor]:
    """Run vgg.features collecting the activations at the given indices."""
    out = []
    x = imagenet_normalize(images)
    last = max(taps)
    for i, layer in enumerate(features):
        x = layer(x)
        if i in taps:
            out.append(x)
        if i == last:
            break
    return out
