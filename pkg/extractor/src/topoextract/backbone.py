"""Vision-transformer patch-feature backbone.

The default backbone is a compact ViT with deterministically seeded weights
("vit-rand/<seed>"); pass a filesystem path as the backbone identifier to
load a trained state dict with the same architecture. Features are the patch
tokens of a chosen encoder block, which the VLAD stage aggregates.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ModelLoadError

IMAGE_SIZE = 224
PATCH_SIZE = 16
WIDTH = 192
DEPTH = 4
HEADS = 3


class EncoderBlock(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class PatchViT(nn.Module):
    """Patch embedding + transformer encoder; no class token (every output
    token corresponds to one image patch)."""

    def __init__(self, width: int = WIDTH, depth: int = DEPTH, heads: int = HEADS):
        super().__init__()
        n_patches = (IMAGE_SIZE // PATCH_SIZE) ** 2
        self.patch_embed = nn.Conv2d(3, width, kernel_size=PATCH_SIZE, stride=PATCH_SIZE)
        self.pos_embed = nn.Parameter(torch.zeros(1, n_patches, width))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(EncoderBlock(width, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor, feature_layer: int = -1) -> torch.Tensor:
        x = self.patch_embed(x).flatten(2).transpose(1, 2) + self.pos_embed
        taps = list(range(len(self.blocks)))[feature_layer]
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i == taps:
                return self.norm(x)
        return self.norm(x)


class Backbone:
    """Resolved backbone: turns an RGB image array into patch features."""

    def __init__(self, identifier: str = "vit-rand/0", feature_layer: int = -1):
        self.identifier = identifier
        self.feature_layer = feature_layer
        self.model = self._load(identifier)
        self.model.eval()
        self.width = WIDTH

    @staticmethod
    def _load(identifier: str) -> PatchViT:
        if identifier.startswith("vit-rand/"):
            try:
                seed = int(identifier.split("/", 1)[1])
            except ValueError as exc:
                raise ModelLoadError(f"bad seed in backbone id {identifier!r}") from exc
            torch.manual_seed(seed)
            return PatchViT()
        path = Path(identifier)
        if path.exists():
            model = PatchViT()
            try:
                state = torch.load(path, map_location="cpu")
                model.load_state_dict(state)
            except Exception as exc:
                raise ModelLoadError(f"cannot load weights from {path}: {exc}") from exc
            return model
        raise ModelLoadError(
            f"unknown backbone {identifier!r}; use 'vit-rand/<seed>' or a weights path"
        )

    def patch_features(self, image: np.ndarray) -> np.ndarray:
        """(n_patches, width) float32 features for one RGB uint8 image."""
        import cv2

        resized = cv2.resize(image, (IMAGE_SIZE, IMAGE_SIZE), interpolation=cv2.INTER_AREA)
        tensor = torch.from_numpy(resized).float().permute(2, 0, 1).unsqueeze(0)
        tensor = tensor / 127.5 - 1.0
        with torch.no_grad():
            tokens = self.model(tensor, self.feature_layer)
        return tokens.squeeze(0).numpy().astype(np.float32)
