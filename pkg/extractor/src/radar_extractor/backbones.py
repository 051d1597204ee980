"""Frozen backbones that expose per-block hidden states.

Two families:

* ``toy-vision`` / ``toy-text``: small, seeded transformer-style encoders
  built locally.  They need no downloads, are deterministic in eval mode,
  and exist so extraction jobs can run in offline environments and tests.
* Any other model id is treated as a Hugging Face checkpoint and loaded via
  ``transformers`` with ``output_hidden_states=True``.

Every backbone returns one matrix per layer (embedding output plus each
block's output), pooled by ``cls`` (first token) or ``mean`` over tokens.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .datasets import Dataset, image_to_array

TOY_MODELS = ("toy-vision", "toy-text")
_TOY_SEED = 1234
_TOY_DIM = 32
_TOY_BLOCKS = 4
_TOY_IMAGE_SIZE = 32
_TOY_PATCH = 8
_TOY_VOCAB = 512


class _ToyBlock(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, num_heads=4, batch_first=True)
        self.norm1 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * 2), nn.GELU(), nn.Linear(dim * 2, dim))
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        attn_out, _ = self.attn(x, x, x, need_weights=False)
        x = self.norm1(x + attn_out)
        return self.norm2(x + self.mlp(x))


class _ToyEncoder(nn.Module):
    """Seeded random-weight encoder emitting all hidden states."""

    def __init__(self, token_dim: int):
        super().__init__()
        torch.manual_seed(_TOY_SEED)
        self.embed = nn.Linear(token_dim, _TOY_DIM)
        self.cls_token = nn.Parameter(torch.randn(1, 1, _TOY_DIM))
        self.blocks = nn.ModuleList(_ToyBlock(_TOY_DIM) for _ in range(_TOY_BLOCKS))
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, tokens: torch.Tensor) -> list[torch.Tensor]:
        x = self.embed(tokens)
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1)
        states = [x]
        for block in self.blocks:
            x = block(x)
            states.append(x)
        return states


def _text_tokens(text: str) -> np.ndarray:
    """Hashed byte-trigram token sequence (length 16, one-hot-ish rows)."""
    data = text.encode("utf-8") or b" "
    grams = [data[i : i + 3] for i in range(max(len(data) - 2, 1))]
    rows = np.zeros((16, _TOY_VOCAB), dtype=np.float32)
    for i, gram in enumerate(grams[:160]):
        bucket = int.from_bytes(hashlib.blake2b(gram, digest_size=4).digest(), "little")
        rows[i % 16, bucket % _TOY_VOCAB] += 1.0
    rows /= max(np.abs(rows).max(), 1.0)
    return rows


class ToyBackbone:
    def __init__(self, kind: str):
        self.kind = kind
        token_dim = _TOY_PATCH * _TOY_PATCH if kind == "toy-vision" else _TOY_VOCAB
        self.encoder = _ToyEncoder(token_dim)

    @property
    def num_layers(self) -> int:
        return _TOY_BLOCKS + 1  # embedding output plus each block

    def tokens_for(self, batch: list, dataset_kind: str) -> torch.Tensor:
        if self.kind == "toy-vision":
            arrays = []
            for payload in batch:
                img = image_to_array(Path(payload), _TOY_IMAGE_SIZE)
                patches = (
                    img.reshape(
                        _TOY_IMAGE_SIZE // _TOY_PATCH, _TOY_PATCH,
                        _TOY_IMAGE_SIZE // _TOY_PATCH, _TOY_PATCH,
                    )
                    .transpose(0, 2, 1, 3)
                    .reshape(-1, _TOY_PATCH * _TOY_PATCH)
                )
                arrays.append(patches)
            return torch.from_numpy(np.stack(arrays))
        return torch.from_numpy(np.stack([_text_tokens(t) for t in batch]))

    @torch.no_grad()
    def hidden_states(self, batch: list, dataset_kind: str, pooling: str) -> list[np.ndarray]:
        states = self.encoder(self.tokens_for(batch, dataset_kind))
        return [_pool(s, pooling) for s in states]


def _pool(state: torch.Tensor, pooling: str) -> np.ndarray:
    if pooling == "cls":
        out = state[:, 0]
    elif pooling == "mean":
        out = state.mean(dim=1)
    else:
        raise ValueError(f"pooling must be 'cls' or 'mean', got {pooling!r}")
    return out.float().cpu().numpy()


class HfBackbone:
    """Hugging Face checkpoint wrapper (vision or text, auto-detected)."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from transformers import AutoConfig, AutoModel
        except ImportError as exc:  # pragma: no cover
            raise RuntimeError(
                "transformers is required for Hugging Face checkpoints; "
                "pip install radar-extractor[hf]"
            ) from exc
        self.model_id = model_id
        self.device = device
        config = AutoConfig.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id, output_hidden_states=True)
        self.model.eval().to(device)
        self.is_vision = any(
            hasattr(config, attr) for attr in ("image_size", "vision_config")
        )
        if self.is_vision:
            from transformers import AutoImageProcessor

            self.processor = AutoImageProcessor.from_pretrained(model_id)
        else:
            from transformers import AutoTokenizer

            self.processor = AutoTokenizer.from_pretrained(model_id)

    @torch.no_grad()
    def hidden_states(self, batch: list, dataset_kind: str, pooling: str) -> list[np.ndarray]:
        if self.is_vision:
            from PIL import Image

            images = [Image.open(p).convert("RGB") for p in batch]
            inputs = self.processor(images=images, return_tensors="pt").to(self.device)
        else:
            inputs = self.processor(
                list(batch), return_tensors="pt", padding=True, truncation=True,
                max_length=128,
            ).to(self.device)
        out = self.model(**inputs)
        return [_pool(s, pooling) for s in out.hidden_states]


def load_backbone(model_id: str, device: str = "cpu"):
    if model_id in TOY_MODELS:
        return ToyBackbone(model_id)
    return HfBackbone(model_id, device=device)
