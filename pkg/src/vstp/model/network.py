"""Grid encoder and the three structurally identical decoders."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import ConfigError
from .config import DECODERS, ModelConfig


@dataclass
class VisualEmbeddings:
    v: torch.Tensor  # (B, n, d)

    @property
    def n(self) -> int:
        return self.v.shape[-2]

    @property
    def d(self) -> int:
        return self.v.shape[-1]


class GridEncoder(nn.Module):
    """Strided patch projection, learned positions, then pre-LN self-attention."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.patch = nn.Conv2d(cfg.channels, cfg.d, kernel_size=cfg.stride, stride=cfg.stride)
        self.pos = nn.Parameter(torch.randn(cfg.n_embeddings, cfg.d) * 0.02)
        self.layers = nn.ModuleList(
            nn.TransformerEncoderLayer(cfg.d, cfg.heads, cfg.d * cfg.mlp_factor, dropout=0.0,
                                       batch_first=True, norm_first=True)
            for _ in range(cfg.enc_layers))
        self.norm = nn.LayerNorm(cfg.d)

    def forward(self, grid: torch.Tensor) -> torch.Tensor:
        # grid: (B, H, W, C)
        g, c = self.cfg.grid_size, self.cfg.channels
        if grid.dim() != 4 or tuple(grid.shape[1:]) != (g, g, c):
            raise ConfigError(f"expected grids of shape (B, {g}, {g}, {c}), got {tuple(grid.shape)}")
        x = self.patch(grid.permute(0, 3, 1, 2)).flatten(2).transpose(1, 2) + self.pos
        for layer in self.layers:
            x = layer(x)
        return self.norm(x)


class CoordFeatures(nn.Module):
    """Fixed Fourier features of a coordinate token's value, projected to d; zero for other tokens.

    They give the decoder a smooth notion of "left of" and "above", which window
    prompts rely on.
    """

    def __init__(self, n_bins: int, n_freq: int, d: int):
        super().__init__()
        self.n_bins = n_bins
        u = (torch.arange(n_bins, dtype=torch.float64) + 0.5) / n_bins
        freqs = 2.0 ** torch.arange(n_freq, dtype=torch.float64) * math.pi
        feats = torch.cat([u[:, None], torch.sin(u[:, None] * freqs), torch.cos(u[:, None] * freqs)], dim=1)
        self.register_buffer("table", feats.float(), persistent=False)
        self.proj = nn.Linear(feats.shape[1], d)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        is_coord = ids < self.n_bins
        feats = self.table[ids.clamp(max=self.n_bins - 1)]
        return self.proj(feats) * is_coord.unsqueeze(-1).to(feats.dtype)


class Decoder(nn.Module):
    """Token + coordinate + positional embeddings, pre-LN decoder layers, full-vocabulary head."""

    def __init__(self, cfg: ModelConfig, max_len: int):
        super().__init__()
        self.max_len = max_len
        self.tok = nn.Embedding(cfg.vocab_size, cfg.d)
        self.coord = CoordFeatures(cfg.n_bins, cfg.n_fourier, cfg.d)
        # each decoder owns an independently initialized positional table
        self.pos = nn.Parameter(torch.randn(max_len, cfg.d) * 0.02)
        self.layers = nn.ModuleList(
            nn.TransformerDecoderLayer(cfg.d, cfg.heads, cfg.d * cfg.mlp_factor, dropout=0.0,
                                       batch_first=True, norm_first=True)
            for _ in range(cfg.layers))
        self.norm = nn.LayerNorm(cfg.d)
        self.head = nn.Linear(cfg.d, cfg.vocab_size)

    def forward(self, s: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        n = s.shape[1]
        if n > self.max_len:
            raise ConfigError(f"input length {n} exceeds decoder max length {self.max_len}")
        x = self.tok(s) + self.coord(s) + self.pos[:n]
        mask = nn.Transformer.generate_square_subsequent_mask(n, dtype=x.dtype, device=x.device)
        for layer in self.layers:
            x = layer(x, memory, tgt_mask=mask, tgt_is_causal=True)
        return self.head(self.norm(x))


class OmniModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            self.encoder = GridEncoder(cfg)
            self.decoders = nn.ModuleDict({name: Decoder(cfg, cfg.max_len(name)) for name in DECODERS})

    def encode(self, grids) -> VisualEmbeddings:
        return VisualEmbeddings(self.encoder(as_grid_tensor(grids, self.parameters())))

    def decode(self, name: str, s: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        if name not in self.decoders:
            raise ConfigError(f"unknown decoder {name!r}; expected one of {DECODERS}")
        return self.decoders[name](s, memory)


def as_grid_tensor(grids, params=None) -> torch.Tensor:
    """Stack ImageGrids or arrays into a (B, H, W, C) tensor matching the parameter dtype."""
    dtype = next(iter(params)).dtype if params is not None else torch.float32
    if isinstance(grids, torch.Tensor):
        t = grids
    else:
        if not isinstance(grids, (list, tuple)):
            grids = [grids]
        t = torch.from_numpy(np.stack([getattr(g, "values", g) for g in grids]))
    if t.dim() == 3:
        t = t.unsqueeze(0)
    return t.to(dtype)


def encode(img, model: OmniModel) -> VisualEmbeddings:
    return model.encode(img)
