"""Checkpoint files.

A checkpoint is a NumPy ``.npz`` archive. Every parameter tensor is stored
under its ``state_dict`` name as float32; the entry ``__header__`` holds a JSON
document::

    {"format": "vstp-checkpoint", "version": 1,
     "model": <ModelConfig fields>, "vocab": <Vocabulary.to_dict()>, "extra": {...}}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError
from ..vocab import Vocabulary
from .config import ModelConfig
from .network import OmniModel

FORMAT = "vstp-checkpoint"
VERSION = 1
HEADER_KEY = "__header__"


def save_checkpoint(path, model: OmniModel, vocab: Vocabulary, extra: dict | None = None) -> None:
    header = {"format": FORMAT, "version": VERSION, "model": model.cfg.to_dict(),
              "vocab": vocab.to_dict(), "extra": extra or {}}
    arrays = {k: v.detach().cpu().float().numpy() for k, v in model.state_dict().items()}
    if HEADER_KEY in arrays:
        raise ConfigError(f"parameter name {HEADER_KEY!r} is reserved")
    arrays[HEADER_KEY] = np.array(json.dumps(header, sort_keys=True))
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[OmniModel, Vocabulary, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        if HEADER_KEY not in data.files:
            raise ConfigError(f"{path}: not a vstp checkpoint (no header)")
        header = json.loads(str(data[HEADER_KEY]))
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint format {header.get('format')} "
                              f"v{header.get('version')}")
        state = {k: torch.from_numpy(data[k].copy()) for k in data.files if k != HEADER_KEY}
    model = OmniModel(ModelConfig.from_dict(header["model"]))
    model.load_state_dict(state)
    model.eval()
    return model, Vocabulary.from_dict(header["vocab"]), header.get("extra", {})
