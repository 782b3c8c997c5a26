from __future__ import annotations

from typing import NamedTuple, Sequence

import torch

from ..errors import ConfigError
from .network import OmniModel


class Decoded(NamedTuple):
    ids: list          # prompt followed by generated tokens (EOS included when emitted)
    truncated: bool    # max_len reached without EOS


@torch.no_grad()
def greedy_decode(model: OmniModel, decoder: str, prompts: Sequence[Sequence[int]], memory: torch.Tensor,
                  bos_id: int, eos_id: int, max_len: int | None = None) -> list[Decoded]:
    """Argmax continuation of equal-length prompts, one row per prompt.

    ``memory`` is (B, n, d) visual embeddings aligned with ``prompts``. Input
    at step t is BOS followed by the tokens so far; rows stop at EOS.
    """
    max_len = max_len or model.cfg.max_len(decoder)
    if not prompts:
        return []
    k = len(prompts[0])
    if any(len(p) != k for p in prompts):
        raise ConfigError("greedy_decode needs prompts of equal length")
    if k >= max_len:
        raise ConfigError(f"prompt length {k} leaves no room under max_len {max_len}")
    if memory.shape[0] != len(prompts):
        raise ConfigError(f"{memory.shape[0]} memories for {len(prompts)} prompts")
    was_training = model.training
    model.eval()
    b = len(prompts)
    ids = torch.tensor([list(p) for p in prompts], dtype=torch.long).reshape(b, k)
    bos = torch.full((b, 1), bos_id, dtype=torch.long)
    done = torch.zeros(b, dtype=torch.bool)
    while ids.shape[1] < max_len and not done.all():
        logits = model.decode(decoder, torch.cat([bos, ids], dim=1), memory)
        nxt = logits[:, -1].argmax(-1)
        nxt = torch.where(done, torch.full_like(nxt, eos_id), nxt)
        ids = torch.cat([ids, nxt[:, None]], dim=1)
        done |= nxt == eos_id
    model.train(was_training)
    out = []
    for row in ids.tolist():
        gen = row[k:]
        if eos_id in gen:
            out.append(Decoded(row[:k + gen.index(eos_id) + 1], False))
        else:
            out.append(Decoded(row, True))
    return out
