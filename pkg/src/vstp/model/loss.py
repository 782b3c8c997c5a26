"""Teacher-forcing targets and the weighted negative log-likelihood objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from ..codec import StructuredSequence
from ..errors import NumericError
from ..vocab import Vocabulary

STRUCTURAL_WEIGHT = 4.0


@dataclass(frozen=True)
class TrainingTarget:
    """``s`` is the decoder input (BOS then ``ids[:-1]``), ``s_tilde`` the next-token targets."""

    s: tuple
    s_tilde: tuple
    w: tuple
    k: int
    pad_id: int = -1

    def __post_init__(self):
        if not len(self.s) == len(self.s_tilde) == len(self.w):
            raise ValueError("s, s_tilde and w must have equal lengths")

    @property
    def N(self) -> int:
        return len(self.s)


def token_weights(ids: Sequence[int], vocab: Vocabulary) -> list[float]:
    return [STRUCTURAL_WEIGHT if vocab.is_structural(i) else 1.0 for i in ids]


def make_target(seq: StructuredSequence, vocab: Vocabulary) -> TrainingTarget:
    ids = list(seq.ids)
    return TrainingTarget(tuple([vocab.bos_id] + ids[:-1]), tuple(ids), tuple(token_weights(ids, vocab)),
                          seq.k, vocab.pad_id)


@dataclass
class Batch:
    s: torch.Tensor        # (B, N) long
    s_tilde: torch.Tensor  # (B, N) long
    w: torch.Tensor        # (B, N) float, prompt and PAD positions already zeroed
    k: torch.Tensor        # (B,) long


def collate(targets: Sequence[TrainingTarget], pad_id: int, dtype=torch.float32) -> Batch:
    n = max(t.N for t in targets)
    b = len(targets)
    s = torch.full((b, n), pad_id, dtype=torch.long)
    st = torch.full((b, n), pad_id, dtype=torch.long)
    w = torch.zeros((b, n), dtype=dtype)
    for i, t in enumerate(targets):
        s[i, :t.N] = torch.tensor(t.s)
        st[i, :t.N] = torch.tensor(t.s_tilde)
        w[i, :t.N] = torch.tensor(t.w, dtype=dtype)
    k = torch.tensor([t.k for t in targets])
    return Batch(s, st, effective_weights(w, st, k, pad_id), k)


def effective_weights(w: torch.Tensor, s_tilde: torch.Tensor, k, pad_id: int) -> torch.Tensor:
    """Zero the weight of prompt positions (j < k) and PAD targets."""
    n = s_tilde.shape[-1]
    pos = torch.arange(n)
    k = torch.as_tensor(k).reshape(-1, 1) if s_tilde.dim() == 2 else torch.as_tensor(k)
    keep = (pos >= k) & (s_tilde != pad_id)
    return w * keep.to(w.dtype)


def weighted_nll_loss(logits: torch.Tensor, target: TrainingTarget | Batch, normalize: bool = False) -> torch.Tensor:
    """``sum_j w_j * -log softmax(logits_j)[s_tilde_j]`` over positions ``j >= k`` with non-PAD targets.

    ``logits`` is (N, V) for a single TrainingTarget or (B, N, V) for a Batch.
    With ``normalize`` the sum is divided by the total effective weight.
    """
    if not torch.isfinite(logits).all():
        raise NumericError("non-finite logits")
    if isinstance(target, TrainingTarget):
        st = torch.tensor(target.s_tilde)
        w = effective_weights(torch.tensor(target.w, dtype=logits.dtype), st, target.k, target.pad_id)
    else:
        st, w = target.s_tilde, target.w.to(logits.dtype)
    if logits.shape[:-1] != st.shape:
        raise ValueError(f"logits {tuple(logits.shape)} do not match targets {tuple(st.shape)}")
    logp = F.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, st.clamp(min=0).unsqueeze(-1)).squeeze(-1)
    # masked positions may carry -inf log-probs; select rather than multiply so they stay out
    total = torch.where(w > 0, w * nll, torch.zeros_like(nll)).sum()
    if normalize:
        total = total / w.sum().clamp(min=1e-12)
    return total
