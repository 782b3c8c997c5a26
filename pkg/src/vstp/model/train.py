"""Joint teacher-forced training of the encoder and the three decoders."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from ..codec import PromptSpec, build_content_sequence, build_region_sequence, build_stage1
from ..errors import ConfigError, NumericError, TrainingError
from ..geometry import full_window
from ..prompting import filter_by_prefix, filter_by_spatial, sample_prefix_window, sample_spatial_window
from ..synth import Sample, SynthConfig, render_feature_grid
from ..table import build_table_content_targets, build_table_sequence
from ..vocab import FULL_PREFIX, Vocabulary
from .config import ModelConfig, TrainConfig
from .decode import greedy_decode
from .loss import TrainingTarget, collate, make_target, weighted_nll_loss
from .network import OmniModel, as_grid_tensor

log = logging.getLogger(__name__)


@dataclass
class Example:
    """One training image with its precomputed stage-2 targets."""

    sample: Sample
    grid: np.ndarray
    region: list = field(default_factory=list)   # TrainingTarget per instance
    content: list = field(default_factory=list)  # TrainingTarget per instance / filled cell


def prepare(samples: Sequence[Sample], vocab: Vocabulary, synth_cfg: SynthConfig | None = None) -> list[Example]:
    synth_cfg = synth_cfg or SynthConfig()
    out = []
    for s in samples:
        ex = Example(s, render_feature_grid(s, synth_cfg).values)
        if s.table is not None:
            ex.content = [make_target(q, vocab) for q in build_table_content_targets(s.table, vocab)]
        else:
            ex.region = [make_target(build_region_sequence(i, vocab), vocab) for i in s.instances]
            ex.content = [make_target(build_content_sequence(i, vocab), vocab) for i in s.instances if i.text]
        out.append(ex)
    return out


def stage1_sequence(sample: Sample, vocab: Vocabulary, prompt: PromptSpec | None = None):
    """Stage-1 ground truth; for prompted tasks only instances passing the prompt are kept."""
    if sample.table is not None:
        return build_table_sequence(sample.table, vocab)
    instances = sample.instances
    if sample.task in ("spotting", "kie") and prompt is not None:
        window = prompt.window if prompt.window is not None else full_window(vocab.quantizer)
        instances = filter_by_prefix(filter_by_spatial(instances, window, vocab.quantizer), prompt.prefix)
    return build_stage1(instances, sample.task, vocab, prompt)


def sample_prompt(rng: random.Random, vocab: Vocabulary, tc: TrainConfig) -> PromptSpec:
    window = sample_spatial_window(rng, vocab.quantizer) if tc.spatial_prompting else None
    prefix = sample_prefix_window(rng, vocab) if tc.prefix_prompting else FULL_PREFIX
    return PromptSpec(window, prefix)


def lr_factor(step: int, tc: TrainConfig) -> float:
    """Linear warmup to 1, then linear decay to 0 at the last step."""
    if tc.warmup and step < tc.warmup:
        return (step + 1) / tc.warmup
    span = max(1, tc.steps - tc.warmup)
    return max(0.0, 1.0 - (step - tc.warmup) / span)


def _optimizer(model: OmniModel, tc: TrainConfig):
    if tc.optimizer == "sgd":
        return torch.optim.SGD(model.parameters(), lr=tc.lr, momentum=tc.momentum, weight_decay=tc.weight_decay)
    return torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)


def _stage2_loss(model, name, examples, idx, memory, pad_id, picks=None):
    targets, rows = [], []
    for row, i in enumerate(idx):
        pool = getattr(examples[i], name)
        chosen = pool if picks is None else [pool[j] for j in picks[row] if j < len(pool)]
        for t in chosen:
            targets.append(t)
            rows.append(row)
    if not targets:
        return None
    batch = collate(targets, pad_id)
    logits = model.decode(name, batch.s, memory[torch.tensor(rows)])
    return weighted_nll_loss(logits, batch, normalize=True)


def batch_loss(model: OmniModel, examples: Sequence[Example], idx: Sequence[int], stage1: Sequence[TrainingTarget],
               vocab: Vocabulary, picks: Sequence[Sequence[int]] | None = None,
               stage1_rows: Sequence[int] | None = None) -> tuple[torch.Tensor, dict]:
    """Sum of the three per-decoder losses, each normalized by its weight total.

    ``stage1_rows[j]`` is the batch row whose image ``stage1[j]`` belongs to (default: j).
    ``picks[row]`` optionally restricts stage 2 to the listed instance indices of that image.
    """
    memory = model.encoder(as_grid_tensor([examples[i].grid for i in idx], model.parameters()))
    parts = {}
    b = collate(stage1, vocab.pad_id)
    mem1 = memory if stage1_rows is None else memory[torch.tensor(stage1_rows)]
    parts["structured"] = weighted_nll_loss(model.decode("structured", b.s, mem1), b, normalize=True)
    for name in ("region", "content"):
        loss = _stage2_loss(model, name, examples, idx, memory, vocab.pad_id, picks)
        if loss is not None:
            parts[name] = loss
    return sum(parts.values()), {k: float(v.detach()) for k, v in parts.items()}


def _pick(rng: np.random.Generator, n: int, cap: int) -> list[int]:
    if n <= cap:
        return list(range(n))
    return sorted(rng.choice(n, size=cap, replace=False).tolist())


@dataclass
class TrainResult:
    model: OmniModel
    losses: list
    steps: int
    parts: list = field(default_factory=list)


def train(samples: Sequence[Sample], vocab: Vocabulary, mc: ModelConfig | None = None,
          tc: TrainConfig | None = None, synth_cfg: SynthConfig | None = None,
          model: OmniModel | None = None,
          callback: Callable[[int, OmniModel, list], bool] | None = None,
          eval_every: int = 250) -> TrainResult:
    """Mini-batch training with a warmup-then-linear-decay schedule.

    ``callback(step, model, examples)`` runs every ``eval_every`` steps and may
    return True to stop early. Deterministic given the configs' seeds.
    """
    if not samples:
        raise ConfigError("cannot train on an empty corpus")
    tc = tc or TrainConfig()
    mc = mc or ModelConfig(vocab_size=len(vocab), n_bins=vocab.n_bins)
    if mc.vocab_size != len(vocab) or mc.n_bins != vocab.n_bins:
        raise ConfigError(f"model vocab ({mc.vocab_size}, n_bins={mc.n_bins}) does not match {vocab!r}")
    examples = prepare(samples, vocab, synth_cfg)
    model = model or OmniModel(mc)
    model.train()
    opt = _optimizer(model, tc)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: lr_factor(s, tc))
    np_rng = np.random.default_rng(tc.seed)
    prompt_rng = random.Random(tc.seed)
    bs = min(tc.batch_size, len(examples))
    order, cursor = np_rng.permutation(len(examples)), 0
    losses, parts_log = [], []
    step = 0
    for step in range(1, tc.steps + 1):
        if cursor + bs > len(order):
            order, cursor = np_rng.permutation(len(examples)), 0
        idx = order[cursor:cursor + bs].tolist()
        cursor += bs
        stage1, rows = [], []
        for row, i in enumerate(idx):
            s = examples[i].sample
            prompted = s.task in ("spotting", "kie")
            for _ in range(tc.prompts_per_image if prompted else 1):
                prompt = sample_prompt(prompt_rng, vocab, tc) if prompted else None
                stage1.append(make_target(stage1_sequence(s, vocab, prompt), vocab))
                rows.append(row)
        picks = None
        if tc.stage2_per_image is not None:
            picks = [_pick(np_rng, max(len(examples[i].region), len(examples[i].content)), tc.stage2_per_image)
                     for i in idx]
        try:
            loss, parts = batch_loss(model, examples, idx, stage1, vocab, picks, rows)
        except NumericError as exc:
            raise TrainingError(f"training diverged at step {step}: {exc}") from exc
        if not math.isfinite(float(loss.detach())):
            raise TrainingError(f"loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        if tc.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), tc.grad_clip)
        opt.step()
        sched.step()
        losses.append(float(loss.detach()))
        parts_log.append(parts)
        if tc.log_every and step % tc.log_every == 0:
            log.info("step %d loss %.4f %s", step, losses[-1], parts)
        if callback is not None and step % eval_every == 0 and callback(step, model, examples):
            break
        model.train()
    model.eval()
    return TrainResult(model, losses, step, parts_log)


# ---------------------------------------------------------------------------
# evaluation helpers

@torch.no_grad()
def teacher_forced_accuracy(model: OmniModel, examples: Sequence[Example], vocab: Vocabulary,
                            batch_size: int = 32) -> dict:
    """Argmax accuracy on loss-bearing positions, per decoder and pooled, with default prompts."""
    model.eval()
    hits = {"structured": 0, "region": 0, "content": 0}
    total = dict.fromkeys(hits, 0)
    for lo in range(0, len(examples), batch_size):
        idx = list(range(lo, min(lo + batch_size, len(examples))))
        memory = model.encoder(as_grid_tensor([examples[i].grid for i in idx], model.parameters()))
        groups = {"structured": ([make_target(stage1_sequence(examples[i].sample, vocab, PromptSpec()), vocab)
                                  for i in idx], list(range(len(idx))))}
        for name in ("region", "content"):
            ts, rows = [], []
            for row, i in enumerate(idx):
                ts += getattr(examples[i], name)
                rows += [row] * len(getattr(examples[i], name))
            groups[name] = (ts, rows)
        for name, (ts, rows) in groups.items():
            if not ts:
                continue
            b = collate(ts, vocab.pad_id)
            pred = model.decode(name, b.s, memory[torch.tensor(rows)]).argmax(-1)
            mask = b.w > 0
            hits[name] += int(((pred == b.s_tilde) & mask).sum())
            total[name] += int(mask.sum())
    out = {name: hits[name] / total[name] for name in hits if total[name]}
    out["pooled"] = sum(hits.values()) / max(1, sum(total.values()))
    return out


@torch.no_grad()
def stage1_exact_match(model: OmniModel, examples: Sequence[Example], vocab: Vocabulary,
                       prompt: PromptSpec | None = None, batch_size: int = 64) -> float:
    """Fraction of examples whose greedy stage-1 output equals the ground-truth sequence."""
    model.eval()
    prompt = prompt or PromptSpec()
    hits = 0
    for lo in range(0, len(examples), batch_size):
        chunk = examples[lo:lo + batch_size]
        gts = [stage1_sequence(e.sample, vocab, prompt) for e in chunk]
        memory = model.encoder(as_grid_tensor([e.grid for e in chunk], model.parameters()))
        for k in sorted({g.k for g in gts}):
            rows = [j for j, g in enumerate(gts) if g.k == k]
            outs = greedy_decode(model, "structured", [list(gts[j].ids[:k]) for j in rows],
                                 memory[torch.tensor(rows)], vocab.bos_id, vocab.eos_id,
                                 max_len=max(len(gts[j].ids) for j in rows) + 1)
            hits += sum(o.ids == list(gts[j].ids) for o, j in zip(outs, rows))
    return hits / len(examples)
