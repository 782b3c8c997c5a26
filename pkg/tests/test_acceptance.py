"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to watch the lines as they
arrive; they also land in the captured output of the full run.
"""

import math
import random
import time

import numpy as np
import pytest
import torch

from oracles import brute_force_ted, random_tree
from vstp.codec import PromptSpec, StructuredSequence, build_stage1, entity_groups, hierarchy, parse_stage1
from vstp.geometry import Window, dequantize_coord, quantize_array, quantize_point
from vstp.metrics import (
    entity_tree,
    field_f1,
    nted_accuracy,
    spotting_eval,
    teds,
    tree_edit_distance,
)
from vstp.model import (
    ModelConfig,
    TrainConfig,
    TrainingTarget,
    greedy_decode,
    infer_document,
    make_target,
    prepare,
    stage1_exact_match,
    teacher_forced_accuracy,
    train,
    weighted_nll_loss,
)
from vstp.model.network import OmniModel
from vstp.prompting import draw_spatial_window, enumerate_fixed_windows
from vstp.synth import SynthConfig, generate_corpus, render_feature_grid
from vstp.table import assemble_html, grid_to_structure_tokens, html_to_grid, structure_tokens_to_grid
from vstp.vocab import build_vocab

QUADRANTS = [Window(0, 0, 500, 500), Window(0, 500, 500, 999), Window(500, 0, 999, 500), Window(500, 500, 999, 999)]


def verdict(n: int, title: str, ok: bool, detail: str, capsys) -> None:
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, f"criterion {n} failed: {detail}"


def test_1_quantizer(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    xs = rng.uniform(0.0, 1.0, 10_000)
    tokens = quantize_array(xs)
    back = np.array([dequantize_coord(int(t)) for t in tokens])
    worst = float(np.max(np.abs(back - xs)))
    sweep = np.sort(rng.uniform(0.0, 1.0, 10_000))
    monotone = bool(np.all(np.diff(quantize_array(sweep)) >= 0))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.5 / 1000 + 1e-12 and monotone and elapsed < 1.0
    verdict(1, "quantizer error bound and monotonicity", ok,
            f"max error {worst:.3e}, monotone={monotone}, {elapsed:.2f}s", capsys)


def test_2_spatial_sampler(capsys):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    fixed = set(enumerate_fixed_windows())
    n, default, fixed_ok, area_ok = 100_000, 0, True, True
    for _ in range(n):
        d = draw_spatial_window(rng)
        if d.mode == "default":
            default += 1
        elif d.mode == "fixed":
            fixed_ok &= d.window in fixed
        else:
            area_ok &= d.rect[0] * d.rect[1] >= 333 ** 2
    elapsed = time.perf_counter() - t0
    frac = default / n
    ok = 0.39 <= frac <= 0.41 and len(fixed) == 35 and fixed_ok and area_ok and elapsed < 5.0
    verdict(2, "spatial sampler fidelity", ok,
            f"default fraction {frac:.4f}, {len(fixed)} fixed windows, fixed ok={fixed_ok}, "
            f"area ok={area_ok}, {elapsed:.2f}s", capsys)


def _quantized(insts, vocab):
    return [quantize_point(i.center, vocab.quantizer) for i in insts]


def test_3_codec_roundtrips(capsys):
    t0 = time.perf_counter()
    cfg = SynthConfig(seed=3)
    failures = {}
    for task in ("spotting", "kie", "hiertext"):
        vocab = build_vocab(task=task, entities=cfg.entities if task == "kie" else ())
        bad = 0
        for s in generate_corpus(cfg, 1000, task):
            parsed = parse_stage1(build_stage1(s.instances, task, vocab), task, vocab)
            if task == "kie":
                want = [(g, _quantized(m, vocab)) for g, m in entity_groups(s.instances, vocab)]
                got = [(g, list(p)) for g, p in parsed.entities]
            elif task == "hiertext":
                want = [[_quantized(line, vocab) for line in para] for para in hierarchy(s.instances, vocab)]
                got = parsed.paragraphs
            else:
                want, got = sorted(_quantized(s.instances, vocab)), sorted(parsed.points)
            bad += want != got or bool(parsed.diagnostics)
        failures[task] = bad
    elapsed = time.perf_counter() - t0
    ok = not any(failures.values()) and elapsed < 10.0
    verdict(3, "codec roundtrips (1000 samples per task)", ok, f"failures {failures}, {elapsed:.2f}s", capsys)


def test_4_table_fixpoint(capsys):
    t0 = time.perf_counter()
    cfg = SynthConfig(seed=4, table_rows=(1, 6), table_cols=(1, 6), max_span=3, span_prob=0.35)
    bad, min_steds = 0, 1.0
    for s in generate_corpus(cfg, 500, "table"):
        html = assemble_html(s.table)
        grid = html_to_grid(html)
        back, diags = structure_tokens_to_grid(grid_to_structure_tokens(grid))
        html2 = assemble_html(back, [c.text for c in grid.filled_cells()])
        score = teds(html, html2, structure_only=True)
        min_steds = min(min_steds, score)
        bad += bool(diags) or score != 1.0 or back.structure() != grid.structure() \
            or grid.structure() != s.table.structure()
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 20.0
    verdict(4, "table pipeline fixpoint (500 grids)", ok,
            f"{bad} failures, min S-TEDS {min_steds:.4f}, {elapsed:.2f}s", capsys)


def test_5_teds_oracle(capsys):
    t0 = time.perf_counter()
    rng = random.Random(5)
    worst = 0.0
    for _ in range(200):
        a, b = random_tree(rng, rng.randint(1, 5)), random_tree(rng, rng.randint(1, 5))
        worst = max(worst, abs(tree_edit_distance(a, b) - brute_force_ted(a, b)))
    two = "<table><tbody><tr><td>a</td><td>b</td></tr></tbody></table>"
    one = "<table><tbody><tr><td>a</td></tr></tbody></table>"
    same, partial = teds(two, two), teds(one, two)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and same == 1.0 and partial == 0.8 and elapsed < 30.0
    verdict(5, "TED matches exhaustive oracle", ok,
            f"max |delta| {worst:.1e}, teds(t,t)={same}, 2-vs-1 cell={partial}, {elapsed:.2f}s", capsys)


def test_6_loss_contract(capsys):
    t0 = time.perf_counter()
    vocab = build_vocab(task="table")
    ids = [vocab.token_id("<tbody>"), vocab.token_id("<tr>"), 250, 500, vocab.token_id("</tr>"), vocab.eos_id]
    t = make_target(StructuredSequence(tuple(ids), 1, "table"), vocab)
    one_hot = torch.zeros(t.N, len(vocab), dtype=torch.float64)
    one_hot[torch.arange(t.N), torch.tensor(t.s_tilde)] = 1000.0
    zero = weighted_nll_loss(one_hot, t).item()

    gen = torch.Generator().manual_seed(6)
    logits = torch.randn(t.N, len(vocab), dtype=torch.float64, generator=gen)
    base = weighted_nll_loss(logits, t).item()
    poked = logits.clone()
    poked[0] = torch.randn(len(vocab), dtype=torch.float64, generator=gen) * 100
    prompt_invariant = weighted_nll_loss(poked, t).item() == base
    padded = TrainingTarget(t.s + (vocab.pad_id,), t.s_tilde + (vocab.pad_id,), t.w + (1.0,), t.k, vocab.pad_id)
    pad_logits = torch.cat([logits, torch.randn(1, len(vocab), dtype=torch.float64, generator=gen) * 100])
    pad_invariant = weighted_nll_loss(pad_logits, padded).item() == base

    single = make_target(StructuredSequence((vocab.token_id("<tr>"),), 0, "table"), vocab)
    row = torch.randn(1, len(vocab), dtype=torch.float64, generator=gen)
    p = torch.softmax(row, -1)[0, vocab.token_id("<tr>")].item()
    structural_err = abs(weighted_nll_loss(row, single).item() - (-4.0 * math.log(p)))

    rel = _gradient_check()
    elapsed = time.perf_counter() - t0
    ok = (zero == 0.0 and prompt_invariant and pad_invariant and structural_err <= 1e-9 and rel <= 1e-4
          and elapsed < 60)
    verdict(6, "weighted NLL contract and gradient check", ok,
            f"one-hot loss {zero}, prompt-invariant={prompt_invariant}, pad-invariant={pad_invariant}, "
            f"structural |err| {structural_err:.1e}, grad rel err {rel:.1e}, {elapsed:.2f}s", capsys)


def _gradient_check() -> float:
    vocab = build_vocab()
    cfg = ModelConfig(d=8, layers=1, heads=2, enc_layers=1, structured_len=40, content_len=20,
                      vocab_size=len(vocab), n_bins=vocab.n_bins)
    model = OmniModel(cfg).double()
    (s,) = generate_corpus(SynthConfig(seed=6), 1, "spotting")
    grid = render_feature_grid(s, SynthConfig())
    seq = build_stage1(s.instances, "spotting", vocab)
    t = make_target(seq, vocab)
    s_in = torch.tensor([t.s])

    def loss_fn():
        return weighted_nll_loss(model.decode("structured", s_in, model.encode(grid).v)[0], t)

    model.zero_grad()
    loss_fn().backward()
    rng = random.Random(6)
    params = [p for p in model.parameters() if p.grad is not None]
    analytic, numeric = [], []
    with torch.no_grad():
        for _ in range(60):
            p = rng.choice(params)
            i = rng.randrange(p.numel())
            flat = p.view(-1)
            old = flat[i].item()
            flat[i] = old + 1e-6
            up = loss_fn().item()
            flat[i] = old - 1e-6
            down = loss_fn().item()
            flat[i] = old
            numeric.append((up - down) / 2e-6)
            analytic.append(p.grad.view(-1)[i].item())
    a, n = np.array(analytic), np.array(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-30))


# ---------------------------------------------------------------------------
# desk-scale training runs

SPOTTING_CORPUS = dict(seed=0, n=64)


def spotting_corpus():
    return generate_corpus(SynthConfig(seed=SPOTTING_CORPUS["seed"]), SPOTTING_CORPUS["n"], "spotting")


@pytest.mark.slow
def test_7_two_stage_reproduction(capsys):
    t0 = time.perf_counter()
    vocab = build_vocab()
    samples = spotting_corpus()
    mc = ModelConfig(vocab_size=len(vocab), n_bins=vocab.n_bins)
    tc = TrainConfig(steps=1000, batch_size=16, lr=1e-3, warmup=100, spatial_prompting=False, log_every=0)
    history = []

    def check(step, model, examples):
        acc = teacher_forced_accuracy(model, examples, vocab)["pooled"]
        em = stage1_exact_match(model, examples, vocab)
        history.append((step, acc, em))
        return acc >= 0.95 and em >= 0.90

    result = train(samples, vocab, mc, tc, callback=check, eval_every=250)
    step, acc, em = history[-1]
    cfg = SynthConfig()
    recovered = total = 0
    for s in samples:
        doc = infer_document(render_feature_grid(s, cfg), "spotting", result.model, vocab)
        found = {i.center: i for i in doc.instances}
        for inst in s.instances:
            total += 1
            pred = found.get(quantize_point(inst.center))
            if pred is None or pred.polygon is None or pred.text != inst.text:
                continue
            recovered += all(abs(a - b) <= 1 for p, q in zip(pred.polygon.points, inst.polygon.points)
                             for a, b in zip(quantize_point(p), quantize_point(q)))
    elapsed = time.perf_counter() - t0
    frac = recovered / total
    ok = acc >= 0.95 and em >= 0.90 and result.steps <= 5000 and frac >= 0.90 and elapsed < 600
    verdict(7, "two-stage desk-scale reproduction", ok,
            f"{result.steps} steps, token accuracy {acc:.4f}, stage-1 exact match {em:.4f}, "
            f"instances recovered {recovered}/{total} ({frac:.3f}), {elapsed:.0f}s", capsys)


def quadrant_behaviour(model, examples, vocab):
    """(fraction of (image, quadrant) pairs with every center inside, union recall)."""
    model.eval()
    with torch.no_grad():
        memory = model.encoder(torch.tensor(np.stack([e.grid for e in examples]), dtype=torch.float32))
    inside, found = 0, [set() for _ in examples]
    for w in QUADRANTS:
        outs = greedy_decode(model, "structured", [PromptSpec(w).ids(vocab)] * len(examples), memory,
                             vocab.bos_id, vocab.eos_id, max_len=80)
        for i, out in enumerate(outs):
            pts = parse_stage1(out.ids, "spotting", vocab).points
            inside += not out.truncated and all(w.contains(p) for p in pts)
            found[i] |= set(pts)
    hits = sum(quantize_point(inst.center) in found[i] for i, e in enumerate(examples) for inst in e.sample.instances)
    total = sum(len(e.sample.instances) for e in examples)
    return inside / (len(QUADRANTS) * len(examples)), hits / total


@pytest.mark.slow
def test_8_prompt_conditioning(capsys):
    t0 = time.perf_counter()
    vocab = build_vocab()
    samples = spotting_corpus()
    mc = ModelConfig(layers=2, vocab_size=len(vocab), n_bins=vocab.n_bins)
    tc = TrainConfig(steps=1000, batch_size=16, lr=1e-3, warmup=100, spatial_prompting=True,
                     prompts_per_image=4, stage2_per_image=1, log_every=0)
    result = train(samples, vocab, mc, tc)
    inside, recall = quadrant_behaviour(result.model, prepare(samples, vocab), vocab)
    elapsed = time.perf_counter() - t0
    ok = inside >= 0.90 and recall >= 0.95 and elapsed < 600
    verdict(8, "spatial-window prompt conditioning", ok,
            f"in-window pairs {inside:.3f}, union recall {recall:.3f}, {result.steps} steps, {elapsed:.0f}s", capsys)


def test_9_metrics_sanity(capsys):
    t0 = time.perf_counter()
    scores = {}
    (s,) = generate_corpus(SynthConfig(seed=9), 1, "spotting")
    gts = [[(i.polygon, i.text, False) for i in s.instances]]
    preds = [[(i.polygon, i.text) for i in s.instances]]
    words = [i.text for i in s.instances]
    lex = {"full": words, "weak": words, "generic": words, "strong": [words]}
    for mode in ("none", "full", "strong", "weak", "generic"):
        scores[f"spotting/{mode}"] = spotting_eval(preds, gts, mode, lex).fscore
    fields = [("company", "ACME"), ("total", "9.99")]
    scores["field F1"] = field_f1(fields, fields).f1
    scores["nTED"] = nted_accuracy(entity_tree(fields), entity_tree(fields))
    (t,) = generate_corpus(SynthConfig(seed=9), 1, "table")
    html = assemble_html(t.table)
    scores["TEDS"] = teds(html, html)
    scores["S-TEDS"] = teds(html, html, structure_only=True)
    empty = {
        "spotting": spotting_eval([[]], gts, "none").fscore,
        "field F1": field_f1([], fields).f1,
        "nTED": nted_accuracy(entity_tree([]), entity_tree(fields)),
        "TEDS": teds("<table></table>", html),
        "S-TEDS": teds("<table></table>", html, structure_only=True),
    }
    elapsed = time.perf_counter() - t0
    ok = all(v == 1.0 for v in scores.values()) and all(v == 0.0 for v in empty.values()) and elapsed < 5
    bad = [k for k, v in scores.items() if v != 1.0] + [f"empty {k}" for k, v in empty.items() if v != 0.0]
    verdict(9, "metric sanity", ok, f"{len(scores)} perfect and {len(empty)} empty cases, "
            f"wrong: {bad or 'none'}, {elapsed:.2f}s", capsys)
