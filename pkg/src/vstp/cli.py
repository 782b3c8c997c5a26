"""Command-line entry point: ``vstp {synth,codec-check,train,infer,eval,teds}``.

Exit codes: 0 success, 1 check or metric failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .codec import (PromptSpec, build_content_sequence, build_region_sequence, build_stage1, entity_groups,
                    hierarchy, ordered, parse_stage1)
from .errors import ConfigError, VstpError
from .geometry import Point, Polygon16, quantize_point
from .metrics import entity_tree, field_f1, nted_accuracy, spotting_eval, teds
from .metrics.spotting import MODES as LEXICON_MODES
from .synth import SynthConfig, generate_corpus, read_jsonl, write_jsonl
from .table import assemble_html, grid_to_structure_tokens, html_to_grid, structure_tokens_to_grid
from .vocab import TASKS, build_vocab

log = logging.getLogger("vstp")

METRIC_MODES = LEXICON_MODES + ("teds", "steds", "f1", "nted")


class UsageError(Exception):
    pass


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return cfg


def resolve_seed(args) -> int:
    env = os.environ.get("VSTP_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"VSTP_SEED must be an integer, got {env!r}") from None
    return args.seed


def _synth_config(cfg: dict, seed: int, task: str | None = None) -> SynthConfig:
    opts = dict(cfg.get("synth", {}))
    for key, value in list(opts.items()):
        if isinstance(value, list):
            opts[key] = tuple(value)
    opts["seed"] = seed
    if task:
        opts.setdefault("task_mix", (task,))
    try:
        return SynthConfig(**opts)
    except TypeError as exc:
        raise UsageError(f"bad synth config: {exc}") from None


def _vocab_for(task: str, cfg: dict):
    synth = _synth_config(cfg, 0)
    return build_vocab(task=task, entities=synth.entities if task == "kie" else ())


def _require(path, what="input"):
    if path is None:
        raise UsageError(f"missing {what} path")
    if not Path(path).exists():
        raise UsageError(f"{what} file {path} does not exist")
    return path


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("synth needs -o/--out")
    cfg = load_config(args.config)
    seed = resolve_seed(args)
    corpus = generate_corpus(_synth_config(cfg, seed, args.task), args.n, args.task)
    try:
        n = write_jsonl(args.out, corpus)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
        return 1
    print(f"wrote {n} samples to {args.out}")
    return 0


def _check_instances(sample, vocab) -> str | None:
    task = sample.task
    seq = build_stage1(sample.instances, task, vocab, PromptSpec())
    parsed = parse_stage1(seq, task, vocab)
    if parsed.diagnostics:
        return f"stage-1 parse diagnostics: {parsed.diagnostics}"

    def q(insts):
        return [quantize_point(i.center, vocab.quantizer) for i in insts]

    if task == "kie":
        want = [(label, q(members)) for label, members in entity_groups(sample.instances, vocab)]
        got = [(label, list(pts)) for label, pts in parsed.entities]
    elif task == "hiertext":
        want = [[q(line) for line in para] for para in hierarchy(sample.instances, vocab)]
        got = parsed.paragraphs
    else:
        want, got = q(ordered(sample.instances, vocab)), parsed.points
    if want != got:
        return f"stage-1 roundtrip mismatch: expected {want} got {got}"
    for inst in sample.instances:
        region = build_region_sequence(inst, vocab)
        want_poly = [quantize_point(p, vocab.quantizer) for p in inst.polygon.points]
        got_poly = [tuple(region.ids[i:i + 2]) for i in range(2, 34, 2)]
        if [tuple(p) for p in want_poly] != got_poly:
            return "region sequence does not hold the quantized polygon"
        if inst.text:
            content = build_content_sequence(inst, vocab)
            if vocab.decode_text(content.ids[2:]) != inst.text:
                return f"content roundtrip changed {inst.text!r}"
    return None


def _check_table(sample, vocab) -> tuple[str | None, float]:
    grid = sample.table.validate()
    html = assemble_html(grid)
    parsed = html_to_grid(html)
    toks = grid_to_structure_tokens(parsed, vocab.quantizer, vocab.max_span)
    back, diags = structure_tokens_to_grid(toks, vocab.quantizer)
    if diags:
        return f"structure token diagnostics: {diags}", 0.0
    html2 = assemble_html(back, [c.text for c in parsed.filled_cells()])
    score = teds(html, html2, structure_only=True)
    if back.structure() != grid.structure() or html2 != html:
        return "table html -> tokens -> html is not a fixpoint", score
    return None, score


def cmd_codec_check(args) -> int:
    path = _require(args.inp)
    cfg = load_config(args.config)
    try:
        samples = read_jsonl(path)
    except VstpError as exc:
        print(f"FAIL {exc}", file=sys.stderr)
        return 1
    counts, failures, steds = {}, [], []
    vocabs = {}
    for lineno, sample in enumerate(samples, 1):
        if args.task and sample.task != args.task:
            continue
        vocab = vocabs.setdefault(sample.task, _vocab_for(sample.task, cfg))
        try:
            if sample.table is not None:
                err, score = _check_table(sample, vocab)
                steds.append(score)
            else:
                err = _check_instances(sample, vocab)
        except VstpError as exc:
            err = f"{type(exc).__name__}: {exc}"
        ok, bad = counts.get(sample.task, (0, 0))
        counts[sample.task] = (ok + (err is None), bad + (err is not None))
        if err is not None:
            failures.append((lineno, sample.id, err))
    for task, (ok, bad) in sorted(counts.items()):
        print(f"{task}: {ok} ok, {bad} failed")
    if steds:
        print(f"table S-TEDS(gt, reconstructed): min {min(steds):.4f} over {len(steds)} rows")
    if failures:
        lineno, sid, err = failures[0]
        print(f"first failure: line {lineno} (id {sid}): {err}", file=sys.stderr)
        return 1
    return 0


def _train_configs(cfg: dict, vocab, seed: int):
    from .model import ModelConfig, TrainConfig
    mopts = dict(cfg.get("model", {}))
    mopts.update(vocab_size=len(vocab), n_bins=vocab.n_bins)
    mopts.setdefault("seed", seed)
    topts = dict(cfg.get("train", {}))
    topts.setdefault("seed", seed)
    try:
        return ModelConfig.from_dict(mopts), TrainConfig.from_dict(topts)
    except TypeError as exc:
        raise UsageError(f"bad model/train config: {exc}") from None


def cmd_train(args) -> int:
    from .model import prepare, save_checkpoint, stage1_exact_match, teacher_forced_accuracy, train
    path = _require(args.inp)
    if args.out is None:
        raise UsageError("train needs -o/--out for the checkpoint")
    cfg = load_config(args.config)
    samples = read_jsonl(path)
    tasks = {s.task for s in samples}
    if len(tasks) != 1:
        raise UsageError(f"train expects a single-task corpus, found {sorted(tasks)}")
    task = tasks.pop()
    if args.task and args.task != task:
        raise UsageError(f"--task {args.task} does not match corpus task {task}")
    vocab = _vocab_for(task, cfg)
    seed = resolve_seed(args)
    mc, tc = _train_configs(cfg, vocab, seed)
    result = train(samples, vocab, mc, tc, synth_cfg=_synth_config(cfg, seed))
    examples = prepare(samples, vocab, _synth_config(cfg, seed))
    acc = teacher_forced_accuracy(result.model, examples, vocab)
    em = stage1_exact_match(result.model, examples, vocab)
    save_checkpoint(args.out, result.model, vocab, {"task": task, "steps": result.steps,
                                                    "token_accuracy": acc, "stage1_exact_match": em})
    curve = Path(str(args.out) + ".loss.csv")
    with curve.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        w.writerows((i + 1, f"{x:.6f}") for i, x in enumerate(result.losses))
    print(f"trained {result.steps} steps; token accuracy {acc['pooled']:.4f}; "
          f"stage-1 exact match {em:.4f}; checkpoint {args.out}; loss curve {curve}")
    return 0


def cmd_infer(args) -> int:
    from .model import infer_document, load_checkpoint
    from .synth import render_feature_grid
    path = _require(args.inp)
    ckpt = _require(args.checkpoint, "checkpoint")
    if args.out is None:
        raise UsageError("infer needs -o/--out")
    cfg = load_config(args.config)
    model, vocab, _ = load_checkpoint(ckpt)
    synth = _synth_config(cfg, 0)
    n = 0
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for sample in read_jsonl(path):
            doc = infer_document(render_feature_grid(sample, synth), sample.task, model, vocab)
            fh.write(json.dumps({"id": sample.id, **doc.to_dict()}) + "\n")
            n += 1
    print(f"wrote {n} predictions to {args.out}")
    return 0


def _pred_polygon(raw):
    if raw is None:
        return None
    return Polygon16(tuple(Point(float(x), float(y)) for x, y in raw))


def _lexicons(cfg: dict, gts) -> dict:
    """Lexicons from the config, falling back to the ground-truth vocabulary for full/weak/strong."""
    lex = dict(cfg.get("lexicons", {}))
    words = sorted({i.text for s in gts for i in s.instances if i.text})
    lex.setdefault("full", words)
    lex.setdefault("weak", words)
    lex.setdefault("strong", [sorted({i.text for i in s.instances if i.text}) for s in gts])
    return lex


def cmd_eval(args) -> int:
    pred_path = _require(args.inp, "predictions")
    gt_path = _require(args.gt, "ground-truth")
    cfg = load_config(args.config)
    gts = read_jsonl(gt_path)
    preds = {}
    with Path(pred_path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    d = json.loads(line)
                    preds[d["id"]] = d
                except (json.JSONDecodeError, KeyError, TypeError):
                    print(f"error: {pred_path}:{lineno}: malformed prediction line", file=sys.stderr)
                    return 1
    missing = [s.id for s in gts if s.id not in preds]
    if missing:
        print(f"error: predictions missing for ids: {', '.join(missing)}", file=sys.stderr)
        return 1
    task = args.task or (gts[0].task if gts else "spotting")
    mode = args.mode
    if task == "table":
        mode = mode or "teds"
        if mode not in ("teds", "steds"):
            raise UsageError(f"table evaluation supports --mode teds or steds, not {mode}")
        scores = [teds(preds[s.id].get("html") or "", assemble_html(s.table), structure_only=mode == "steds")
                  for s in gts]
        value = sum(scores) / len(scores) if scores else 1.0
        report = {"task": task, "mode": mode, "precision": value, "recall": value, "fscore": value,
                  "n": len(scores), mode: value}
        line = f"{mode.upper().replace('STEDS', 'S-TEDS')}={value:.4f}"
    elif task == "kie":
        mode = mode or "f1"
        if mode not in ("f1", "nted"):
            raise UsageError(f"kie evaluation supports --mode f1 or nted, not {mode}")
        pairs_pred, pairs_gt, nteds = [], [], []
        vocab = _vocab_for("kie", cfg)
        for s in gts:
            gt_fields = [(label, " ".join(i.text for i in members))
                         for label, members in entity_groups(s.instances, vocab)]
            pred_fields = [tuple(e) for e in preds[s.id].get("entities", [])]
            pairs_pred += [(s.id, *f) for f in pred_fields]
            pairs_gt += [(s.id, *f) for f in gt_fields]
            nteds.append(nted_accuracy(entity_tree(pred_fields), entity_tree(gt_fields)))
        p, r, f = field_f1(pairs_pred, pairs_gt)
        nted = sum(nteds) / len(nteds) if nteds else 1.0
        report = {"task": task, "mode": mode, "precision": p, "recall": r, "fscore": f, "n": len(gts),
                  "nted": nted}
        line = f"F1={f:.4f}" if mode == "f1" else f"nTED={nted:.4f}"
    else:
        mode = mode or "none"
        if mode not in LEXICON_MODES:
            raise UsageError(f"{task} evaluation supports --mode {'/'.join(LEXICON_MODES)}, not {mode}")
        p_lists, g_lists = [], []
        for s in gts:
            p_lists.append([(poly, i.get("text", "")) for i in preds[s.id].get("instances", [])
                            if (poly := _pred_polygon(i.get("polygon"))) is not None])
            g_lists.append([(i.polygon, i.text, False) for i in s.instances])
        rep = spotting_eval(p_lists, g_lists, mode, _lexicons(cfg, gts), iou_threshold=args.iou,
                            max_edit_distance=cfg.get("max_edit_distance"))
        rep.task = task
        report = rep.to_dict()
        line = f"P={rep.precision:.4f} R={rep.recall:.4f} F={rep.fscore:.4f}"
    text = json.dumps(report, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(f"{task} {mode}: {line}")
    return 0


def cmd_teds(args) -> int:
    texts = []
    for p in (args.pred, args.gt):
        try:
            texts.append(Path(p).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read {p}: {exc.strerror}") from None
    logging.basicConfig(level=logging.WARNING, format="warning: %(message)s", stream=sys.stderr)
    print(f"{teds(texts[0], texts[1], structure_only=args.structure_only):.4f}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vstp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vstp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, task_required=False):
        p.add_argument("--task", choices=TASKS, required=task_required)
        p.add_argument("--seed", type=int, default=0, help="overridden by $VSTP_SEED when set")
        p.add_argument("-i", "--in", dest="inp")
        p.add_argument("-o", "--out")
        p.add_argument("--config", help="JSON file with synth/model/train/lexicons sections")
        return p

    p = common(sub.add_parser("synth", help="generate a synthetic JSONL corpus"), task_required=True)
    p.add_argument("--n", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("codec-check", help="roundtrip every sample through the sequence codecs"))
    p.set_defaults(func=cmd_codec_check)

    p = common(sub.add_parser("train", help="train a model on a single-task corpus"))
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("infer", help="two-stage inference over a corpus"))
    p.add_argument("--checkpoint", help="checkpoint written by train")
    p.set_defaults(func=cmd_infer)

    p = common(sub.add_parser("eval", help="score predictions against ground truth"))
    p.add_argument("--gt", help="ground-truth JSONL corpus")
    p.add_argument("--mode", choices=METRIC_MODES)
    p.add_argument("--iou", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("teds", help="TEDS between two HTML table files")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--structure-only", action="store_true")
    p.set_defaults(func=cmd_teds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
        parser.error("--n must be positive")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"vstp: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"vstp: config error: {exc}", file=sys.stderr)
        return 2
    except VstpError as exc:
        print(f"vstp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
