"""End-to-end text spotting evaluation: IoU matching plus lexicon-corrected transcription check."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple, Sequence

from ..errors import ConfigError
from ..geometry import Polygon16, polygon_iou
from .kie import harmonic
from .tree_edit import levenshtein

MODES = ("none", "full", "strong", "weak", "generic")


class Prediction(NamedTuple):
    polygon: Polygon16
    text: str


class GroundTruth(NamedTuple):
    polygon: Polygon16
    text: str
    ignore: bool = False


@dataclass
class EvalReport:
    task: str
    mode: str
    precision: float
    recall: float
    fscore: float
    n: int
    breakdown: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def prf(hits: int, n_pred: int, n_gt: int) -> tuple[float, float, float]:
    if n_pred == 0 and n_gt == 0:
        return 1.0, 1.0, 1.0
    p = hits / n_pred if n_pred else 0.0
    r = hits / n_gt if n_gt else 0.0
    return p, r, harmonic(p, r)


def correct_with_lexicon(text: str, lexicon: Sequence[str], max_edit_distance: int | None = None) -> str:
    """Nearest lexicon word by case-insensitive edit distance, first on ties.

    Returns ``text`` unchanged when the lexicon is empty or the best distance
    exceeds ``max_edit_distance``.
    """
    best, best_d = None, None
    low = text.lower()
    for word in lexicon:
        d = levenshtein(low, word.lower())
        if best_d is None or d < best_d:
            best, best_d = word, d
            if d == 0:
                break
    if best is None or (max_edit_distance is not None and best_d > max_edit_distance):
        return text
    return best


def match_instances(pred_polys: Sequence[Polygon16], gt_polys: Sequence[Polygon16],
                    iou_threshold: float = 0.5) -> dict[int, int]:
    """One-to-one greedy matching: higher IoU first, then lower GT index. Returns pred -> gt."""
    pairs = []
    for g, gp in enumerate(gt_polys):
        for p, pp in enumerate(pred_polys):
            iou = polygon_iou(pp, gp)
            if iou >= iou_threshold and iou > 0:
                pairs.append((-iou, g, p))
    pairs.sort()
    used_g, used_p, out = set(), set(), {}
    for _, g, p in pairs:
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
        out[p] = g
    return out


def _lexicon_for(mode: str, lexicons: Mapping | None, image: int):
    if mode == "none":
        return None
    if not lexicons or mode not in lexicons:
        raise ConfigError(f"mode {mode!r} needs a lexicon under key {mode!r}")
    lex = lexicons[mode]
    if mode == "strong":
        if image >= len(lex):
            raise ConfigError(f"strong lexicon has no list for image {image}")
        return lex[image]
    return lex


def spotting_eval(preds_per_image: Sequence[Sequence], gts_per_image: Sequence[Sequence],
                  mode: str = "none", lexicons: Mapping | None = None,
                  iou_threshold: float = 0.5, max_edit_distance: int | None = None) -> EvalReport:
    """Corpus-level end-to-end P/R/F.

    ``lexicons`` maps a mode name to a word list; for ``strong`` it holds one
    list per image. Predictions matched to ignored GTs, and the ignored GTs
    themselves, are left out of every count.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown lexicon mode {mode!r}; expected one of {MODES}")
    if len(preds_per_image) != len(gts_per_image):
        raise ConfigError("predictions and ground truth cover different numbers of images")
    n_pred = n_gt = det_hits = e2e_hits = 0
    for image, (preds, gts) in enumerate(zip(preds_per_image, gts_per_image)):
        preds = [Prediction(*p) for p in preds]
        gts = [GroundTruth(*g) for g in gts]
        lexicon = _lexicon_for(mode, lexicons, image)
        matches = match_instances([p.polygon for p in preds], [g.polygon for g in gts], iou_threshold)
        n_gt += sum(1 for g in gts if not g.ignore)
        for i, pred in enumerate(preds):
            g = matches.get(i)
            if g is not None and gts[g].ignore:
                continue
            n_pred += 1
            if g is None:
                continue
            det_hits += 1
            text = pred.text if lexicon is None else correct_with_lexicon(pred.text, lexicon, max_edit_distance)
            if text.lower() == gts[g].text.lower():
                e2e_hits += 1
    p, r, f = prf(e2e_hits, n_pred, n_gt)
    dp, dr, df = prf(det_hits, n_pred, n_gt)
    breakdown = {
        "detection": {"precision": dp, "recall": dr, "fscore": df, "hits": det_hits},
        "e2e": {"precision": p, "recall": r, "fscore": f, "hits": e2e_hits},
        "n_pred": n_pred,
        "n_gt": n_gt,
    }
    return EvalReport("spotting", mode, p, r, f, len(gts_per_image), breakdown)
