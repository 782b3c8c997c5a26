"""Key information extraction metrics: field-level F1 and normalized tree-edit-distance accuracy."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, NamedTuple

from .tree_edit import TreeNode, tree_edit_distance

ROOT_TAG = "root"
VALUE_TAG = "value"


class FieldScore(NamedTuple):
    precision: float
    recall: float
    f1: float


def harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def field_f1(pred: Iterable[tuple[str, str]], gt: Iterable[tuple[str, str]]) -> FieldScore:
    """Exact-match (class, value) scoring with multiset semantics."""
    pred_c, gt_c = Counter(map(tuple, pred)), Counter(map(tuple, gt))
    n_pred, n_gt = sum(pred_c.values()), sum(gt_c.values())
    if n_pred == 0 and n_gt == 0:
        return FieldScore(1.0, 1.0, 1.0)
    hits = sum((pred_c & gt_c).values())
    p = hits / n_pred if n_pred else 0.0
    r = hits / n_gt if n_gt else 0.0
    return FieldScore(p, r, harmonic(p, r))


def entity_tree(fields: Iterable[tuple[str, str]]) -> TreeNode:
    """root -> one node per field (sorted) -> a value leaf holding the text."""
    root = TreeNode(ROOT_TAG)
    for cls, value in sorted(map(tuple, fields)):
        root.children.append(TreeNode(cls, [TreeNode(VALUE_TAG, content=value)]))
    return root


def nted_accuracy(pred, gt) -> float:
    """``max(0, 1 - TED(pred, gt) / TED(empty, gt))``; accepts trees or (class, value) lists."""
    pred_t = pred if isinstance(pred, TreeNode) else entity_tree(pred)
    gt_t = gt if isinstance(gt, TreeNode) else entity_tree(gt)
    empty = TreeNode(gt_t.tag)
    denom = tree_edit_distance(empty, gt_t)
    dist = tree_edit_distance(pred_t, gt_t)
    if denom == 0:
        return 1.0 if dist == 0 else 0.0
    return max(0.0, 1.0 - dist / denom)
