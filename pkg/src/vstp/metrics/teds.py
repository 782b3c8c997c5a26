"""Tree-edit-distance-based similarity (TEDS) between HTML tables, and its structure-only variant."""

from __future__ import annotations

import logging
from html.parser import HTMLParser

from ..errors import TableError
from .tree_edit import TedsTree, tree_edit_distance

log = logging.getLogger(__name__)

_TAGS = ("table", "thead", "tbody", "tr", "td")


class _TreeParser(HTMLParser):
    """Build a TedsTree from the table HTML subset; rows may be ragged."""

    def __init__(self, structure_only: bool):
        super().__init__(convert_charrefs=True)
        self.structure_only = structure_only
        self.root = None
        self.stack: list = []
        self.text: list = []

    def handle_starttag(self, tag, attrs):
        if tag not in _TAGS:
            raise TableError(f"unsupported tag <{tag}>", self.getpos())
        if tag == "table" and (self.root is not None or self.stack):
            raise TableError("nested or repeated <table>", self.getpos())
        if tag != "table" and not self.stack:
            raise TableError(f"<{tag}> outside <table>", self.getpos())
        if self.stack and self.stack[-1].tag == "td":
            raise TableError(f"<{tag}> inside a cell", self.getpos())
        spans = {"rowspan": 1, "colspan": 1}
        for name, value in attrs:
            if name in spans:
                try:
                    spans[name] = int(value)
                except (TypeError, ValueError):
                    raise TableError(f"non-integer {name}={value!r}", self.getpos()) from None
        node = TedsTree(tag, rowspan=spans["rowspan"], colspan=spans["colspan"]) if tag == "td" else TedsTree(tag)
        if self.stack:
            self.stack[-1].children.append(node)
        else:
            self.root = node
        self.stack.append(node)
        self.text = []

    def handle_endtag(self, tag):
        if not self.stack or self.stack[-1].tag != tag:
            raise TableError(f"unbalanced </{tag}>", self.getpos())
        node = self.stack.pop()
        if tag == "td" and not self.structure_only:
            node.content = "".join(self.text)

    def handle_data(self, data):
        if self.stack and self.stack[-1].tag == "td":
            self.text.append(data)
        elif data.strip():
            raise TableError(f"text {data.strip()[:20]!r} outside a cell", self.getpos())


def html_to_tree(html: str, structure_only: bool = False) -> TedsTree:
    parser = _TreeParser(structure_only)
    parser.feed(html)
    parser.close()
    if parser.root is None or parser.stack:
        raise TableError("missing or unclosed <table>")
    return parser.root


def _n_cells(tree: TedsTree) -> int:
    return sum(1 for n in tree.iter() if n.tag == "td")


def teds(pred_html: str, gt_html: str, structure_only: bool = False) -> float:
    """Similarity in [0, 1]: ``1 - TED(pred, gt) / max(|pred|, |gt|)``.

    Tables without cells count as empty: empty vs empty scores 1, empty vs
    non-empty scores 0. HTML outside the supported subset scores 0.
    """
    try:
        pred = html_to_tree(pred_html, structure_only)
        gt = html_to_tree(gt_html, structure_only)
    except TableError as exc:
        log.warning("unparseable table HTML scored 0: %s", exc)
        return 0.0
    n_pred, n_gt = _n_cells(pred), _n_cells(gt)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    dist = tree_edit_distance(pred, gt)
    return max(0.0, 1.0 - dist / max(pred.size(), gt.size()))


def s_teds(pred_html: str, gt_html: str) -> float:
    return teds(pred_html, gt_html, structure_only=True)
