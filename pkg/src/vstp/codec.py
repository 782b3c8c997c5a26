"""Build and parse structured-point, region and content sequences.

Stage-1 layouts (``k`` is the prompt length)::

    spotting   window(4) prefix(2) | x y  x y ... EOS                    k = 6
    kie        window(4) prefix(2) | <cls> x y ... </cls> ... EOS        k = 6
    hiertext   BOS | <PARA> <LINE> x y ... </LINE> ... </PARA> ... EOS   k = 1

Stage-2 sequences are prompted by one center point (``k = 2``)::

    region     cx cy | x1 y1 ... x16 y16 EOS
    content    cx cy | c1 c2 ... EOS
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

from .errors import LabelError, SchemaError, TruncationError
from .geometry import (
    Point,
    Polygon16,
    QuantizedPoint,
    Window,
    center_of,
    full_window,
    quantize_point,
    raster_order,
)
from .vocab import FULL_PREFIX, PrefixWindow, Vocabulary

STRUCTURED_MAX_LEN = 1500
REGION_LEN = 35
CONTENT_MAX_LEN = 200


@dataclass(frozen=True)
class TextInstance:
    """One word or line.

    ``entity_id`` distinguishes two entities of the same class; instances of one
    entity share it. Without it every labelled instance is its own entity.
    """

    polygon: Polygon16
    text: str = ""
    entity: str | None = None
    entity_id: int | None = None
    line_id: int | None = None
    para_id: int | None = None

    @property
    def center(self) -> Point:
        return center_of(self.polygon)


@dataclass(frozen=True)
class PromptSpec:
    window: Window = None
    prefix: PrefixWindow = FULL_PREFIX

    k = 6

    def ids(self, vocab: Vocabulary) -> list[int]:
        window = self.window if self.window is not None else full_window(vocab.quantizer)
        window.validate(vocab.quantizer)
        return [vocab.coord_id(t) for t in window.as_list()] + [
            vocab.char_id(self.prefix.first), vocab.char_id(self.prefix.last)]


@dataclass(frozen=True)
class StructuredSequence:
    ids: tuple
    k: int
    task: str

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))

    def __len__(self) -> int:
        return len(self.ids)


def ordered(instances: Sequence[TextInstance], vocab: Vocabulary) -> list[TextInstance]:
    return [instances[i] for i in raster_order([t.center for t in instances], vocab.quantizer)]


def _point_ids(inst: TextInstance, vocab: Vocabulary) -> list[int]:
    q = quantize_point(inst.center, vocab.quantizer)
    return [q.xt, q.yt]


def _check_len(ids: list[int], max_len: int, what: str, fit: int) -> None:
    if len(ids) > max_len:
        raise TruncationError(f"{what} sequence of length {len(ids)} exceeds max length {max_len}; "
                              f"{fit} would fit", fit=fit)


def build_spotting_stage1(instances: Sequence[TextInstance], prompt: PromptSpec, vocab: Vocabulary,
                          max_len: int = STRUCTURED_MAX_LEN) -> StructuredSequence:
    ids = prompt.ids(vocab)
    for inst in ordered(instances, vocab):
        ids += _point_ids(inst, vocab)
    ids.append(vocab.eos_id)
    _check_len(ids, max_len, "stage-1", fit=max(0, (max_len - PromptSpec.k - 1) // 2))
    return StructuredSequence(ids, PromptSpec.k, "spotting")


def build_region_sequence(inst: TextInstance, vocab: Vocabulary) -> StructuredSequence:
    ids = _point_ids(inst, vocab)
    for p in inst.polygon.points:
        q = quantize_point(p, vocab.quantizer)
        ids += [q.xt, q.yt]
    ids.append(vocab.eos_id)
    return StructuredSequence(ids, 2, "region")


def build_content_sequence(inst: TextInstance, vocab: Vocabulary,
                           max_len: int = CONTENT_MAX_LEN) -> StructuredSequence:
    return content_sequence(inst.center, inst.text, vocab, max_len)


def content_sequence(center: Point, text: str, vocab: Vocabulary,
                     max_len: int = CONTENT_MAX_LEN) -> StructuredSequence:
    if not text:
        raise ValueError("content sequences need non-empty text")
    q = quantize_point(center, vocab.quantizer)
    ids = [q.xt, q.yt] + vocab.char_ids(text) + [vocab.eos_id]
    _check_len(ids, max_len, "content", fit=max(0, max_len - 3))
    return StructuredSequence(ids, 2, "content")


def entity_groups(instances: Sequence[TextInstance], vocab: Vocabulary) -> list[tuple[str, list[TextInstance]]]:
    """Group labelled instances into entities, both levels in raster order.

    Unlabelled instances are background text and are left out.
    """
    groups: OrderedDict = OrderedDict()
    for n, inst in enumerate(ordered(instances, vocab)):
        if inst.entity is None:
            continue
        if inst.entity not in vocab.entity_open:
            raise SchemaError(f"entity {inst.entity!r} not in schema {list(vocab.entities)}")
        key = (inst.entity, inst.entity_id if inst.entity_id is not None else ("solo", n))
        groups.setdefault(key, []).append(inst)
    return [(key[0], members) for key, members in groups.items()]


def build_kie_sequence(instances: Sequence[TextInstance], prompt: PromptSpec, vocab: Vocabulary,
                       max_len: int = STRUCTURED_MAX_LEN) -> StructuredSequence:
    ids = prompt.ids(vocab)
    for label, members in entity_groups(instances, vocab):
        ids.append(vocab.entity_open[label])
        for inst in members:
            ids += _point_ids(inst, vocab)
        ids.append(vocab.entity_close[label])
    ids.append(vocab.eos_id)
    _check_len(ids, max_len, "stage-1", fit=0)
    return StructuredSequence(ids, PromptSpec.k, "kie")


def hierarchy(instances: Sequence[TextInstance], vocab: Vocabulary) -> list[list[list[TextInstance]]]:
    """Paragraph -> line -> word nesting, each level in raster order of its first word."""
    line_para: dict = {}
    paras: OrderedDict = OrderedDict()
    for inst in ordered(instances, vocab):
        if inst.line_id is None or inst.para_id is None:
            raise LabelError("hierarchical instances need both line_id and para_id")
        seen = line_para.setdefault(inst.line_id, inst.para_id)
        if seen != inst.para_id:
            raise LabelError(f"line {inst.line_id} spans paragraphs {seen} and {inst.para_id}")
        paras.setdefault(inst.para_id, OrderedDict()).setdefault(inst.line_id, []).append(inst)
    return [list(lines.values()) for lines in paras.values()]


def build_hier_sequence(instances: Sequence[TextInstance], vocab: Vocabulary,
                        max_len: int = STRUCTURED_MAX_LEN) -> StructuredSequence:
    tid = vocab.token_id
    ids = [vocab.bos_id]
    for lines in hierarchy(instances, vocab):
        ids.append(tid("<PARA>"))
        for words in lines:
            ids.append(tid("<LINE>"))
            for inst in words:
                ids += _point_ids(inst, vocab)
            ids.append(tid("</LINE>"))
        ids.append(tid("</PARA>"))
    ids.append(vocab.eos_id)
    _check_len(ids, max_len, "stage-1", fit=0)
    return StructuredSequence(ids, 1, "hiertext")


def build_stage1(instances: Sequence[TextInstance], task: str, vocab: Vocabulary,
                 prompt: PromptSpec | None = None, max_len: int = STRUCTURED_MAX_LEN) -> StructuredSequence:
    prompt = prompt or PromptSpec()
    if task == "spotting":
        return build_spotting_stage1(instances, prompt, vocab, max_len)
    if task == "kie":
        return build_kie_sequence(instances, prompt, vocab, max_len)
    if task == "hiertext":
        return build_hier_sequence(instances, vocab, max_len)
    raise ValueError(f"no instance-based stage-1 builder for task {task!r}")


def stage1_prompt_len(task: str) -> int:
    return 1 if task in ("hiertext", "table") else PromptSpec.k


@dataclass
class Stage1Parse:
    """Best-effort parse of a stage-1 sequence.

    ``points`` always holds every recovered center; ``entities`` and
    ``paragraphs`` carry the grouping for KIE and hierarchical detection.
    """

    task: str
    prompt: tuple = ()
    points: list = field(default_factory=list)
    entities: list = field(default_factory=list)
    paragraphs: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    terminated: bool = True


def parse_stage1(seq: StructuredSequence | Sequence[int], task: str, vocab: Vocabulary,
                 k: int | None = None) -> Stage1Parse:
    """Invert the stage-1 builders; never raises on malformed token streams.

    Recovery: unpaired coordinates are dropped, open tags are closed at EOS,
    tokens that make no sense for the task are skipped. Every repair is
    recorded in ``diagnostics``.
    """
    if isinstance(seq, StructuredSequence):
        ids, k = list(seq.ids), seq.k if k is None else k
    else:
        ids = [int(i) for i in seq]
    if k is None:
        k = stage1_prompt_len(task)
    out = Stage1Parse(task=task, prompt=tuple(ids[:k]))
    diag = out.diagnostics
    body = ids[k:]
    if vocab.eos_id in body:
        cut = body.index(vocab.eos_id)
        body = body[:cut]
    else:
        out.terminated = False
        diag.append("no EOS: sequence truncated")

    pending_x = None
    close_ids = {v: e for e, v in vocab.entity_close.items()}
    open_ids = {v: e for e, v in vocab.entity_open.items()}
    hier = {}
    if task == "hiertext":
        hier = {name: vocab.token_id(name) for name in ("<PARA>", "</PARA>", "<LINE>", "</LINE>")}
    group = None  # kie: (label, points)
    para = None  # hiertext: list of lines
    line = None  # hiertext: list of points

    def drop_pending(pos):
        nonlocal pending_x
        if pending_x is not None:
            diag.append(f"pos {pos}: dropped unpaired coordinate {pending_x}")
            pending_x = None

    def close_line(pos, auto):
        nonlocal line
        if line is None:
            return
        if auto:
            diag.append(f"pos {pos}: auto-closed <LINE>")
        if line:
            para.append(line)
        else:
            diag.append(f"pos {pos}: dropped empty line")
        line = None

    def close_para(pos, auto):
        nonlocal para
        close_line(pos, auto=True)
        if para is None:
            return
        if auto:
            diag.append(f"pos {pos}: auto-closed <PARA>")
        if para:
            out.paragraphs.append(para)
        else:
            diag.append(f"pos {pos}: dropped empty paragraph")
        para = None

    def close_group(pos, auto):
        nonlocal group
        if group is None:
            return
        if auto:
            diag.append(f"pos {pos}: auto-closed <{group[0]}>")
        if group[1]:
            out.entities.append(group)
        else:
            diag.append(f"pos {pos}: dropped empty entity <{group[0]}>")
        group = None

    for j, t in enumerate(body, start=k):
        if vocab.is_coord(t):
            if pending_x is None:
                pending_x = t
                continue
            q = QuantizedPoint(pending_x, t)
            pending_x = None
            if task == "kie":
                if group is None:
                    diag.append(f"pos {j}: dropped point outside entity tags")
                    continue
                group[1].append(q)
            elif task == "hiertext":
                if line is None:
                    diag.append(f"pos {j}: dropped point outside <LINE>")
                    continue
                line.append(q)
            out.points.append(q)
            continue

        drop_pending(j)
        if task == "kie" and t in open_ids:
            close_group(j, auto=True)
            group = (open_ids[t], [])
        elif task == "kie" and t in close_ids:
            if group is not None and group[0] == close_ids[t]:
                close_group(j, auto=False)
            else:
                diag.append(f"pos {j}: skipped unmatched {vocab.token(t)}")
        elif task == "hiertext" and t == hier.get("<PARA>"):
            close_para(j, auto=True)
            para = []
        elif task == "hiertext" and t == hier.get("<LINE>"):
            if para is None:
                diag.append(f"pos {j}: <LINE> outside <PARA>; opened a paragraph")
                para = []
            close_line(j, auto=True)
            line = []
        elif task == "hiertext" and t == hier.get("</LINE>"):
            if line is None:
                diag.append(f"pos {j}: skipped unmatched </LINE>")
            else:
                close_line(j, auto=False)
        elif task == "hiertext" and t == hier.get("</PARA>"):
            if para is None:
                diag.append(f"pos {j}: skipped unmatched </PARA>")
            else:
                close_para(j, auto=False)
        else:
            diag.append(f"pos {j}: skipped token {vocab.token(t)!r} invalid for {task}")

    end = k + len(body)
    drop_pending(end)
    close_group(end, auto=True)
    close_para(end, auto=True)
    return out
