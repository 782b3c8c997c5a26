"""Two-stage inference: structured points first, then region and content per point."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from ..codec import REGION_LEN, PromptSpec, parse_stage1
from ..geometry import Point, Polygon16, QuantizedPoint, dequantize_point
from ..table import TableGrid, assemble_html, structure_tokens_to_grid
from ..vocab import Vocabulary
from .decode import greedy_decode
from .network import OmniModel


@dataclass
class ParsedInstance:
    center: QuantizedPoint
    polygon: Polygon16 | None = None
    text: str = ""
    entity: str | None = None
    line: int | None = None
    paragraph: int | None = None


@dataclass
class ParsedDocument:
    task: str
    instances: list = field(default_factory=list)
    entities: list = field(default_factory=list)   # KIE: (class, value) pairs
    table: TableGrid | None = None
    html: str | None = None
    stage1_ids: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    truncated: bool = False

    def to_dict(self) -> dict:
        d = {"task": self.task, "diagnostics": list(self.diagnostics), "truncated": self.truncated}
        if self.table is not None:
            d["html"] = self.html
        else:
            d["instances"] = [{
                "center": list(i.center),
                "polygon": [[p.x, p.y] for p in i.polygon.points] if i.polygon else None,
                "text": i.text,
                **{k: v for k, v in (("entity", i.entity), ("line_id", i.line), ("para_id", i.paragraph))
                   if v is not None},
            } for i in self.instances]
        if self.task == "kie":
            d["entities"] = [list(e) for e in self.entities]
        return d


def region_polygon(ids: list, vocab: Vocabulary) -> Polygon16 | None:
    """Polygon from a decoded region sequence (2 prompt tokens, 32 coordinates, EOS); None if malformed."""
    body = ids[2:]
    if vocab.eos_id in body:
        body = body[:body.index(vocab.eos_id)]
    if len(body) != REGION_LEN - 3 or not all(vocab.is_coord(t) for t in body):
        return None
    pts = [dequantize_point(QuantizedPoint(body[i], body[i + 1]), vocab.quantizer) for i in range(0, len(body), 2)]
    return Polygon16(tuple(pts))


@torch.no_grad()
def decode_points(model: OmniModel, memory: torch.Tensor, points: list, vocab: Vocabulary,
                  regions: bool = True) -> tuple[list, list, list]:
    """Stage 2 for one image: polygons and texts for every point, each decoded independently."""
    if not points:
        return [], [], []
    prompts = [[int(p.xt), int(p.yt)] for p in points]
    mem = memory.expand(len(points), -1, -1)
    diags = []
    polys = [None] * len(points)
    if regions:
        for n, out in enumerate(greedy_decode(model, "region", prompts, mem, vocab.bos_id, vocab.eos_id)):
            polys[n] = region_polygon(out.ids, vocab)
            if polys[n] is None:
                diags.append(f"point {n}: malformed region sequence")
    texts = []
    for n, out in enumerate(greedy_decode(model, "content", prompts, mem, vocab.bos_id, vocab.eos_id)):
        texts.append(vocab.decode_text(out.ids[2:]))
        if out.truncated:
            diags.append(f"point {n}: content hit max length")
    return polys, texts, diags


@torch.no_grad()
def infer_document(img, task: str, model: OmniModel, vocab: Vocabulary,
                   prompt: PromptSpec | None = None) -> ParsedDocument:
    """Run both stages on one feature grid.

    Spotting and KIE take a window/prefix prompt (default: everything); the
    hierarchical and table tasks start from BOS.
    """
    model.eval()
    memory = model.encode(img).v
    if memory.shape[0] != 1:
        raise ValueError("infer_document takes a single image")
    if task in ("spotting", "kie"):
        prompt_ids = (prompt or PromptSpec()).ids(vocab)
    else:
        prompt_ids = [vocab.bos_id]
    out = greedy_decode(model, "structured", [prompt_ids], memory, vocab.bos_id, vocab.eos_id)[0]
    doc = ParsedDocument(task, stage1_ids=out.ids, truncated=out.truncated)

    if task == "table":
        grid, diags = structure_tokens_to_grid(vocab.detokenize(out.ids), vocab.quantizer)
        doc.diagnostics += diags
        cells = grid.filled_cells()
        pts = [QuantizedPoint(*(min(vocab.n_bins - 1, int(c * vocab.n_bins)) for c in cell.center))
               for cell in cells]
        _, texts, d2 = decode_points(model, memory, pts, vocab, regions=False)
        doc.diagnostics += d2
        for cell, text in zip(cells, texts):
            cell.text = text
        doc.table = grid
        doc.html = assemble_html(grid)
        return doc

    parsed = parse_stage1(out.ids, task, vocab, k=len(prompt_ids))
    doc.diagnostics += parsed.diagnostics
    points = list(parsed.points)
    polys, texts, d2 = decode_points(model, memory, points, vocab)
    doc.diagnostics += d2
    insts = [ParsedInstance(p, poly, text) for p, poly, text in zip(points, polys, texts)]
    # points appear in parse order, so walk the groups in the same order
    n = 0
    if task == "kie":
        for label, members in parsed.entities:
            words = []
            for _ in members:
                insts[n].entity = label
                words.append(insts[n].text)
                n += 1
            doc.entities.append((label, " ".join(words)))
    elif task == "hiertext":
        for pi, para in enumerate(parsed.paragraphs):
            for li, line in enumerate(para):
                for _ in line:
                    insts[n].paragraph, insts[n].line = pi, li
                    n += 1
    doc.instances = insts
    return doc


def center_point(p: QuantizedPoint, vocab: Vocabulary) -> Point:
    return dequantize_point(p, vocab.quantizer)
