"""Deterministic synthetic corpora and the feature grids the toy model reads.

Words sit on a cell grid (``grid_size`` cells per side): a word of ``L``
characters covers ``L`` consecutive cells of one row, so box corners, polygon
points and centers are exact multiples of ``1 / (4 * grid_size)``. Boxes keep a
one-cell margin from each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import TextInstance
from .errors import ConfigError, GenerationError, SchemaError
from .geometry import Point, Polygon16
from .table import TableCell, TableGrid, layout_center
from .vocab import CHARS, TASKS, char_position

PIXELS_PER_CELL = 16
N_CHAR_CHANNELS = len(CHARS)
# one-hot char, occupancy, relative x inside the box, box width
CHAR_FEATURES = N_CHAR_CHANNELS + 3
N_POS_CHANNELS = 2
N_CHANNELS = CHAR_FEATURES + N_POS_CHANNELS
MAX_TRIES = 200


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    grid_size: int = 32
    n_instances: tuple = (2, 6)
    word_len: tuple = (2, 5)
    table_rows: tuple = (2, 5)
    table_cols: tuple = (2, 5)
    max_span: int = 3
    span_prob: float = 0.2
    empty_cell_prob: float = 0.2
    entities: tuple = ("company", "date", "address", "total")
    unlabeled_prob: float = 0.2
    task_mix: tuple = ("spotting",)

    def __post_init__(self):
        if self.grid_size < 8:
            raise ConfigError(f"grid_size must be >= 8, got {self.grid_size}")
        for name in ("n_instances", "word_len", "table_rows", "table_cols"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigError(f"{name} must be a non-empty range of positive ints, got {(lo, hi)}")
        if self.word_len[1] > self.grid_size - 2:
            raise ConfigError("words longer than the grid width cannot be placed")
        if self.max_span < 1:
            raise ConfigError("max_span must be >= 1")
        bad = [t for t in self.task_mix if t not in TASKS]
        if bad or not self.task_mix:
            raise ConfigError(f"task_mix must be a non-empty subset of {TASKS}, got {self.task_mix}")


@dataclass
class Sample:
    id: str
    task: str
    width: int
    height: int
    instances: list = field(default_factory=list)
    table: TableGrid | None = None


@dataclass
class ImageGrid:
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or not np.all(np.isfinite(self.values)):
            raise ValueError("ImageGrid values must be a finite H x W x C array")

    @property
    def shape(self) -> tuple:
        return self.values.shape


def _word(rng: np.random.Generator, cfg: SynthConfig) -> str:
    n = int(rng.integers(cfg.word_len[0], cfg.word_len[1] + 1))
    return "".join(CHARS[i] for i in rng.integers(0, len(CHARS), size=n))


def _box_instance(col: int, row: int, text: str, g: int, **labels) -> TextInstance:
    poly = Polygon16.from_box(col / g, row / g, (col + len(text)) / g, (row + 1) / g)
    return TextInstance(poly, text, **labels)


class _Occupancy:
    """Cell occupancy with a one-cell margin around every reserved block."""

    def __init__(self, g: int):
        self.g = g
        self.taken = np.zeros((g, g), dtype=bool)

    def free(self, col: int, row: int, w: int, h: int) -> bool:
        r0, r1 = max(0, row - 1), min(self.g, row + h + 1)
        c0, c1 = max(0, col - 1), min(self.g, col + w + 1)
        return not self.taken[r0:r1, c0:c1].any()

    def reserve(self, col: int, row: int, w: int, h: int) -> None:
        self.taken[row:row + h, col:col + w] = True

    def place(self, rng: np.random.Generator, w: int, h: int) -> tuple[int, int]:
        if w > self.g or h > self.g:
            raise GenerationError(f"a {w}x{h} block cannot fit a {self.g}-cell grid")
        for _ in range(MAX_TRIES):
            col = int(rng.integers(0, self.g - w + 1))
            row = int(rng.integers(0, self.g - h + 1))
            if self.free(col, row, w, h):
                self.reserve(col, row, w, h)
                return col, row
        raise GenerationError(f"could not place a {w}x{h} block after {MAX_TRIES} tries")


def _words(rng, cfg: SynthConfig) -> list[TextInstance]:
    g = cfg.grid_size
    occ = _Occupancy(g)
    n = int(rng.integers(cfg.n_instances[0], cfg.n_instances[1] + 1))
    out = []
    for _ in range(n):
        text = _word(rng, cfg)
        col, row = occ.place(rng, len(text), 1)
        out.append(_box_instance(col, row, text, g))
    return out


def _kie(rng, cfg: SynthConfig) -> list[TextInstance]:
    if not cfg.entities:
        raise ConfigError("the kie task needs a non-empty entity schema")
    out = []
    for i, inst in enumerate(_words(rng, cfg)):
        if rng.random() < cfg.unlabeled_prob:
            out.append(inst)
            continue
        label = cfg.entities[int(rng.integers(0, len(cfg.entities)))]
        out.append(TextInstance(inst.polygon, inst.text, entity=label, entity_id=i))
    return out


def _hiertext(rng, cfg: SynthConfig) -> list[TextInstance]:
    """Paragraph blocks of lines two rows apart; words on a line one cell apart."""
    g = cfg.grid_size
    occ = _Occupancy(g)
    budget = int(rng.integers(cfg.n_instances[0], cfg.n_instances[1] + 1))
    out, line_id, para_id = [], 0, 0
    while budget > 0:
        n_lines = int(rng.integers(1, min(3, budget) + 1))
        lines = []
        for _ in range(n_lines):
            if budget <= 0:
                break
            k = int(rng.integers(1, min(3, budget) + 1))
            lines.append([_word(rng, cfg) for _ in range(k)])
            budget -= k
        width = max(sum(map(len, words)) + len(words) - 1 for words in lines)
        height = 2 * len(lines) - 1
        if width > g:
            lines = [[w] for words in lines for w in words]
            width = max(len(w[0]) for w in lines)
            height = 2 * len(lines) - 1
        col, row = occ.place(rng, width, height)
        for li, words in enumerate(lines):
            x = col
            for w in words:
                out.append(_box_instance(x, row + 2 * li, w, g, line_id=line_id, para_id=para_id))
                x += len(w) + 1
            line_id += 1
        para_id += 1
    return out


def _table(rng, cfg: SynthConfig) -> TableGrid:
    n_rows = int(rng.integers(cfg.table_rows[0], cfg.table_rows[1] + 1))
    n_cols = int(rng.integers(cfg.table_cols[0], cfg.table_cols[1] + 1))
    header_rows = int(rng.integers(0, min(2, n_rows - 1) + 1)) if n_rows > 1 else 0
    taken = [[False] * n_cols for _ in range(n_rows)]
    cells = []
    for r in range(n_rows):
        for c in range(n_cols):
            if taken[r][c]:
                continue
            # spans never cross the header/body boundary
            row_end = header_rows if r < header_rows else n_rows
            rs = cs = 1
            if rng.random() < cfg.span_prob:
                max_cs = 0
                while c + max_cs < n_cols and not taken[r][c + max_cs] and max_cs < cfg.max_span:
                    max_cs += 1
                cs = int(rng.integers(1, max_cs + 1))
                max_rs = min(cfg.max_span, row_end - r)
                rs = int(rng.integers(1, max_rs + 1))
                while rs > 1 and any(any(taken[rr][c:c + cs]) for rr in range(r + 1, r + rs)):
                    rs -= 1
            for rr in range(r, r + rs):
                for cc in range(c, c + cs):
                    taken[rr][cc] = True
            cell = TableCell(r, c, rs, cs)
            if rng.random() >= cfg.empty_cell_prob:
                cell.text = _word(rng, cfg)
            cells.append(cell)
    grid = TableGrid(n_rows, n_cols, header_rows, cells)
    for cell in grid.cells:
        if cell.text:
            cell.center = layout_center(grid, cell)
    return grid.validate()


def generate_sample(rng: np.random.Generator, cfg: SynthConfig, task: str, sample_id: str = "") -> Sample:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    size = cfg.grid_size * PIXELS_PER_CELL
    sample = Sample(sample_id, task, size, size)
    if task == "table":
        sample.table = _table(rng, cfg)
    elif task == "kie":
        sample.instances = _kie(rng, cfg)
    elif task == "hiertext":
        sample.instances = _hiertext(rng, cfg)
    else:
        sample.instances = _words(rng, cfg)
    return sample


def generate_corpus(cfg: SynthConfig, n: int, task: str | None = None) -> list[Sample]:
    """``n`` samples; a pure function of (cfg, n, task). Tasks cycle through ``task_mix`` when unset."""
    rng = np.random.default_rng(cfg.seed)
    tasks = (task,) if task else cfg.task_mix
    return [generate_sample(rng, cfg, tasks[i % len(tasks)], f"{tasks[i % len(tasks)]}-{cfg.seed}-{i:05d}")
            for i in range(n)]


# ---------------------------------------------------------------------------
# feature grid

def _table_words(grid: TableGrid, g: int) -> list[TextInstance]:
    """Cell texts laid out left-aligned on the row of their center, clipped to the grid."""
    out = []
    for cell in grid.cells:
        if not cell.text:
            continue
        row = min(g - 1, int(cell.center.y * g))
        col = min(g - 1, int(cell.col * g / grid.n_cols))
        text = cell.text[:g - col]
        out.append(_box_instance(col, row, text, g))
    return out


def positional_channels(g: int) -> np.ndarray:
    ys, xs = np.mgrid[0:g, 0:g]
    return np.stack([(xs + 0.5) / g, (ys + 0.5) / g], axis=-1)


def render_feature_grid(sample: Sample, cfg: SynthConfig) -> ImageGrid:
    """Stamp every word onto the cells its box covers.

    Per cell: the one-hot of the character drawn there, occupancy, the cell's
    relative x inside its box and the box width, followed by two positional
    channels holding the cell center.
    """
    g = cfg.grid_size
    values = np.zeros((g, g, N_CHANNELS))
    values[:, :, CHAR_FEATURES:] = positional_channels(g)
    words = _table_words(sample.table, g) if sample.table is not None else sample.instances
    for inst in words:
        x0, y0, x1, _ = inst.polygon.bbox()
        col, row = int(round(x0 * g)), int(round(y0 * g))
        n = max(1, int(round((x1 - x0) * g)))
        for i in range(n):
            c = col + i
            if not (0 <= c < g and 0 <= row < g):
                continue
            ch = inst.text[i] if i < len(inst.text) else None
            pos = char_position(ch) if ch else None
            if pos is not None:
                values[row, c, pos] = 1.0
            values[row, c, N_CHAR_CHANNELS] = 1.0
            values[row, c, N_CHAR_CHANNELS + 1] = (i + 0.5) / n
            values[row, c, N_CHAR_CHANNELS + 2] = n / g
    return ImageGrid(values)


# ---------------------------------------------------------------------------
# JSONL

def _instance_to_json(inst: TextInstance) -> dict:
    d = {"polygon": [[p.x, p.y] for p in inst.polygon.points], "text": inst.text}
    for key in ("entity", "entity_id", "line_id", "para_id"):
        value = getattr(inst, key)
        if value is not None:
            d[key] = value
    return d


def _table_to_json(grid: TableGrid) -> dict:
    cells = []
    for c in grid.cells:
        d = {"row": c.row, "col": c.col, "rowspan": c.rowspan, "colspan": c.colspan, "text": c.text}
        if c.center is not None:
            d["center"] = [c.center.x, c.center.y]
        cells.append(d)
    return {"n_rows": grid.n_rows, "n_cols": grid.n_cols, "header_rows": grid.header_rows, "cells": cells}


def sample_to_json(sample: Sample) -> dict:
    d = {"id": sample.id, "task": sample.task, "width": sample.width, "height": sample.height,
         "instances": [_instance_to_json(i) for i in sample.instances]}
    if sample.table is not None:
        d["table"] = _table_to_json(sample.table)
    return d


def _need(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected an object, got {type(d).__name__}")
    if key not in d:
        raise SchemaError(f"{where}: missing required key {key!r}")
    return d[key]


def sample_from_json(d: dict, where: str = "sample") -> Sample:
    task = _need(d, "task", where)
    if task not in TASKS:
        raise SchemaError(f"{where}: unknown task {task!r}")
    instances = []
    for n, raw in enumerate(_need(d, "instances", where)):
        w = f"{where}: instance {n}"
        pts = _need(raw, "polygon", w)
        try:
            poly = Polygon16(tuple(Point(float(x), float(y)) for x, y in pts))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{w}: bad polygon: {exc}") from None
        instances.append(TextInstance(poly, _need(raw, "text", w), entity=raw.get("entity"),
                                      entity_id=raw.get("entity_id"), line_id=raw.get("line_id"),
                                      para_id=raw.get("para_id")))
    table = None
    if d.get("table") is not None:
        t = d["table"]
        cells = []
        for n, raw in enumerate(_need(t, "cells", f"{where}: table")):
            w = f"{where}: table cell {n}"
            center = raw.get("center")
            cells.append(TableCell(_need(raw, "row", w), _need(raw, "col", w), _need(raw, "rowspan", w),
                                   _need(raw, "colspan", w), _need(raw, "text", w),
                                   Point(*center) if center is not None else None))
        table = TableGrid(_need(t, "n_rows", f"{where}: table"), _need(t, "n_cols", f"{where}: table"),
                          _need(t, "header_rows", f"{where}: table"), cells)
    return Sample(_need(d, "id", where), task, _need(d, "width", where), _need(d, "height", where),
                  instances, table)


def write_jsonl(path, samples: Iterable[Sample]) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_json(s), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path) -> list[Sample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            try:
                out.append(sample_from_json(d, f"{path}:{lineno}"))
            except (ValueError, TypeError) as exc:
                if isinstance(exc, SchemaError):
                    raise
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return out


def samples_equal(a: Sequence[Sample], b: Sequence[Sample]) -> bool:
    return [sample_to_json(s) for s in a] == [sample_to_json(s) for s in b]
