"""Table ground-truth generation: logical grid <-> merged-label tokens with points <-> HTML.

Cell encoding inside a ``<tr>`` row, in anchor-column order::

    empty, 1x1          <td></td>
    non-empty, 1x1      <td>[]</td> x y
    spanning            <td rowspan="n" colspan="m" > </td> [x y if non-empty]
"""

from __future__ import annotations

import html as html_lib
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from typing import Sequence

from .codec import CONTENT_MAX_LEN, StructuredSequence, content_sequence
from .errors import AssemblyError, ConfigError, TableError
from .geometry import DEFAULT_QUANTIZER, Point, QuantizerConfig, dequantize_coord, quantize_point
from .vocab import BOS, DEFAULT_MAX_SPAN, EOS, Vocabulary


@dataclass
class TableCell:
    row: int
    col: int
    rowspan: int = 1
    colspan: int = 1
    text: str = ""
    center: Point | None = None

    @property
    def filled(self) -> bool:
        """Non-empty cell: has text, or (parsed from tokens) a center point."""
        return bool(self.text) or self.center is not None

    @property
    def spanning(self) -> bool:
        return self.rowspan > 1 or self.colspan > 1


@dataclass
class TableGrid:
    n_rows: int
    n_cols: int
    header_rows: int = 0
    cells: list = field(default_factory=list)

    def __post_init__(self):
        self.cells = sorted(self.cells, key=lambda c: (c.row, c.col))

    def validate(self) -> "TableGrid":
        if self.n_rows < 0 or self.n_cols < 0 or not 0 <= self.header_rows <= self.n_rows:
            raise TableError(f"bad grid dims {self.n_rows}x{self.n_cols}, header_rows={self.header_rows}")
        seen = [[False] * self.n_cols for _ in range(self.n_rows)]
        for c in self.cells:
            if c.rowspan < 1 or c.colspan < 1:
                raise TableError(f"cell at ({c.row},{c.col}) has span < 1")
            if c.row < 0 or c.col < 0 or c.row + c.rowspan > self.n_rows or c.col + c.colspan > self.n_cols:
                raise TableError(f"cell at ({c.row},{c.col}) leaves the grid")
            if bool(c.text) and c.center is None:
                raise TableError(f"cell at ({c.row},{c.col}) has text but no center")
            for r in range(c.row, c.row + c.rowspan):
                for q in range(c.col, c.col + c.colspan):
                    if seen[r][q]:
                        raise TableError(f"cells overlap at ({r},{q})")
                    seen[r][q] = True
        if not all(all(row) for row in seen):
            raise TableError("cells do not cover the grid")
        return self

    def rows(self) -> list[list[TableCell]]:
        out = [[] for _ in range(self.n_rows)]
        for c in self.cells:
            out[c.row].append(c)
        return out

    def filled_cells(self) -> list[TableCell]:
        return [c for c in self.cells if c.filled]

    def structure(self) -> tuple:
        """Hashable structure key: dims, header rows, and per-cell rectangle + filled flag."""
        return (self.n_rows, self.n_cols, self.header_rows,
                tuple((c.row, c.col, c.rowspan, c.colspan, c.filled) for c in self.cells))


def layout_center(grid: TableGrid, cell: TableCell) -> Point:
    """Center of a cell's rectangle when rows and columns are laid out uniformly."""
    return Point((cell.col + cell.colspan / 2) / grid.n_cols, (cell.row + cell.rowspan / 2) / grid.n_rows)


# ---------------------------------------------------------------------------
# placement (HTML table flow), shared by the strict HTML reader and the lenient token parser

@dataclass
class _RawCell:
    rowspan: int = 1
    colspan: int = 1
    text: str = ""
    center: Point | None = None
    pos: tuple | None = None
    needs_point: bool = False


def _place(rows: list[list[_RawCell]], header_rows: int, strict: bool, diags: list) -> TableGrid:
    n_rows = len(rows)
    occupied: dict = {}
    cells = []
    unpointed = []

    def fail(msg, raw):
        if strict:
            raise TableError(msg, raw.pos)
        diags.append(msg)

    for r, row in enumerate(rows):
        col = 0
        for raw in row:
            while (r, col) in occupied:
                col += 1
            rowspan, colspan = raw.rowspan, raw.colspan
            if r + rowspan > n_rows:
                fail(f"rowspan {rowspan} at row {r} runs past the last row", raw)
                rowspan = n_rows - r
            for q in range(col, col + colspan):
                if (r, q) in occupied:
                    fail(f"colspan {colspan} at ({r},{col}) overlaps a cell spanning from above", raw)
                    colspan = q - col
                    break
            for rr in range(r, r + rowspan):
                for q in range(col, col + colspan):
                    occupied[(rr, q)] = True
            cell = TableCell(r, col, rowspan, colspan, raw.text, raw.center)
            cells.append(cell)
            if raw.needs_point and raw.center is None:
                unpointed.append(cell)
            col += colspan
    n_cols = max((q + 1 for (_, q) in occupied), default=0)
    for r in range(n_rows):
        for q in range(n_cols):
            if (r, q) not in occupied:
                if strict:
                    raise TableError(f"row {r} has no cell at column {q} (ragged table)")
                diags.append(f"filled gap at ({r},{q}) with an empty cell")
                cells.append(TableCell(r, q))
    grid = TableGrid(n_rows, n_cols, min(header_rows, n_rows), cells)
    for cell in unpointed:
        diags.append(f"non-empty cell at ({cell.row},{cell.col}) had no point; used its layout center")
        cell.center = layout_center(grid, cell)
    return grid


# ---------------------------------------------------------------------------
# HTML

class _TableHTMLParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.rows: list = []
        self.header_rows = 0
        self.section = None
        self.in_table = False
        self.done = False
        self.cell = None
        self.row = None

    def fail(self, msg):
        raise TableError(msg, self.getpos())

    def handle_starttag(self, tag, attrs):
        if self.cell is not None:
            self.fail(f"<{tag}> inside a cell is not supported")
        if tag == "table":
            if self.in_table or self.done:
                self.fail("nested or repeated <table>")
            self.in_table = True
        elif not self.in_table:
            self.fail(f"<{tag}> outside <table>")
        elif tag in ("thead", "tbody"):
            if self.section is not None or self.row is not None:
                self.fail(f"misplaced <{tag}>")
            if tag == "thead" and self.rows:
                self.fail("<thead> after body rows")
            self.section = tag
        elif tag == "tr":
            if self.row is not None:
                self.fail("nested <tr>")
            self.row = []
        elif tag == "td":
            if self.row is None:
                self.fail("<td> outside <tr>")
            spans = {"rowspan": 1, "colspan": 1}
            for name, value in attrs:
                if name not in spans:
                    self.fail(f"unsupported attribute {name!r}")
                try:
                    spans[name] = int(value)
                except (TypeError, ValueError):
                    self.fail(f"non-integer {name}={value!r}")
                if spans[name] < 1:
                    self.fail(f"{name} must be >= 1")
            self.cell = _RawCell(spans["rowspan"], spans["colspan"], pos=self.getpos())
        else:
            self.fail(f"unsupported tag <{tag}>")

    def handle_endtag(self, tag):
        if tag == "td":
            if self.cell is None:
                self.fail("stray </td>")
            self.row.append(self.cell)
            self.cell = None
        elif self.cell is not None:
            self.fail(f"</{tag}> inside a cell")
        elif tag == "tr":
            if self.row is None:
                self.fail("stray </tr>")
            self.rows.append(self.row)
            if self.section == "thead":
                self.header_rows += 1
            self.row = None
        elif tag in ("thead", "tbody"):
            if self.section != tag or self.row is not None:
                self.fail(f"stray </{tag}>")
            self.section = None
        elif tag == "table":
            if not self.in_table or self.section is not None or self.row is not None:
                self.fail("unbalanced </table>")
            self.in_table = False
            self.done = True
        else:
            self.fail(f"unsupported tag </{tag}>")

    def handle_data(self, data):
        if self.cell is not None:
            self.cell.text += data
        elif data.strip():
            self.fail(f"text {data.strip()[:20]!r} outside a cell")


def html_to_grid(html: str) -> TableGrid:
    """Parse the supported HTML subset into a grid.

    Non-empty cells get :func:`layout_center` as their center, since HTML carries
    no geometry.
    """
    parser = _TableHTMLParser()
    parser.feed(html)
    parser.close()
    if not parser.done:
        raise TableError("missing <table> ... </table>", parser.getpos())
    grid = _place(parser.rows, parser.header_rows, strict=True, diags=[])
    for c in grid.cells:
        if c.text:
            c.center = layout_center(grid, c)
    return grid.validate()


def assemble_html(grid: TableGrid, texts: Sequence[str] | None = None) -> str:
    """Canonical HTML for ``grid``; ``texts`` fill the non-empty cells in structure order."""
    filled = grid.filled_cells()
    if texts is None:
        texts = [c.text for c in filled]
    if len(texts) != len(filled):
        raise AssemblyError(f"{len(texts)} texts for {len(filled)} non-empty cells")
    fill = {id(c): t for c, t in zip(filled, texts)}
    parts = ["<table>"]
    rows = grid.rows()

    def emit(rng):
        for r in rng:
            parts.append("<tr>")
            for c in rows[r]:
                attrs = ""
                if c.rowspan > 1:
                    attrs += f' rowspan="{c.rowspan}"'
                if c.colspan > 1:
                    attrs += f' colspan="{c.colspan}"'
                parts.append(f"<td{attrs}>{html_lib.escape(fill.get(id(c), ''), quote=False)}</td>")
            parts.append("</tr>")

    if grid.header_rows:
        parts.append("<thead>")
        emit(range(grid.header_rows))
        parts.append("</thead>")
    parts.append("<tbody>")
    emit(range(grid.header_rows, grid.n_rows))
    parts.append("</tbody></table>")
    return "".join(parts)


def canonicalize_html(html: str) -> str:
    return assemble_html(html_to_grid(html))


# ---------------------------------------------------------------------------
# tokens

def _span_attr_tokens(cell: TableCell, max_span: int) -> list[str]:
    out = []
    for name, n in (("rowspan", cell.rowspan), ("colspan", cell.colspan)):
        if n > max_span:
            raise ConfigError(f"{name}={n} exceeds vocabulary max_span={max_span}")
        if n > 1:
            out.append(f'{name}="{n}"')
    return out


def grid_to_structure_tokens(grid: TableGrid, cfg: QuantizerConfig = DEFAULT_QUANTIZER,
                             max_span: int = DEFAULT_MAX_SPAN) -> list[str]:
    rows = grid.rows()
    out = [BOS]

    def emit(rng):
        for r in rng:
            out.append("<tr>")
            for c in rows[r]:
                if c.spanning:
                    out.extend(["<td", *_span_attr_tokens(c, max_span), ">", "</td>"])
                else:
                    out.append("<td>[]</td>" if c.filled else "<td></td>")
                if c.filled:
                    center = c.center if c.center is not None else layout_center(grid, c)
                    q = quantize_point(center, cfg)
                    out.extend([str(q.xt), str(q.yt)])
            out.append("</tr>")

    if grid.header_rows:
        out.append("<thead>")
        emit(range(grid.header_rows))
        out.append("</thead>")
    if grid.n_rows > grid.header_rows:
        out.append("<tbody>")
        emit(range(grid.header_rows, grid.n_rows))
        out.append("</tbody>")
    out.append(EOS)
    return out


def _is_coord(tok) -> bool:
    return isinstance(tok, int) or (isinstance(tok, str) and tok.isdigit())


def structure_tokens_to_grid(tokens: Sequence[str], cfg: QuantizerConfig = DEFAULT_QUANTIZER
                             ) -> tuple[TableGrid, list[str]]:
    """Parse structure tokens back into a grid (texts empty, centers at bin centers).

    Never raises on malformed input: problems become diagnostics and the grid is
    repaired to tile its rectangle.
    """
    diags: list = []
    toks = list(tokens)
    i = 0
    if toks and toks[0] == BOS:
        i = 1
    rows: list = []
    header_rows = 0
    section = None
    row = None
    last = None  # cell that may take a point
    last_kind = None
    pending = None

    def point(x, y):
        xt, yt = int(x), int(y)
        if not (0 <= xt < cfg.n_bins and 0 <= yt < cfg.n_bins):
            return None
        return Point(dequantize_coord(xt, cfg), dequantize_coord(yt, cfg))

    def end_row(pos):
        nonlocal row, header_rows
        if row is not None:
            rows.append(row)
            if section == "thead":
                header_rows += 1
            row = None

    def new_cell(pos, cell, kind):
        nonlocal row, last, last_kind
        if row is None:
            diags.append(f"pos {pos}: cell outside <tr>; opened a row")
            row = []
        row.append(cell)
        last, last_kind = cell, kind

    while i < len(toks):
        tok = toks[i]
        pos = i
        i += 1
        if tok == EOS:
            break
        if _is_coord(tok):
            if pending is None:
                pending = tok
                continue
            x, y, pending = pending, tok, None
            if last is None or last_kind == "empty" or last.center is not None:
                diags.append(f"pos {pos}: dropped stray point ({x},{y})")
                continue
            p = point(x, y)
            if p is None:
                diags.append(f"pos {pos}: point ({x},{y}) out of range")
                continue
            last.center = p
            continue
        if pending is not None:
            diags.append(f"pos {pos}: dropped unpaired coordinate {pending}")
            pending = None
        if tok in ("<thead>", "<tbody>"):
            end_row(pos)
            section = tok[1:-1]
            last = None
        elif tok in ("</thead>", "</tbody>"):
            if row is not None:
                diags.append(f"pos {pos}: unclosed <tr>")
            end_row(pos)
            section = None
            last = None
        elif tok == "<tr>":
            if row is not None:
                diags.append(f"pos {pos}: unclosed <tr>")
                end_row(pos)
            row = []
            last = None
        elif tok == "</tr>":
            if row is None:
                diags.append(f"pos {pos}: stray </tr>")
            end_row(pos)
            last = None
        elif tok == "<td></td>":
            new_cell(pos, _RawCell(), "empty")
        elif tok == "<td>[]</td>":
            new_cell(pos, _RawCell(needs_point=True), "needs_point")
        elif tok == "<td":
            cell = _RawCell()
            closed = False
            while i < len(toks):
                t = toks[i]
                if isinstance(t, str) and (t.startswith('rowspan="') or t.startswith('colspan="')):
                    name, _, val = t.partition("=")
                    try:
                        setattr(cell, name, max(1, int(val.strip('"'))))
                    except ValueError:
                        diags.append(f"pos {i}: bad span token {t!r}")
                    i += 1
                    continue
                if t == ">":
                    i += 1
                    closed = True
                break
            if not closed:
                diags.append(f"pos {i}: spanning cell missing '>'; group terminated")
            elif i < len(toks) and toks[i] == "</td>":
                i += 1
            else:
                diags.append(f"pos {i}: spanning cell missing '</td>'")
            new_cell(pos, cell, "span")
        else:
            diags.append(f"pos {pos}: skipped token {tok!r}")
    else:
        diags.append("no EOS: token stream truncated")
    if pending is not None:
        diags.append(f"dropped unpaired coordinate {pending}")
    if row is not None:
        diags.append("unclosed <tr> at end")
        end_row(len(toks))

    return _place(rows, header_rows, strict=False, diags=diags), diags


def build_table_sequence(grid: TableGrid, vocab: Vocabulary) -> StructuredSequence:
    """Stage-1 ids for a table (``k = 1``: the BOS token is the prompt)."""
    toks = grid_to_structure_tokens(grid, vocab.quantizer, vocab.max_span)
    return StructuredSequence(vocab.structure_ids(toks), 1, "table")


def build_table_content_targets(grid: TableGrid, vocab: Vocabulary,
                                max_len: int = CONTENT_MAX_LEN) -> list[StructuredSequence]:
    """One content sequence per non-empty cell, in structure order."""
    return [content_sequence(c.center if c.center is not None else layout_center(grid, c), c.text, vocab, max_len)
            for c in grid.cells if c.text]


def with_texts(grid: TableGrid, texts: Sequence[str]) -> TableGrid:
    """Copy of ``grid`` with the non-empty cells' texts replaced in structure order."""
    filled = grid.filled_cells()
    if len(texts) != len(filled):
        raise AssemblyError(f"{len(texts)} texts for {len(filled)} non-empty cells")
    fill = {id(c): t for c, t in zip(filled, texts)}
    cells = [replace(c, text=fill.get(id(c), c.text)) for c in grid.cells]
    return TableGrid(grid.n_rows, grid.n_cols, grid.header_rows, cells)
