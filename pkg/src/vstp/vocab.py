"""The unified token vocabulary: coordinate bins, characters, structural and special tokens.

Ids are laid out as four contiguous partitions::

    [0, n_bins)                    coordinate tokens
    [n_bins, n_bins + 94)          characters '!'..'~' in codepoint order
    [..., ... + |structural|)      task structural tokens
    last four                      <S> </S> <PAD> <UNK>
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DecodeError
from .geometry import QuantizerConfig

TASKS = ("spotting", "kie", "table", "hiertext")

CHARS = tuple(chr(c) for c in range(33, 127))
BOS, EOS, PAD, UNK = "<S>", "</S>", "<PAD>", "<UNK>"
SPECIALS = (BOS, EOS, PAD, UNK)

TABLE_TOKENS = (
    "<thead>", "</thead>", "<tbody>", "</tbody>", "<tr>", "</tr>",
    "<td></td>", "<td>[]</td>", "<td", ">", "</td>",
)
HIER_TOKENS = ("<LINE>", "</LINE>", "<PARA>", "</PARA>")
DEFAULT_MAX_SPAN = 10

_CHAR_POS = {c: i for i, c in enumerate(CHARS)}


def char_position(c: str) -> int | None:
    """Position of ``c`` in the character dictionary, or None."""
    return _CHAR_POS.get(c)


@dataclass(frozen=True)
class PrefixWindow:
    """Character-range prompt; both ends inclusive, ordered by dictionary position."""

    first: str
    last: str

    def __post_init__(self):
        p, q = char_position(self.first), char_position(self.last)
        if p is None or q is None:
            raise ConfigError(f"prefix window ends must be dictionary chars: {self.first!r}, {self.last!r}")
        if p > q:
            raise ConfigError(f"prefix window {self.first!r}..{self.last!r} is reversed")

    def contains(self, c: str) -> bool:
        pos = char_position(c)
        return pos is not None and char_position(self.first) <= pos <= char_position(self.last)


FULL_PREFIX = PrefixWindow(CHARS[0], CHARS[-1])


def span_tokens(max_span: int) -> tuple[str, ...]:
    cols = [f'colspan="{n}"' for n in range(2, max_span + 1)]
    rows = [f'rowspan="{n}"' for n in range(2, max_span + 1)]
    return tuple(cols + rows)


def structural_tokens(task: str, entities: Sequence[str] = (), max_span: int = DEFAULT_MAX_SPAN) -> tuple[str, ...]:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    if task == "spotting":
        return ()
    if task == "hiertext":
        return HIER_TOKENS
    if task == "table":
        if max_span < 1:
            raise ConfigError("max_span must be >= 1")
        return TABLE_TOKENS + span_tokens(max_span)
    out = []
    for name in entities:
        out += [f"<{name}>", f"</{name}>"]
    return tuple(out)


class Vocabulary:
    """Bidirectional token <-> id map. Immutable after construction."""

    def __init__(self, n_bins: int, structural: Sequence[str] = (), task: str = "spotting",
                 entities: Sequence[str] = (), max_span: int = DEFAULT_MAX_SPAN):
        self.quantizer = QuantizerConfig(n_bins)
        self.n_bins = n_bins
        self.task = task
        self.entities = tuple(entities)
        self.max_span = max_span
        self.chars = CHARS
        self.structural = tuple(structural)
        self.specials = SPECIALS
        if len(set(self.structural)) != len(self.structural):
            dupes = sorted({t for t in self.structural if self.structural.count(t) > 1})
            raise ConfigError(f"duplicate structural tokens: {dupes}")
        # ">" is both a table tag and a character; partitions keep the ids apart
        clash = set(self.structural) & set(SPECIALS)
        if clash:
            raise ConfigError(f"structural tokens clash with reserved tokens: {sorted(clash)}")

        self.char_offset = n_bins
        self.struct_offset = self.char_offset + len(self.chars)
        self.special_offset = self.struct_offset + len(self.structural)
        self.size = self.special_offset + len(SPECIALS)
        self._struct_ids = {t: self.struct_offset + i for i, t in enumerate(self.structural)}
        self._special_ids = {t: self.special_offset + i for i, t in enumerate(SPECIALS)}
        self.bos_id = self._special_ids[BOS]
        self.eos_id = self._special_ids[EOS]
        self.pad_id = self._special_ids[PAD]
        self.unk_id = self._special_ids[UNK]
        self.entity_open = {e: self._struct_ids[f"<{e}>"] for e in self.entities} if task == "kie" else {}
        self.entity_close = {e: self._struct_ids[f"</{e}>"] for e in self.entities} if task == "kie" else {}

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"Vocabulary(task={self.task!r}, n_bins={self.n_bins}, size={self.size})"

    # partition tests
    def is_coord(self, i: int) -> bool:
        return 0 <= i < self.char_offset

    def is_char(self, i: int) -> bool:
        return self.char_offset <= i < self.struct_offset

    def is_structural(self, i: int) -> bool:
        return self.struct_offset <= i < self.special_offset

    def is_special(self, i: int) -> bool:
        return self.special_offset <= i < self.size

    def kind(self, i: int) -> str:
        if self.is_coord(i):
            return "coord"
        if self.is_char(i):
            return "char"
        if self.is_structural(i):
            return "structural"
        if self.is_special(i):
            return "special"
        raise DecodeError(f"token id {i!r} outside vocabulary of size {self.size}")

    # lookups
    def coord_id(self, t: int) -> int:
        if not 0 <= t < self.n_bins:
            raise DecodeError(f"coordinate token {t} outside [0, {self.n_bins - 1}]")
        return int(t)

    def char_id(self, c: str) -> int:
        pos = char_position(c)
        return self.unk_id if pos is None else self.char_offset + pos

    def char_ids(self, text: str) -> list[int]:
        return [self.char_id(c) for c in text]

    def token_id(self, token: str) -> int:
        """Id of a structural or special token."""
        if token in self._struct_ids:
            return self._struct_ids[token]
        if token in self._special_ids:
            return self._special_ids[token]
        raise DecodeError(f"unknown structural/special token {token!r}")

    def lookup(self, token: str, kind: str) -> int:
        if kind == "coord":
            return self.coord_id(int(token))
        if kind == "char":
            if char_position(token) is None:
                raise DecodeError(f"{token!r} is not a dictionary character")
            return self.char_id(token)
        return self.token_id(token)

    def token(self, i: int) -> str:
        kind = self.kind(i)
        if kind == "coord":
            return str(i)
        if kind == "char":
            return self.chars[i - self.char_offset]
        if kind == "structural":
            return self.structural[i - self.struct_offset]
        return SPECIALS[i - self.special_offset]

    def detokenize(self, ids: Iterable[int]) -> list[str]:
        return [self.token(int(i)) for i in ids]

    def decode_text(self, ids: Iterable[int]) -> str:
        """Concatenate character tokens; UNK renders as U+FFFD, other tokens are skipped."""
        out = []
        for i in ids:
            if self.is_char(i):
                out.append(self.chars[i - self.char_offset])
            elif i == self.unk_id:
                out.append("�")
        return "".join(out)

    def structure_ids(self, tokens: Iterable[str | int]) -> list[int]:
        """Encode a structure-only token list: integers and digit strings become coordinates."""
        out = []
        for t in tokens:
            if isinstance(t, int) or (isinstance(t, str) and t.isdigit()):
                out.append(self.coord_id(int(t)))
            else:
                out.append(self.token_id(t))
        return out

    # persistence
    def to_dict(self) -> dict:
        return {
            "format": "vstp-vocab",
            "version": 1,
            "task": self.task,
            "n_bins": self.n_bins,
            "entities": list(self.entities),
            "max_span": self.max_span,
            "partitions": {
                "coordinates": self.n_bins,
                "chars": list(self.chars),
                "structural": list(self.structural),
                "specials": list(SPECIALS),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        if d.get("format") != "vstp-vocab":
            raise ConfigError("not a vstp vocabulary dump")
        parts = d["partitions"]
        if tuple(parts["chars"]) != CHARS or tuple(parts["specials"]) != SPECIALS:
            raise ConfigError("vocabulary dump has an incompatible character or special partition")
        return cls(d["n_bins"], parts["structural"], task=d["task"],
                   entities=d.get("entities", ()), max_span=d.get("max_span", DEFAULT_MAX_SPAN))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(n_bins: int = 1000, task: str = "spotting", entities: Sequence[str] = (),
                max_span: int = DEFAULT_MAX_SPAN) -> Vocabulary:
    """Build the vocabulary for one task.

    ``entities`` lists KIE classes (ignored by other tasks); ``max_span`` bounds
    table ``rowspan``/``colspan`` tokens.
    """
    if n_bins < 2:
        raise ConfigError("n_bins must be >= 2")
    if task == "kie" and len(set(entities)) != len(entities):
        raise ConfigError(f"duplicate entity classes in schema: {list(entities)}")
    return Vocabulary(n_bins, structural_tokens(task, entities, max_span), task=task,
                      entities=entities if task == "kie" else (), max_span=max_span)
