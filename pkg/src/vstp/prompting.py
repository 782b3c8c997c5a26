"""Spatial-window and prefix-window prompt samplers and the matching instance filters.

The spatial sampler follows the reference pseudo-code draw for draw, so a
``random.Random`` seeded identically reproduces the same windows.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .geometry import DEFAULT_QUANTIZER, QuantizerConfig, Window, full_window, quantize_point
from .vocab import CHARS, FULL_PREFIX, PrefixWindow

DEFAULT_WINDOW_PROB = 0.4
FIXED_MODE_END = 0.7
LAYOUT_XS = (3, 3, 1, 3, 2, 2, 2, 1)
LAYOUT_YS = (3, 1, 3, 2, 3, 2, 1, 2)
PREFIX_FULL_PROB = 0.4


@lru_cache(maxsize=8)
def _fixed_windows(n_bins: int) -> tuple[Window, ...]:
    out = []
    for num_x, num_y in zip(LAYOUT_XS, LAYOUT_YS):
        inter_x = min(int(n_bins / num_x), n_bins - 1)
        inter_y = min(int(n_bins / num_y), n_bins - 1)
        for i in range(num_x):
            for j in range(num_y):
                start_x, start_y = i * inter_x, j * inter_y
                out.append(Window(start_x, start_y,
                                  min(start_x + inter_x, n_bins - 1),
                                  min(start_y + inter_y, n_bins - 1)))
    return tuple(out)


def enumerate_fixed_windows(cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> list[Window]:
    """All fixed-mode windows, in the order the sampler chooses among them (35 of them)."""
    return list(_fixed_windows(cfg.n_bins))


@dataclass(frozen=True)
class SpatialDraw:
    """A sampled window plus how it was drawn; ``rect`` is the pre-clamp (w, h) in random mode."""

    window: Window
    mode: str
    rect: tuple | None = None


def draw_spatial_window(rng: random.Random, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> SpatialDraw:
    n_bins = cfg.n_bins
    prob = rng.uniform(0, 1)
    if prob < DEFAULT_WINDOW_PROB:
        return SpatialDraw(full_window(cfg), "default")
    if prob < FIXED_MODE_END:
        return SpatialDraw(rng.choice(_fixed_windows(n_bins)), "fixed")
    inter = int(n_bins / 3)
    start_x = rng.randint(0, inter * 2)
    start_y = rng.randint(0, inter * 2)
    rect_w, rect_h = rng.randint(inter, n_bins - 1), rng.randint(inter, n_bins - 1)
    window = Window(start_x, start_y, min(start_x + rect_w, n_bins - 1), min(start_y + rect_h, n_bins - 1))
    return SpatialDraw(window, "random", (rect_w, rect_h))


def sample_spatial_window(rng: random.Random, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> Window:
    return draw_spatial_window(rng, cfg).window


def sample_prefix_window(rng: random.Random, vocab=None) -> PrefixWindow:
    """Full range with probability 0.4, otherwise an ordered pair of uniform dictionary positions."""
    chars = vocab.chars if vocab is not None else CHARS
    if rng.random() < PREFIX_FULL_PROB:
        return FULL_PREFIX
    p, q = rng.randrange(len(chars)), rng.randrange(len(chars))
    return PrefixWindow(chars[min(p, q)], chars[max(p, q)])


def filter_by_spatial(instances: Sequence, window: Window, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> list:
    """Keep instances whose quantized center lies inside ``window`` (inclusive)."""
    return [t for t in instances if window.contains(quantize_point(t.center, cfg))]


def filter_by_prefix(instances: Sequence, window: PrefixWindow) -> list:
    """Keep instances whose first character falls in the prefix window."""
    return [t for t in instances if t.text and window.contains(t.text[0])]
