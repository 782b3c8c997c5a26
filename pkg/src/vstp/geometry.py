"""Normalized coordinates, bin quantization, polygons and polygon IoU."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DomainError

N_POLY_POINTS = 16


@dataclass(frozen=True)
class QuantizerConfig:
    n_bins: int = 1000

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise ConfigError(f"n_bins must be an integer >= 2, got {self.n_bins!r}")


DEFAULT_QUANTIZER = QuantizerConfig()


class Point(NamedTuple):
    """A point normalized to image width/height, both in [0, 1]."""

    x: float
    y: float


class QuantizedPoint(NamedTuple):
    xt: int
    yt: int


def _check_unit(value: float, what: str = "coordinate") -> None:
    # NaN fails both comparisons
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{what} {value!r} outside [0, 1]")


@dataclass(frozen=True)
class Polygon16:
    """Exactly 16 contour points, stored in the order they were given."""

    points: tuple

    def __post_init__(self):
        pts = tuple(Point(float(x), float(y)) for x, y in self.points)
        if len(pts) != N_POLY_POINTS:
            raise DomainError(f"polygon needs {N_POLY_POINTS} points, got {len(pts)}")
        for p in pts:
            _check_unit(p.x)
            _check_unit(p.y)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_box(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon16":
        """Sample an axis-aligned box clockwise from its top-left corner, 4 points per side."""
        w, h = x1 - x0, y1 - y0
        pts = []
        pts += [(x0 + w * i / 4, y0) for i in range(4)]
        pts += [(x1, y0 + h * i / 4) for i in range(4)]
        pts += [(x1 - w * i / 4, y1) for i in range(4)]
        pts += [(x0, y1 - h * i / 4) for i in range(4)]
        return cls(tuple(pts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p.x for p in self.points]
        ys = [p.y for p in self.points]
        return min(xs), min(ys), max(xs), max(ys)


@dataclass(frozen=True)
class Window:
    """Spatial prompt window in coordinate tokens, inclusive on both ends."""

    start_x: int
    start_y: int
    end_x: int
    end_y: int

    def validate(self, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> "Window":
        top = cfg.n_bins - 1
        if not (0 <= self.start_x <= self.end_x <= top and 0 <= self.start_y <= self.end_y <= top):
            raise DomainError(f"invalid window {self.as_list()} for n_bins={cfg.n_bins}")
        return self

    def as_list(self) -> list[int]:
        return [self.start_x, self.start_y, self.end_x, self.end_y]

    def contains(self, q: QuantizedPoint) -> bool:
        return self.start_x <= q.xt <= self.end_x and self.start_y <= q.yt <= self.end_y


def full_window(cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> Window:
    return Window(0, 0, cfg.n_bins - 1, cfg.n_bins - 1)


def quantize_coord(x: float, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> int:
    _check_unit(x)
    return min(int(math.floor(x * cfg.n_bins)), cfg.n_bins - 1)


def dequantize_coord(t: int, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> float:
    """Map a token back to the center of its bin."""
    if int(t) != t or not (0 <= t < cfg.n_bins):
        raise DomainError(f"coordinate token {t!r} outside [0, {cfg.n_bins - 1}]")
    return (int(t) + 0.5) / cfg.n_bins


def quantize_array(values, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> np.ndarray:
    """Vectorized :func:`quantize_coord`."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and not (np.all(arr >= 0.0) and np.all(arr <= 1.0)):
        raise DomainError("coordinates outside [0, 1]")
    return np.minimum(np.floor(arr * cfg.n_bins), cfg.n_bins - 1).astype(np.int64)


def quantize_point(p: Point, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> QuantizedPoint:
    return QuantizedPoint(quantize_coord(p.x, cfg), quantize_coord(p.y, cfg))


def dequantize_point(q: QuantizedPoint, cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> Point:
    return Point(dequantize_coord(q.xt, cfg), dequantize_coord(q.yt, cfg))


def center_of(poly: Polygon16) -> Point:
    """Bounding-box center of the polygon."""
    x0, y0, x1, y1 = poly.bbox()
    return Point((x0 + x1) / 2, (y0 + y1) / 2)


def raster_order(centers: Sequence[Point], cfg: QuantizerConfig = DEFAULT_QUANTIZER) -> list[int]:
    """Indices sorting centers top-to-bottom, then left-to-right, on the token grid.

    Ties keep the input order.
    """
    keys = [(quantize_coord(c.y, cfg), quantize_coord(c.x, cfg), i) for i, c in enumerate(centers)]
    return [k[2] for k in sorted(keys)]


IOU_GRID = 1000


def _raster_inside(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    # even-odd rule evaluated at pixel centers
    X, Y = np.meshgrid(xs, ys)
    inside = np.zeros(X.shape, dtype=bool)
    nxt = np.roll(poly, -1, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for (xa, ya), (xb, yb) in zip(poly, nxt):
            if ya == yb:
                continue
            crosses = (ya > Y) != (yb > Y)
            x_at = xa + (Y - ya) * (xb - xa) / (yb - ya)
            inside ^= crosses & (X < x_at)
    return inside


def polygon_iou(a: Polygon16, b: Polygon16, grid: int = IOU_GRID) -> float:
    """Intersection over union of two polygons, rasterized on a ``grid``×``grid`` lattice."""
    pa, pb = a.as_array(), b.as_array()
    ax0, ay0, ax1, ay1 = a.bbox()
    bx0, by0, bx1, by1 = b.bbox()
    if ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0:
        return 0.0
    lo_x = int(math.floor(min(ax0, bx0) * grid))
    hi_x = min(int(math.ceil(max(ax1, bx1) * grid)) + 1, grid)
    lo_y = int(math.floor(min(ay0, by0) * grid))
    hi_y = min(int(math.ceil(max(ay1, by1) * grid)) + 1, grid)
    xs = (np.arange(lo_x, hi_x) + 0.5) / grid
    ys = (np.arange(lo_y, hi_y) + 0.5) / grid
    ma = _raster_inside(pa, xs, ys)
    mb = _raster_inside(pb, xs, ys)
    inter = int(np.count_nonzero(ma & mb))
    union = int(np.count_nonzero(ma | mb))
    if union == 0:
        return 0.0
    return inter / union
