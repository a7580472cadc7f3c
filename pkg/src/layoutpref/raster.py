"""Render layouts to RGB rasters, the model's input representation.

The drawing is uniformly scaled and centered into the frame with a 5%
margin; edges are drawn under vertices, both anti-aliased by deterministic
2x2 supersampling. One fixed style is used for training and inference so
the model never sees a style shift.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ParameterError, ParseError
from .graphs import Graph
from .layouts import Layout

MARGIN_FRACTION = 0.05
SUPERSAMPLE = 2


@dataclass(frozen=True)
class RasterStyle:
    size: int = 64
    vertex_radius_px: float | None = None  # default: max(1.5, size / 160)
    edge_width_px: float = 1.0
    vertex_color: tuple[float, float, float] = (0.1, 0.3, 0.8)
    edge_color: tuple[float, float, float] = (0.2, 0.2, 0.2)
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def resolved_radius(self) -> float:
        if self.vertex_radius_px is not None:
            return self.vertex_radius_px
        return max(1.5, self.size / 160.0)


@dataclass
class LayoutImage:
    graph_id: str
    layout_index: int
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) float64 in [0, 1]

    def to_chw(self) -> np.ndarray:
        """Channel-first copy for the network input."""
        return np.ascontiguousarray(self.pixels.transpose(2, 0, 1))


def _fit_to_frame(pos: np.ndarray, size_px: int) -> np.ndarray:
    """Uniform scale + center into [margin, size - margin]^2; y flipped so
    larger layout y is drawn higher. Degenerate extents collapse to center."""
    margin = MARGIN_FRACTION * size_px
    span = pos.max(axis=0) - pos.min(axis=0)
    extent = float(max(span[0], span[1]))
    center = (pos.max(axis=0) + pos.min(axis=0)) / 2.0
    if extent <= 0.0:
        scale = 0.0
    else:
        scale = (size_px - 2.0 * margin) / extent
    out = (pos - center) * scale
    out[:, 1] = -out[:, 1]
    return out + size_px / 2.0


def rasterize(layout: Layout, g: Graph, style: RasterStyle = RasterStyle()) -> LayoutImage:
    if style.size < 16:
        raise ParameterError(f"image size must be >= 16, got {style.size}")
    n = g.vertex_count
    pos = np.asarray(layout.positions, dtype=np.float64)
    if pos.shape != (n, 2):
        raise ParameterError(f"layout has {pos.shape} positions for |V|={n}")

    ss = SUPERSAMPLE
    big = style.size * ss
    canvas = np.empty((big, big, 3), dtype=np.float64)
    canvas[:] = np.asarray(style.background, dtype=np.float64)

    pts = _fit_to_frame(pos, style.size) * ss
    radius = style.resolved_radius() * ss
    half_width = style.edge_width_px * ss / 2.0
    edge_color = np.asarray(style.edge_color, dtype=np.float64)
    vertex_color = np.asarray(style.vertex_color, dtype=np.float64)

    for u, v in g.edges:
        _draw_segment(canvas, pts[u], pts[v], half_width, edge_color)
    for p in pts:
        _draw_disk(canvas, p, radius, vertex_color)

    small = canvas.reshape(style.size, ss, style.size, ss, 3).mean(axis=(1, 3))
    return LayoutImage(
        graph_id=layout.graph_id,
        layout_index=layout.layout_index,
        width=style.size,
        height=style.size,
        pixels=small,
    )


def _draw_segment(canvas: np.ndarray, a: np.ndarray, b: np.ndarray, half_width: float, color: np.ndarray) -> None:
    big = canvas.shape[0]
    lo = np.floor(np.minimum(a, b) - half_width - 1).astype(int)
    hi = np.ceil(np.maximum(a, b) + half_width + 1).astype(int)
    x0, y0 = np.clip(lo, 0, big)
    x1, y1 = np.clip(hi, 0, big)
    if x0 >= x1 or y0 >= y1:
        return
    xs = np.arange(x0, x1) + 0.5
    ys = np.arange(y0, y1) + 0.5
    px = np.stack(np.meshgrid(xs, ys), axis=-1)  # (rows, cols, 2) as (x, y)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        t = np.zeros(px.shape[:2])
    else:
        t = np.clip(((px - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    d2 = ((px - closest) ** 2).sum(-1)
    mask = d2 <= half_width**2
    canvas[y0:y1, x0:x1][mask] = color


def _draw_disk(canvas: np.ndarray, c: np.ndarray, radius: float, color: np.ndarray) -> None:
    big = canvas.shape[0]
    x0 = max(int(np.floor(c[0] - radius - 1)), 0)
    x1 = min(int(np.ceil(c[0] + radius + 1)), big)
    y0 = max(int(np.floor(c[1] - radius - 1)), 0)
    y1 = min(int(np.ceil(c[1] + radius + 1)), big)
    if x0 >= x1 or y0 >= y1:
        return
    xs = np.arange(x0, x1) + 0.5
    ys = np.arange(y0, y1) + 0.5
    dx = xs[None, :] - c[0]
    dy = ys[:, None] - c[1]
    mask = dx**2 + dy**2 <= radius**2
    canvas[y0:y1, x0:x1][mask] = color


def save_png(img: LayoutImage, path) -> None:
    data = np.rint(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_png(path) -> LayoutImage:
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            data = np.asarray(rgb, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ParseError(f"cannot decode PNG: {exc}", str(path))
    return LayoutImage(graph_id="", layout_index=-1, width=data.shape[1], height=data.shape[0], pixels=data)
