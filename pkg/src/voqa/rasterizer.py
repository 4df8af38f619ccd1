"""Render question text into a square tile with automatic font sizing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont

log = logging.getLogger(__name__)

MIN_FONT_PX = 6
MIN_TILE_PX = 32
MARGIN_PX = 2
DEFAULT_SIDE = 224
DEFAULT_FONT = "DejaVuSans-Bold"
REPLACEMENT_CHAR = "?"

Color3 = tuple[int, int, int]
Color4 = tuple[int, int, int, int]


class RenderError(ValueError):
    pass


@dataclass
class TextTile:
    pixels: np.ndarray  # (side, side, 4) uint8 RGBA
    side_px: int
    text: str
    font_px: int
    line_count: int
    lines: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_image(self) -> Image.Image:
        return Image.fromarray(self.pixels, mode="RGBA")

    def save_png(self, path: str | Path) -> None:
        self.to_image().save(path, format="PNG")


def resolve_font(font: str | Path | None) -> Path:
    """Map a font id or file path to a font file; the default face is bundled."""
    if font is None or font == DEFAULT_FONT:
        ref = resources.files("voqa") / "assets" / "fonts" / "DejaVuSans-Bold.ttf"
        return Path(str(ref))
    path = Path(font)
    if not path.is_file():
        raise RenderError(f"font file not found: {font}")
    return path


@lru_cache(maxsize=8)
def _codepoints(font_path: str) -> frozenset[int]:
    with TTFont(font_path, lazy=True) as tt:
        return frozenset(tt.getBestCmap() or {})


@lru_cache(maxsize=512)
def _font(font_path: str, size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(font_path, size)


def substitute_missing_glyphs(text: str, font_path: str) -> tuple[str, list[str]]:
    covered = _codepoints(font_path)
    out, missing = [], []
    for ch in text:
        if ch.isspace() or ord(ch) in covered:
            out.append(ch)
        else:
            out.append(REPLACEMENT_CHAR)
            missing.append(ch)
    warnings = []
    if missing:
        uniq = "".join(dict.fromkeys(missing))
        warnings.append(f"missing glyphs replaced with {REPLACEMENT_CHAR!r}: {uniq!r}")
    return "".join(out), warnings


def _width(font: ImageFont.FreeTypeFont, s: str) -> float:
    left, _, right, _ = font.getbbox(s)
    return right - left


def wrap_text(text: str, font: ImageFont.FreeTypeFont, max_width: float) -> list[str]:
    """Greedy word wrap; explicit newlines start a new line and words wider
    than a line are broken between characters."""
    lines: list[str] = []
    for paragraph in text.split("\n"):
        words = paragraph.split()
        if not words:
            continue
        current = ""
        for word in words:
            candidate = f"{current} {word}" if current else word
            if _width(font, candidate) <= max_width:
                current = candidate
                continue
            if current:
                lines.append(current)
                current = ""
            if _width(font, word) <= max_width:
                current = word
                continue
            # hard break
            for ch in word:
                if current and _width(font, current + ch) > max_width:
                    lines.append(current)
                    current = ""
                current += ch
        if current:
            lines.append(current)
    return lines


@dataclass
class _Layout:
    lines: list[str]
    offsets: list[tuple[float, float]]  # draw origin per line, relative to ink box top-left
    ink_w: float
    ink_h: float


def _layout(text: str, font: ImageFont.FreeTypeFont, avail: int) -> _Layout | None:
    lines = wrap_text(text, font, avail)
    if not lines:
        return None
    ascent, descent = font.getmetrics()
    pitch = ascent + descent
    boxes = [font.getbbox(line) for line in lines]
    top = min(i * pitch + b[1] for i, b in enumerate(boxes))
    bottom = max(i * pitch + b[3] for i, b in enumerate(boxes))
    ink_w = max(b[2] - b[0] for b in boxes)
    ink_h = bottom - top
    if ink_w > avail or ink_h > avail:
        return None
    offsets = []
    for i, b in enumerate(boxes):
        line_w = b[2] - b[0]
        x = (ink_w - line_w) / 2 - b[0]
        y = i * pitch - top
        offsets.append((x, y))
    return _Layout(lines, offsets, ink_w, ink_h)


def render_text_tile(
    text: str,
    side_px: int = DEFAULT_SIDE,
    fg: Color3 = (0, 0, 0),
    bg: Color4 | Color3 = (255, 255, 255, 255),
    font: str | Path | None = None,
) -> TextTile:
    """Rasterize ``text`` into a ``side_px`` square tile.

    Picks the largest font size in ``[6, side_px]`` whose wrapped layout fits
    inside the tile minus a 2 px margin, then centers the block. A ``bg``
    alpha of 0 yields a transparent tile suitable for compositing.
    """
    if not text or not text.strip():
        raise RenderError("cannot render empty text")
    if side_px < MIN_TILE_PX:
        raise RenderError(f"side_px must be >= {MIN_TILE_PX}, got {side_px}")
    if len(bg) == 3:
        bg = (*bg, 255)
    font_path = str(resolve_font(font))
    text, warnings = substitute_missing_glyphs(text, font_path)
    for w in warnings:
        log.warning(w)

    avail = side_px - 2 * MARGIN_PX
    lo, hi = MIN_FONT_PX, side_px
    best: tuple[int, _Layout] | None = None
    while lo <= hi:
        mid = (lo + hi) // 2
        layout = _layout(text, _font(font_path, mid), avail)
        if layout is not None:
            best = (mid, layout)
            lo = mid + 1
        else:
            hi = mid - 1
    if best is None:
        raise RenderError(
            f"text of length {len(text)} does not fit a {side_px}px tile at {MIN_FONT_PX}px")

    size, layout = best
    fnt = _font(font_path, size)
    img = Image.new("RGBA", (side_px, side_px), tuple(bg))
    # Draw on a separate layer so a transparent background keeps clean alpha.
    layer = Image.new("RGBA", (side_px, side_px), (*fg, 0))
    draw = ImageDraw.Draw(layer)
    x0 = (side_px - layout.ink_w) / 2
    y0 = (side_px - layout.ink_h) / 2
    for line, (dx, dy) in zip(layout.lines, layout.offsets):
        draw.text((round(x0 + dx), round(y0 + dy)), line, font=fnt, fill=(*fg, 255))
    img = Image.alpha_composite(img, layer)
    return TextTile(
        pixels=np.asarray(img, dtype=np.uint8).copy(),
        side_px=side_px,
        text=text,
        font_px=size,
        line_count=len(layout.lines),
        lines=layout.lines,
        warnings=warnings,
    )


__all__ = ["RenderError", "TextTile", "render_text_tile", "resolve_font", "wrap_text"]
