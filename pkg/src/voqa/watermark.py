"""Watermark placement: region scoring, contrast-aware color choice, compositing."""

from __future__ import annotations

import colorsys
import logging
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from ._kernels import gray_image, hsv_moments, region_moments
from .composite import CompositeArtifact, WatermarkColor, as_rgb_array
from .manifest import SampleRecord
from .rasterizer import MIN_FONT_PX, MIN_TILE_PX, RenderError, render_text_tile

log = logging.getLogger(__name__)

WEIGHTS = (0.4, 0.4, 0.2)  # gradient, variance, contrast
MIN_SCENE_SIDE = 64
WCAG_THRESHOLD = 4.5
MICHELSON_EPS = 1e-6
MAX_WORK_PX = 2048  # largest working tile tried for small regions

BLACK = (0, 0, 0)
WHITE = (255, 255, 255)


@dataclass(frozen=True)
class RegionCandidate:
    x0: int
    y0: int
    side_px: int
    gradient: float
    variance: float
    contrast: float
    score: float = 0.0

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x0 + self.side_px, self.y0 + self.side_px)


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma as float64."""
    rgb = rgb.astype(np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def grid_starts(length: int, side: int) -> list[int]:
    """Window starts with stride ``side``; the last window is clamped to the edge."""
    starts = list(range(0, length - side + 1, side))
    if starts[-1] + side < length:
        starts.append(length - side)
    return starts


def region_stats(gray: np.ndarray) -> tuple[float, float, float]:
    """(mean Sobel magnitude, variance, Michelson contrast) of a gray patch."""
    gx = ndimage.sobel(gray, axis=1, mode="reflect")
    gy = ndimage.sobel(gray, axis=0, mode="reflect")
    gradient = float(np.hypot(gx, gy).mean())
    variance = float(gray.var())
    lo, hi = float(gray.min()), float(gray.max())
    contrast = (hi - lo) / (hi + lo + MICHELSON_EPS)
    return gradient, variance, contrast


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi - lo <= 0:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def enumerate_candidates(scene) -> list[RegionCandidate]:
    """Score every grid window of side ``min(H, W) // 4`` (stride = side)."""
    rgb = as_rgb_array(scene)
    h, w = rgb.shape[:2]
    if min(h, w) < MIN_SCENE_SIDE:
        raise ValueError(f"scene {w}x{h} is smaller than {MIN_SCENE_SIDE}px on a side")
    side = min(h, w) // 4
    gray = gray_image(np.ascontiguousarray(rgb))
    raw = []
    for y0 in grid_starts(h, side):
        for x0 in grid_starts(w, side):
            gradient, variance, lo, hi = region_moments(gray, y0, x0, side)
            contrast = (hi - lo) / (hi + lo + MICHELSON_EPS)
            raw.append((x0, y0, gradient, variance, contrast))
    stats = np.array([r[2:] for r in raw], dtype=np.float64)
    norm = np.column_stack([_minmax(stats[:, i]) for i in range(3)])
    scores = norm @ np.array(WEIGHTS)
    return [
        RegionCandidate(x0=x0, y0=y0, side_px=side, gradient=g, variance=v, contrast=c,
                        score=float(s))
        for (x0, y0, g, v, c), s in zip(raw, scores)
    ]


def select_region(candidates: list[RegionCandidate]) -> RegionCandidate:
    """Lowest score wins; ties go to the smallest (y0, x0)."""
    if not candidates:
        raise ValueError("no candidate regions")
    return min(candidates, key=lambda c: (c.score, c.y0, c.x0))


def _linearize(c: float) -> float:
    c = c / 255.0
    return c / 12.92 if c <= 0.03928 else ((c + 0.055) / 1.055) ** 2.4


def relative_luminance(rgb) -> float:
    r, g, b = (_linearize(float(v)) for v in rgb)
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


def wcag_contrast(rgb_a, rgb_b) -> float:
    la, lb = relative_luminance(rgb_a), relative_luminance(rgb_b)
    hi, lo = max(la, lb), min(la, lb)
    return (hi + 0.05) / (lo + 0.05)


def hsv_to_rgb8(h: float, s: float, v: float) -> tuple[int, int, int]:
    """Hue in degrees, saturation/value on 0-255."""
    r, g, b = colorsys.hsv_to_rgb((h % 360.0) / 360.0, s / 255.0, v / 255.0)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def complementary_hsv(h: float, s: float, v: float) -> tuple[float, int, int]:
    hue = (h + 180.0) % 360.0
    sat = int(round(0.8 * s)) if s > 200 else 255
    val = 0 if v > 127 else 255
    return hue, sat, val


def pick_color(region_mean_hsv, region_mean_rgb) -> WatermarkColor:
    """Complementary-hue watermark color, falling back to black/white when the
    WCAG contrast against the region mean does not exceed 4.5."""
    h, s, v = region_mean_hsv
    cand_hsv = complementary_hsv(h, s, v)
    rgb = hsv_to_rgb8(*cand_hsv)
    ratio = wcag_contrast(rgb, region_mean_rgb)
    if ratio > WCAG_THRESHOLD:
        return WatermarkColor(rgb=rgb, provenance="computed", contrast_ratio=ratio,
                              candidate_hsv=cand_hsv)
    black = wcag_contrast(BLACK, region_mean_rgb)
    white = wcag_contrast(WHITE, region_mean_rgb)
    if black >= white:
        return WatermarkColor(rgb=BLACK, provenance="black_fallback", contrast_ratio=black,
                              candidate_hsv=cand_hsv)
    return WatermarkColor(rgb=WHITE, provenance="white_fallback", contrast_ratio=white,
                          candidate_hsv=cand_hsv)


def rgb_to_hsv_array(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel HSV: hue in degrees [0, 360), saturation/value on 0-255."""
    rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta == 0, 1.0, delta)
    hue = np.select(
        [delta == 0, mx == r, mx == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    ) * 60.0
    sat = np.where(mx == 0, 0.0, delta / np.where(mx == 0, 1.0, mx)) * 255.0
    return np.stack([hue % 360.0, sat, mx], axis=-1)


def region_mean_hsv(rgb: np.ndarray) -> tuple[float, float, float]:
    """Mean HSV of a patch; hue is a saturation-weighted circular mean."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    n = rgb.shape[0] * rgb.shape[1]
    ws, wc, s_sum, v_sum = hsv_moments(rgb)
    hue = math.degrees(math.atan2(ws, wc)) % 360.0 if s_sum > 0 else 0.0
    return float(hue), s_sum / n, v_sum / n


def region_mean_rgb(rgb: np.ndarray) -> tuple[int, int, int]:
    mean = rgb.reshape(-1, 3).astype(np.float64).mean(axis=0)
    return tuple(int(round(c)) for c in mean)


def alpha_composite(base: np.ndarray, tile_rgba: np.ndarray, x0: int, y0: int) -> None:
    """Blend an RGBA tile onto ``base`` in place."""
    th, tw = tile_rgba.shape[:2]
    under = Image.fromarray(base[y0:y0 + th, x0:x0 + tw]).convert("RGBA")
    blended = Image.alpha_composite(under, Image.fromarray(tile_rgba, "RGBA"))
    base[y0:y0 + th, x0:x0 + tw] = np.asarray(blended.convert("RGB"))


def _watermark_tile(text: str, side: int, fg, font) -> np.ndarray:
    """Transparent tile of exactly ``side`` px.

    Regions that are too small for the text (or for the rasterizer) are
    rendered at a doubled working size until the text fits, then shrunk.
    """
    work = max(side, MIN_TILE_PX)
    while True:
        try:
            tile = render_text_tile(text, side_px=work, fg=fg, bg=(255, 255, 255, 0), font=font)
            break
        except RenderError:
            if work >= MAX_WORK_PX:
                raise
            work = min(work * 2, MAX_WORK_PX)
    if work == side:
        return tile.pixels
    if tile.font_px * side / work < MIN_FONT_PX:
        log.warning("question shrunk below %dpx font to fit a %dpx region", MIN_FONT_PX, side)
    shrunk = Image.fromarray(tile.pixels, "RGBA").resize((side, side), Image.Resampling.LANCZOS)
    return np.asarray(shrunk)


def compose_watermark(scene, record: SampleRecord, font=None) -> CompositeArtifact:
    if record.excluded:
        raise ValueError(f"record {record.id!r} is excluded from rendering")
    rgb = as_rgb_array(scene)
    region = select_region(enumerate_candidates(rgb))
    x0, y0, x1, y1 = region.bbox
    patch = rgb[y0:y1, x0:x1]
    color = pick_color(region_mean_hsv(patch), region_mean_rgb(patch))
    pixels = _watermark_tile(record.question, region.side_px, color.rgb, font)
    out = rgb.copy()
    alpha_composite(out, pixels, x0, y0)
    return CompositeArtifact(
        source_id=record.id,
        question_bbox=region.bbox,
        method="watermark",
        pixels=out,
        color=color,
    )


__all__ = [
    "RegionCandidate",
    "WatermarkColor",
    "compose_watermark",
    "complementary_hsv",
    "enumerate_candidates",
    "grid_starts",
    "hsv_to_rgb8",
    "pick_color",
    "region_mean_hsv",
    "region_mean_rgb",
    "region_stats",
    "relative_luminance",
    "rgb_to_hsv_array",
    "select_region",
    "wcag_contrast",
]
