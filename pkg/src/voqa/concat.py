"""Concatenation composites: question tile joined beside the scene."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .composite import POSITIONS, CompositeArtifact, as_rgb_array
from .manifest import SampleRecord
from .rasterizer import DEFAULT_SIDE, render_text_tile

WHITE = (255, 255, 255)


def _pad_to(img: np.ndarray, length: int, axis: int) -> tuple[np.ndarray, int]:
    """Center ``img`` along ``axis`` in a white canvas; extra pixel goes bottom/right."""
    cur = img.shape[axis]
    before = (length - cur) // 2
    after = length - cur - before
    pad = [(0, 0), (0, 0), (0, 0)]
    pad[axis] = (before, after)
    return np.pad(img, pad, mode="constant", constant_values=255), before


def _scale_to(img: np.ndarray, length: int, axis: int) -> np.ndarray:
    h, w = img.shape[:2]
    if axis == 1:  # match width
        new_w, new_h = length, max(1, round(h * length / w))
    else:
        new_h, new_w = length, max(1, round(w * length / h))
    resized = Image.fromarray(img).resize((new_w, new_h), Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.uint8)


def join(scene: np.ndarray, tile: np.ndarray, position: str,
         resize: bool) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    """Join ``tile`` to ``scene`` on the given side; returns (image, tile bbox)."""
    if position not in POSITIONS:
        raise ValueError(f"position must be one of {POSITIONS}, got {position!r}")
    # axis whose lengths must agree: rows for left/right, columns for top/bottom
    shared = 0 if position in ("left", "right") else 1
    s_len, t_len = scene.shape[shared], tile.shape[shared]
    th, tw = tile.shape[:2]
    t_off = 0
    if s_len != t_len:
        target = max(s_len, t_len)
        if resize:
            if s_len < t_len:
                scene = _scale_to(scene, target, shared)
            else:
                tile = _scale_to(tile, target, shared)
                th, tw = tile.shape[:2]
        elif s_len < t_len:
            scene, _ = _pad_to(scene, target, shared)
        else:
            tile, t_off = _pad_to(tile, target, shared)
    if position == "top":
        out = np.concatenate([tile, scene], axis=0)
        tx, ty = t_off, 0
    elif position == "bottom":
        out = np.concatenate([scene, tile], axis=0)
        tx, ty = t_off, scene.shape[0]
    elif position == "left":
        out = np.concatenate([tile, scene], axis=1)
        tx, ty = 0, t_off
    else:
        out = np.concatenate([scene, tile], axis=1)
        tx, ty = scene.shape[1], t_off
    return out, (tx, ty, tx + tw, ty + th)


def compose_concat(scene, record: SampleRecord, position: str, resize: bool,
                   tile_side: int = DEFAULT_SIDE, font=None) -> CompositeArtifact:
    if position not in POSITIONS:
        raise ValueError(f"position must be one of {POSITIONS}, got {position!r}")
    if record.excluded:
        raise ValueError(f"record {record.id!r} is excluded from rendering")
    rgb = as_rgb_array(scene)
    tile = render_text_tile(record.question, side_px=tile_side, fg=(0, 0, 0),
                            bg=(255, 255, 255, 255), font=font)
    out, bbox = join(rgb, tile.pixels[..., :3], position, resize)
    return CompositeArtifact(
        source_id=record.id,
        question_bbox=bbox,
        method="concat_resize" if resize else "concat_pad",
        position=position,
        pixels=np.ascontiguousarray(out),
    )


__all__ = ["compose_concat", "join"]
