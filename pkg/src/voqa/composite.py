"""Composite image artifacts and their on-disk form (PNG + sidecar JSONL)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

METHODS = ("watermark", "concat_pad", "concat_resize")
POSITIONS = ("top", "bottom", "left", "right")
PROVENANCES = ("computed", "black_fallback", "white_fallback")

BBox = tuple[int, int, int, int]


@dataclass(frozen=True)
class WatermarkColor:
    rgb: tuple[int, int, int]
    provenance: str
    contrast_ratio: float
    # complementary HSV before any fallback: (hue deg, sat 0-255, val 0-255)
    candidate_hsv: tuple[float, int, int] | None = None


@dataclass
class CompositeArtifact:
    """A scene with its question embedded.

    ``pixels`` may be ``None`` for artifacts reloaded from a sidecar; in that
    case ``size`` and ``image_path`` describe the image on disk.
    """

    source_id: str
    question_bbox: BBox
    method: str
    pixels: np.ndarray | None = None
    position: str | None = None
    color: WatermarkColor | None = None
    image_path: str | None = None
    size: tuple[int, int] | None = None  # (width, height)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown composite method {self.method!r}")
        if self.position is not None and self.position not in POSITIONS:
            raise ValueError(f"unknown position {self.position!r}")
        if self.size is None and self.pixels is not None:
            h, w = self.pixels.shape[:2]
            self.size = (int(w), int(h))
        self.question_bbox = tuple(int(v) for v in self.question_bbox)

    @property
    def width(self) -> int:
        return self.size[0]

    @property
    def height(self) -> int:
        return self.size[1]

    def to_image(self) -> Image.Image:
        if self.pixels is None:
            if self.image_path is None:
                raise ValueError(f"artifact {self.source_id!r} has neither pixels nor image_path")
            with Image.open(self.image_path) as im:
                return im.convert("RGB")
        return Image.fromarray(self.pixels, mode="RGB")

    def png_bytes(self) -> bytes:
        if self.pixels is None and self.image_path is not None:
            path = Path(self.image_path)
            if path.suffix.lower() == ".png":
                return path.read_bytes()
        from io import BytesIO

        buf = BytesIO()
        self.to_image().save(buf, format="PNG")
        return buf.getvalue()

    def sidecar_entry(self) -> dict:
        entry = {
            "id": self.source_id,
            "bbox": list(self.question_bbox),
            "method": self.method,
            "color": list(self.color.rgb) if self.color else None,
            "provenance": self.color.provenance if self.color else None,
        }
        if self.position is not None:
            entry["position"] = self.position
        return entry


def load_scene(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def as_rgb_array(scene) -> np.ndarray:
    if isinstance(scene, Image.Image):
        return np.asarray(scene.convert("RGB"), dtype=np.uint8).copy()
    arr = np.asarray(scene)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError(f"expected an HxWx3 uint8 image, got {arr.shape} {arr.dtype}")
    return arr


def write_artifacts(artifacts: Iterable[CompositeArtifact], out_dir: str | Path,
                    sidecar_name: str = "sidecar.jsonl") -> Path:
    """Write ``<id>.png`` per artifact plus one sidecar line each."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sidecar = out / sidecar_name
    with sidecar.open("w", encoding="utf-8") as fh:
        for art in artifacts:
            png = out / f"{safe_filename(art.source_id)}.png"
            # Fixed PNG settings keep output byte-stable across runs.
            art.to_image().save(png, format="PNG", optimize=False, compress_level=6)
            art.image_path = str(png)
            fh.write(json.dumps(art.sidecar_entry(), ensure_ascii=False) + "\n")
    return sidecar


def safe_filename(sample_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.#" else "_" for c in sample_id)


def load_sidecar(path: str | Path) -> list[CompositeArtifact]:
    """Reload artifacts (without pixels) from a sidecar next to its PNGs."""
    path = Path(path)
    artifacts = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                png = path.parent / f"{safe_filename(entry['id'])}.png"
                size = None
                if png.exists():
                    with Image.open(png) as im:
                        size = im.size
                color = None
                if entry.get("color") is not None:
                    color = WatermarkColor(rgb=tuple(entry["color"]), provenance=entry["provenance"],
                                           contrast_ratio=float("nan"))
                artifacts.append(CompositeArtifact(
                    source_id=entry["id"],
                    question_bbox=tuple(entry["bbox"]),
                    method=entry["method"],
                    position=entry.get("position"),
                    color=color,
                    image_path=str(png),
                    size=size,
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad sidecar entry ({exc})") from None
    return artifacts


__all__ = [
    "METHODS",
    "POSITIONS",
    "CompositeArtifact",
    "WatermarkColor",
    "as_rgb_array",
    "load_scene",
    "load_sidecar",
    "safe_filename",
    "write_artifacts",
]
