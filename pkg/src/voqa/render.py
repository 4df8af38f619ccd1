"""Batch rendering of a manifest into composite images."""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from .composite import POSITIONS, CompositeArtifact, load_scene
from .concat import compose_concat
from .manifest import SampleRecord
from .watermark import compose_watermark

RENDER_METHODS = ("watermark", "concat-pad", "concat-resize")


def resolve_scene(record: SampleRecord, base_dir: str | Path | None) -> Path:
    path = Path(record.scene_path)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


def choose_position(position: str, seed: int, sample_id: str) -> str:
    """``random`` draws uniformly per sample from a stream keyed by seed and id."""
    if position != "random":
        return position
    return random.Random(f"{seed}:{sample_id}").choice(POSITIONS)


def render_one(record: SampleRecord, method: str, position: str = "bottom", seed: int = 0,
               base_dir: str | Path | None = None, font=None) -> CompositeArtifact:
    scene = load_scene(resolve_scene(record, base_dir))
    if method == "watermark":
        return compose_watermark(scene, record, font=font)
    if method in ("concat-pad", "concat-resize"):
        pos = choose_position(position, seed, record.id)
        return compose_concat(scene, record, pos, resize=method == "concat-resize", font=font)
    raise ValueError(f"unknown render method {method!r}")


def render_records(records: Sequence[SampleRecord], method: str, position: str = "bottom",
                   seed: int = 0, base_dir: str | Path | None = None, jobs: int = 1,
                   font=None) -> list[CompositeArtifact]:
    """Render every non-excluded record; output order follows ``records``."""
    if method not in RENDER_METHODS:
        raise ValueError(f"method must be one of {RENDER_METHODS}")
    if position != "random" and position not in POSITIONS:
        raise ValueError(f"position must be one of {POSITIONS + ('random',)}")
    todo = [r for r in records if not r.excluded]

    def one(record: SampleRecord) -> CompositeArtifact:
        return render_one(record, method, position, seed, base_dir, font)

    if jobs <= 1:
        return [one(r) for r in todo]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, todo))


__all__ = ["RENDER_METHODS", "choose_position", "render_one", "render_records", "resolve_scene"]
