from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from voqa.manifest import SampleRecord

GOLDEN = Path(__file__).parent / "golden"


def make_record(rid: str = "q1", question: str = "What color is the hat?", answers=("red",),
                **kw) -> SampleRecord:
    return SampleRecord(id=rid, scene_path=kw.pop("scene_path", f"{rid}.png"), question=question,
                        answers=tuple(answers), **kw)


def noise_scene(h: int, w: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


def write_manifest(tmp_path: Path, records, name: str = "manifest.jsonl",
                   scenes: bool = True, seed: int = 0) -> Path:
    """Write records plus a random scene per record next to the manifest."""
    path = tmp_path / name
    rng = np.random.default_rng(seed)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            if scenes:
                h, w = int(rng.integers(96, 200)), int(rng.integers(96, 240))
                base = rng.integers(0, 256, 3)
                img = np.clip(base + rng.normal(0, 25, (h, w, 3)), 0, 255).astype(np.uint8)
                Image.fromarray(img).save(tmp_path / rec.scene_path)
            fh.write(json.dumps(rec.to_json()) + "\n")
    return path


@pytest.fixture
def golden():
    def read(name: str) -> str:
        return (GOLDEN / name).read_text(encoding="utf-8")
    return read


class OracleEndpoint:
    """Answers each sample with its ground truth, looked up by sample id."""

    endpoint_id = "mock:oracle"

    def __init__(self, records, artifacts):
        self.truth = {r.id: r for r in records}
        self.sidecar = {a.source_id: a for a in artifacts}

    def complete(self, request):
        assert request.id in self.sidecar
        return self.truth[request.id].answers[0]


class EchoEndpoint:
    """Parrots the question embedded in the image."""

    endpoint_id = "mock:echo"

    def __init__(self, records):
        self.truth = {r.id: r for r in records}

    def complete(self, request):
        return self.truth[request.id].question


def synthetic_manifest(n: int, seed: int = 0):
    """Open-ended records whose answers never appear in their questions."""
    import random

    rng = random.Random(seed)
    nouns = "cat dog hat car tree boat lamp cup book chair clock bird".split()
    verbs = ["is on top of", "sits next to", "is hidden behind", "is far from"]
    records = []
    for i in range(n):
        a, b = rng.sample(nouns, 2)
        q = f"What {rng.choice(verbs)} the {a} near the {b} in picture {i}?"
        answer = rng.choice(["red", "blue", "green", "seven", "wooden"])
        records.append(make_record(f"s{i:03d}", q, (answer,), dataset_kind=rng.choice(["gqa", "vqav2"])))
    return records


# one line per acceptance criterion, echoed at the end of the pytest run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
