"""Zero-shot prompt texts, OCR-assisted wrapper and few-shot assembly."""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .composite import CompositeArtifact

PROMPT_KINDS = ("none", "light", "short_workflow", "long_workflow")
FEW_SHOT_K = (1, 2, 4, 8)
DEFAULT_POOL_SIZE = 10_000
IMAGE_SLOT = "<image>"

OCR_WRAPPER = (
    "The following text was recognized in the image by an OCR system:\n"
    "{ocr}\n"
    "The text contains a question. Answer that question based on the visual "
    "information of the entire image."
)

TEMPLATE_FILES = {
    "light": "light.txt",
    "light_variants": "light_variants.txt",
    "short_workflow": "short_workflow.txt",
    "long_workflow": "long_workflow.txt",
    "few_shot_header": "few_shot_header.txt",
    "few_shot_example": "few_shot_example.txt",
    "few_shot_footer": "few_shot_footer.txt",
}


class PromptError(ValueError):
    pass


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Raw template text exactly as shipped."""
    try:
        filename = TEMPLATE_FILES[name]
    except KeyError:
        raise PromptError(f"unknown template {name!r}") from None
    return (resources.files("voqa") / "assets" / "templates" / filename).read_text(encoding="utf-8")


def light_prompt(index: int = 0) -> str:
    variants = load_template("light_variants").splitlines()
    if not 0 <= index < len(variants):
        raise PromptError(f"light prompt index must be in [0, {len(variants)})")
    return variants[index]


def placeholder_values(bbox, width: int, height: int) -> dict[str, str]:
    x0, y0, x1, y1 = (int(v) for v in bbox)
    return {
        "<bbox>": f"[{x0},{y0},{x1},{y1}]",
        "<top-left-location>": f"({x0},{y0})",
        "<bottom-right-location>": f"({x1},{y1})",
        "<picture-width>": str(width),
        "<picture-height>": str(height),
    }


def fill_placeholders(template: str, values: dict[str, str]) -> str:
    for key, value in values.items():
        template = template.replace(key, value)
    return template


def build_prompt(kind: str, artifact: CompositeArtifact | None = None, light_index: int = 0) -> str:
    if kind not in PROMPT_KINDS:
        raise PromptError(f"unknown prompt kind {kind!r}")
    if kind == "none":
        return ""
    if kind == "light":
        return light_prompt(light_index)
    if artifact is None or artifact.question_bbox is None:
        raise PromptError(f"{kind} prompt needs the artifact's question bbox")
    if artifact.size is None:
        raise PromptError(f"{kind} prompt needs the composite image size")
    template = load_template(kind).rstrip("\n")
    return fill_placeholders(template, placeholder_values(artifact.question_bbox, *artifact.size))


def build_ocr_assisted_prompt(artifact: CompositeArtifact | None, ocr_text: str) -> str:
    """Wrap precomputed OCR text as auxiliary input; the bbox is not used."""
    text = (ocr_text or "").strip()
    if not text:
        raise PromptError("ocr_text is empty")
    return OCR_WRAPPER.format(ocr=text)


@dataclass(frozen=True)
class Demo:
    artifact: CompositeArtifact
    question: str
    answer: str
    dataset_kind: str | None = None


@dataclass
class FewShotPrompt:
    text: str
    image_slots: list[str]  # example image refs in order, then the target
    examples: list[Demo] = field(default_factory=list)


def _as_demo(item) -> Demo:
    if isinstance(item, Demo):
        return item
    return Demo(*item)


def _image_ref(artifact: CompositeArtifact) -> str:
    return artifact.image_path or artifact.source_id


def format_demo_output(question: str, answer: str) -> str:
    return json.dumps({"The question in the image": question, "Answer": answer}, ensure_ascii=False)


def assemble_few_shot(pool: Sequence, k: int, seed: int, target: CompositeArtifact) -> FewShotPrompt:
    """Pick ``k`` demonstrations for ``target`` and lay them out as a prompt.

    The draw depends only on ``seed``, ``target.source_id`` and the pool, so
    repeated calls return the same examples.
    """
    if k not in FEW_SHOT_K:
        raise PromptError(f"k must be one of {FEW_SHOT_K}, got {k}")
    demos = [_as_demo(p) for p in pool if _as_demo(p).artifact.source_id != target.source_id]
    if len(demos) < k:
        raise PromptError(f"pool has {len(demos)} usable demos, need {k}")
    rng = random.Random(f"{seed}:{target.source_id}")
    chosen = rng.sample(demos, k)

    example_tpl = load_template("few_shot_example")
    parts = [load_template("few_shot_header")]
    for n, demo in enumerate(chosen, start=1):
        parts.append(example_tpl.replace("{n}", str(n)).replace(
            "{output}", format_demo_output(demo.question, demo.answer)))
    parts.append(load_template("few_shot_footer"))
    return FewShotPrompt(
        text="\n".join(parts),
        image_slots=[_image_ref(d.artifact) for d in chosen] + [_image_ref(target)],
        examples=chosen,
    )


def build_demo_pool(candidates: Sequence, size: int = DEFAULT_POOL_SIZE, seed: int = 0) -> list[Demo]:
    """Sample a demonstration pool stratified by dataset kind.

    Each kind receives a share of ``size`` proportional to its share of
    ``candidates`` (largest-remainder rounding); unlabeled demos form their
    own stratum.
    """
    demos = [_as_demo(c) for c in candidates]
    if size >= len(demos):
        return list(demos)
    strata: dict[str, list[Demo]] = defaultdict(list)
    for demo in demos:
        strata[demo.dataset_kind or ""].append(demo)
    kinds = sorted(strata)
    exact = {kind: size * len(strata[kind]) / len(demos) for kind in kinds}
    quota = {kind: int(exact[kind]) for kind in kinds}
    leftover = size - sum(quota.values())
    for kind in sorted(kinds, key=lambda kd: (-(exact[kd] - quota[kd]), kd))[:leftover]:
        quota[kind] += 1
    rng = random.Random(seed)
    pool: list[Demo] = []
    for kind in kinds:
        pool.extend(rng.sample(strata[kind], quota[kind]))
    return pool


__all__ = [
    "Demo",
    "FEW_SHOT_K",
    "FewShotPrompt",
    "OCR_WRAPPER",
    "PROMPT_KINDS",
    "PromptError",
    "assemble_few_shot",
    "build_demo_pool",
    "build_ocr_assisted_prompt",
    "build_prompt",
    "fill_placeholders",
    "light_prompt",
    "load_template",
    "placeholder_values",
]
