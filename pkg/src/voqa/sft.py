"""Fine-tuning sequence construction for the VQA and VoQA training formats.

With question Q, first answer A and role token R (segments joined by one
space):

    ========  ==========  ===============
    strategy  input       target
    ========  ==========  ===============
    vqa       Q R         A
    baseline  R           A
    qa        R           Q A
    qra       (empty)     Q R A
    r_qra     R           Q R A
    qa_only   (empty)     Q A
    rqa       (empty)     R Q A
    rqra      (empty)     R Q R A
    ========  ==========  ===============

Only ``vqa`` sees the plain question as text; every other strategy reads it
from the composite image.
"""

from __future__ import annotations

from dataclasses import dataclass

from .composite import CompositeArtifact
from .manifest import SampleRecord
from .respfilter import filter_response

STRATEGIES = ("vqa", "baseline", "qa", "qra", "r_qra", "qa_only", "rqa", "rqra")
ROLE_TOKENS = ("ASSISTANT:", "\nassistant\n", "HELPER:", "CAT:")

# segment layout per strategy: (input, target)
_SHAPES = {
    "vqa": (("Q", "R"), ("A",)),
    "baseline": (("R",), ("A",)),
    "qa": (("R",), ("Q", "A")),
    "qra": ((), ("Q", "R", "A")),
    "r_qra": (("R",), ("Q", "R", "A")),
    "qa_only": ((), ("Q", "A")),
    "rqa": ((), ("R", "Q", "A")),
    "rqra": ((), ("R", "Q", "R", "A")),
}

FILTER_MODE = {
    "vqa": "verbatim",
    "baseline": "verbatim",
    "qa": "qa",
    "qa_only": "qa",
    "rqa": "qa",
    "qra": "qra",
    "r_qra": "qra",
    "rqra": "qra",
}


class SftError(ValueError):
    pass


@dataclass(frozen=True)
class SftExample:
    id: str
    image_ref: str
    input_text: str
    target_text: str
    strategy: str
    role_token: str
    answer: str

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "image": self.image_ref,
            "input": self.input_text,
            "target": self.target_text,
            "strategy": self.strategy,
            "role_token": self.role_token,
        }


def uses_role_token(strategy: str) -> bool:
    inp, tgt = _SHAPES[strategy]
    return "R" in inp or "R" in tgt


def build_sft_example(record: SampleRecord, artifact: CompositeArtifact | None, strategy: str,
                      role_token: str = "ASSISTANT:") -> SftExample:
    if strategy not in STRATEGIES:
        raise SftError(f"unknown strategy {strategy!r}")
    if strategy != "vqa" and artifact is None:
        raise SftError(f"strategy {strategy!r} needs a composite artifact for {record.id!r}")
    if uses_role_token(strategy) and not role_token:
        raise SftError(f"strategy {strategy!r} needs a non-empty role token")
    values = {"Q": record.question, "A": record.answers[0], "R": role_token}
    inp, tgt = _SHAPES[strategy]
    if strategy == "vqa":
        image_ref = record.scene_path
    else:
        image_ref = artifact.image_path or f"{artifact.source_id}.png"
    target = " ".join(values[s] for s in tgt)
    if not target.strip():
        raise SftError(f"empty target for {record.id!r}")
    return SftExample(
        id=record.id,
        image_ref=image_ref,
        input_text=" ".join(values[s] for s in inp),
        target_text=target,
        strategy=strategy,
        role_token=role_token,
        answer=record.answers[0],
    )


def round_trip_check(example: SftExample) -> bool:
    """Whether filtering the target (as if emitted verbatim) recovers the answer."""
    outcome = filter_response(example.target_text, mode=FILTER_MODE[example.strategy],
                              role_token=example.role_token)
    return outcome.answer == example.answer


__all__ = [
    "FILTER_MODE",
    "ROLE_TOKENS",
    "STRATEGIES",
    "SftError",
    "SftExample",
    "build_sft_example",
    "round_trip_check",
    "uses_role_token",
]
