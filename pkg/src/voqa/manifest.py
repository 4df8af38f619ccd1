"""Corpus data model and JSONL manifest handling.

A manifest line looks like::

    {"id": "q1", "image": "scenes/1.jpg", "question": "What color is the hat?",
     "answers": ["red"], "dataset": "vqav2", "type": "open_ended"}

with optional ``"choices"`` (multiple-choice only) and ``"ocr"`` keys.
Dialogue files use ``{"id", "image", "turns": [{"q", "a"}, ...]}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

DATASET_KINDS = ("vqav2", "gqa", "pope", "textvqa", "sqa", "custom")
QUESTION_TYPES = ("open_ended", "binary", "multiple_choice")
CHOICE_LABELS = "ABCDE"


class ManifestError(ValueError):
    """Raised for unparsable or invalid manifest content."""

    def __init__(self, message: str, *, line: int | None = None, record_id: str | None = None,
                 field_name: str | None = None):
        self.detail = message
        self.line = line
        self.record_id = record_id
        self.field_name = field_name
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if record_id is not None:
            prefix.append(f"id {record_id!r}")
        if field_name is not None:
            prefix.append(f"field {field_name!r}")
        super().__init__(f"{', '.join(prefix)}: {message}" if prefix else message)


def _normalize_yes_no(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower()).rstrip(".")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    scene_path: str
    question: str
    answers: tuple[str, ...]
    dataset_kind: str = "custom"
    question_type: str = "open_ended"
    choices: tuple[tuple[str, str], ...] | None = None
    ocr_text: str | None = None
    # Set by prepare_question; never serialized.
    excluded: bool = field(default=False, compare=True)

    def __post_init__(self) -> None:
        object.__setattr__(self, "answers", tuple(self.answers))
        if self.choices is not None:
            object.__setattr__(self, "choices", tuple((str(l), str(t)) for l, t in self.choices))
        self.validate()

    def validate(self) -> None:
        rid = self.id
        if not isinstance(self.id, str) or not self.id:
            raise ManifestError("id must be a non-empty string", field_name="id")
        if not self.question or not self.question.strip():
            raise ManifestError("question is empty", record_id=rid, field_name="question")
        if not self.answers:
            raise ManifestError("at least one answer is required", record_id=rid, field_name="answers")
        if self.dataset_kind not in DATASET_KINDS:
            raise ManifestError(f"unknown dataset {self.dataset_kind!r}", record_id=rid,
                                field_name="dataset")
        if self.question_type not in QUESTION_TYPES:
            raise ManifestError(f"unknown type {self.question_type!r}", record_id=rid, field_name="type")
        is_mc = self.question_type == "multiple_choice"
        if is_mc != (self.choices is not None):
            raise ManifestError("choices must be present exactly for multiple_choice questions",
                                record_id=rid, field_name="choices")
        if self.choices is not None:
            labels = [label for label, _ in self.choices]
            if not 2 <= len(labels) <= 5:
                raise ManifestError("multiple_choice needs 2-5 choices", record_id=rid,
                                    field_name="choices")
            if len(set(labels)) != len(labels) or any(
                    len(label) != 1 or label not in CHOICE_LABELS for label in labels):
                raise ManifestError("choice labels must be distinct letters from A-E",
                                    record_id=rid, field_name="choices")
        if self.question_type == "binary":
            for answer in self.answers:
                if _normalize_yes_no(answer) not in ("yes", "no"):
                    raise ManifestError(f"binary answer {answer!r} is not yes/no", record_id=rid,
                                        field_name="answers")

    def to_json(self) -> dict:
        payload: dict = {
            "id": self.id,
            "image": self.scene_path,
            "question": self.question,
            "answers": list(self.answers),
            "dataset": self.dataset_kind,
            "type": self.question_type,
        }
        if self.choices is not None:
            payload["choices"] = [[label, text] for label, text in self.choices]
        if self.ocr_text is not None:
            payload["ocr"] = self.ocr_text
        return payload

    @classmethod
    def from_json(cls, payload: dict, *, line: int | None = None) -> "SampleRecord":
        if not isinstance(payload, dict):
            raise ManifestError("expected a JSON object", line=line)
        rid = payload.get("id")
        for key in ("id", "image", "question", "answers", "dataset", "type"):
            if key not in payload:
                raise ManifestError("missing required field", line=line, record_id=rid, field_name=key)
        answers = payload["answers"]
        if isinstance(answers, str):
            answers = [answers]
        if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
            raise ManifestError("answers must be a list of strings", line=line, record_id=rid,
                                field_name="answers")
        choices = payload.get("choices")
        if choices is not None:
            choices = _parse_choices(choices, line=line, record_id=rid)
        try:
            return cls(
                id=str(rid),
                scene_path=str(payload["image"]),
                question=str(payload["question"]),
                answers=tuple(answers),
                dataset_kind=payload["dataset"],
                question_type=payload["type"],
                choices=choices,
                ocr_text=payload.get("ocr"),
            )
        except ManifestError as exc:
            raise ManifestError(exc.detail, line=line, record_id=exc.record_id,
                                field_name=exc.field_name) from None


def _parse_choices(raw, *, line, record_id) -> tuple[tuple[str, str], ...]:
    if isinstance(raw, dict):
        return tuple((str(k), str(v)) for k, v in raw.items())
    pairs = []
    for item in raw if isinstance(raw, list) else [None]:
        if isinstance(item, (list, tuple)) and len(item) == 2:
            pairs.append((str(item[0]), str(item[1])))
        elif isinstance(item, dict) and "label" in item and "text" in item:
            pairs.append((str(item["label"]), str(item["text"])))
        else:
            raise ManifestError("choices must be [label, text] pairs", line=line,
                                record_id=record_id, field_name="choices")
    return tuple(pairs)


@dataclass(frozen=True)
class Dialogue:
    id: str
    scene_path: str
    turns: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple((q, a) for q, a in self.turns))
        if not self.turns:
            raise ManifestError("dialogue has no turns", record_id=self.id, field_name="turns")
        for i, (q, a) in enumerate(self.turns):
            if not q.strip() or not a.strip():
                raise ManifestError(f"turn {i} has an empty question or answer",
                                    record_id=self.id, field_name="turns")


def _iter_json_lines(path: str | Path) -> Iterable[tuple[int, dict]]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON ({exc.msg})", line=lineno) from None


def load_manifest(path: str | Path) -> list[SampleRecord]:
    """Read and validate a JSONL manifest, preserving file order."""
    records: list[SampleRecord] = []
    seen: dict[str, int] = {}
    for lineno, payload in _iter_json_lines(path):
        record = SampleRecord.from_json(payload, line=lineno)
        if record.id in seen:
            raise ManifestError(f"duplicate id (first seen on line {seen[record.id]})", line=lineno,
                                record_id=record.id, field_name="id")
        seen[record.id] = lineno
        records.append(record)
    return records


def dump_manifest(records: Iterable[SampleRecord], path: str | Path) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False))
            fh.write("\n")


def load_dialogues(path: str | Path) -> list[Dialogue]:
    dialogues = []
    for lineno, payload in _iter_json_lines(path):
        try:
            turns = tuple((t["q"], t["a"]) for t in payload.get("turns", []))
            dialogues.append(Dialogue(id=str(payload["id"]), scene_path=str(payload["image"]),
                                      turns=turns))
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"malformed dialogue ({exc})", line=lineno) from None
        except ManifestError as exc:
            raise ManifestError(exc.detail, line=lineno, record_id=exc.record_id,
                                field_name=exc.field_name) from None
    return dialogues


def split_dialogues(dialogues: Sequence[Dialogue]) -> list[SampleRecord]:
    """Flatten multi-turn dialogues into one open-ended record per turn.

    Turn ``i`` of dialogue ``d`` gets the id ``"d#i"``.
    """
    records = []
    for dialogue in dialogues:
        if not dialogue.turns:
            raise ManifestError("dialogue has no turns", record_id=dialogue.id, field_name="turns")
        for i, (question, answer) in enumerate(dialogue.turns):
            records.append(SampleRecord(
                id=f"{dialogue.id}#{i}",
                scene_path=dialogue.scene_path,
                question=question,
                answers=(answer,),
            ))
    return records


@dataclass(frozen=True)
class PrepConfig:
    max_question_chars: int = 300
    mc_option_separator: str = "\n"
    # Literal strings or regexes removed from textvqa questions.
    textvqa_strip_patterns: tuple[str, ...] = ()


def _strip_to_fixpoint(text: str, patterns: Sequence[str]) -> str:
    compiled = [re.compile(p) for p in patterns]
    while True:
        before = text
        for pattern in compiled:
            text = pattern.sub("", text)
        text = re.sub(r"[ \t]{2,}", " ", text).strip()
        if text == before:
            return text


def format_choices(choices: Sequence[tuple[str, str]], separator: str = "\n") -> str:
    ordered = sorted(choices, key=lambda c: CHOICE_LABELS.index(c[0]))
    return separator.join(f"{label}. {text}" for label, text in ordered)


def prepare_question(record: SampleRecord, config: PrepConfig | None = None) -> SampleRecord:
    """Apply per-dataset question preparation before rendering.

    Idempotent: folded choices are detected and not appended twice, and the
    textvqa strip runs to a fixpoint.
    """
    config = config or PrepConfig()
    question = record.question
    suffix = ""
    if record.question_type == "multiple_choice" and record.choices:
        suffix = config.mc_option_separator + format_choices(record.choices,
                                                             config.mc_option_separator)
        if question.endswith(suffix) and len(question) > len(suffix):
            question = question[:-len(suffix)]
    if record.dataset_kind == "textvqa" and config.textvqa_strip_patterns:
        stripped = _strip_to_fixpoint(question, config.textvqa_strip_patterns)
        # never strip a question down to nothing
        if stripped:
            question = stripped
    question += suffix
    excluded = record.excluded
    if record.dataset_kind == "sqa" and len(question) > config.max_question_chars:
        excluded = True
    if question == record.question and excluded == record.excluded:
        return record
    return replace(record, question=question, excluded=excluded)


__all__ = [
    "CHOICE_LABELS",
    "DATASET_KINDS",
    "QUESTION_TYPES",
    "Dialogue",
    "ManifestError",
    "PrepConfig",
    "SampleRecord",
    "dump_manifest",
    "format_choices",
    "load_dialogues",
    "load_manifest",
    "prepare_question",
    "split_dialogues",
]
