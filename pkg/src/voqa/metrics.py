"""Edit distance, question alignment accuracy and answer scoring."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .manifest import CHOICE_LABELS, SampleRecord

log = logging.getLogger(__name__)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance over code points (unit-cost insert/delete/substitute)."""
    if a == b:
        return 0
    # shared prefix/suffix never contribute
    start = 0
    limit = min(len(a), len(b))
    while start < limit and a[start] == b[start]:
        start += 1
    end_a, end_b = len(a), len(b)
    while end_a > start and end_b > start and a[end_a - 1] == b[end_b - 1]:
        end_a -= 1
        end_b -= 1
    a, b = a[start:end_a], b[start:end_b]
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class NormPolicy:
    trim: bool = True
    collapse_whitespace: bool = True
    casefold: bool = True

    @classmethod
    def off(cls) -> "NormPolicy":
        return cls(trim=False, collapse_whitespace=False, casefold=False)

    def apply(self, text: str) -> str:
        if self.collapse_whitespace:
            text = re.sub(r"\s+", " ", text)
        if self.trim:
            text = text.strip()
        if self.casefold:
            text = text.casefold()
        return text


DEFAULT_NORM = NormPolicy()


@dataclass(frozen=True)
class QaaResult:
    qaa: float
    edit_distance: int
    ref_len: int
    candidate_used: str


def qaa(pred_candidates: Sequence[str], reference: str,
        normalize: NormPolicy = DEFAULT_NORM) -> QaaResult:
    """Question alignment accuracy: ``max(0, 1 - min_dist / len(reference))``.

    The minimum runs over all predicted question candidates; an empty list
    is treated as a single empty prediction.
    """
    ref = normalize.apply(reference)
    if not ref:
        raise ValueError("reference question is empty")
    candidates = list(pred_candidates) or [""]
    best_dist, best = None, None
    for cand in candidates:
        d = edit_distance(normalize.apply(cand), ref)
        if best_dist is None or d < best_dist:
            best_dist, best = d, cand
    score = max(0.0, 1.0 - best_dist / len(ref))
    return QaaResult(qaa=score, edit_distance=best_dist, ref_len=len(ref), candidate_used=best)


def normalize_answer(text: str) -> str:
    text = re.sub(r"\s+", " ", text.strip().lower())
    return text.rstrip(".").strip()


_NEGATION = re.compile(r"\b(no|not)\b")
_CHOICE = re.compile(r"(?<![a-z0-9])([a-e])(?![a-z0-9])")


def binary_label(text: str) -> str:
    """'no' if the text contains the word "no" or "not", else 'yes'."""
    return "no" if _NEGATION.search(normalize_answer(text)) else "yes"


def extract_choice_letter(text: str) -> str | None:
    match = _CHOICE.search(normalize_answer(text))
    return match.group(1).upper() if match else None


MATCH_POLICIES = ("exact", "vqa_soft")


@dataclass(frozen=True)
class ScoreDetail:
    correct: bool
    flagged: bool = False
    reason: str | None = None


def score_answer_detail(extracted: str, record: SampleRecord,
                        policy: str = "exact") -> ScoreDetail:
    if policy not in MATCH_POLICIES:
        raise ValueError(f"unknown match policy {policy!r}")
    if not record.answers:
        raise ValueError(f"record {record.id!r} has no ground-truth answers")
    truths = [normalize_answer(a) for a in record.answers]
    if record.question_type == "binary":
        return ScoreDetail(binary_label(extracted) == truths[0])
    if record.question_type == "multiple_choice":
        letter = extract_choice_letter(extracted)
        if letter is None:
            log.debug("no choice letter in answer for %s", record.id)
            return ScoreDetail(False, flagged=True, reason="no_choice_letter")
        truth_letter = extract_choice_letter(record.answers[0])
        if truth_letter is None or truth_letter not in CHOICE_LABELS:
            truth_letter = record.answers[0].strip().upper()
        return ScoreDetail(letter == truth_letter)
    pred = normalize_answer(extracted)
    if policy == "vqa_soft" and len(truths) >= 10:
        matches = sum(t == pred for t in truths)
        return ScoreDetail(min(matches / 3.0, 1.0) >= 0.5)
    return ScoreDetail(pred in truths)


def score_answer(extracted: str, record: SampleRecord, policy: str = "exact") -> bool:
    """Whether ``extracted`` answers ``record`` correctly under its question type."""
    return score_answer_detail(extracted, record, policy).correct


__all__ = [
    "DEFAULT_NORM",
    "NormPolicy",
    "QaaResult",
    "ScoreDetail",
    "binary_label",
    "edit_distance",
    "extract_choice_letter",
    "normalize_answer",
    "qaa",
    "score_answer",
    "score_answer_detail",
]
