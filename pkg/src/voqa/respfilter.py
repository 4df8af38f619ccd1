"""Answer extraction from raw model output and response-behavior classification."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .manifest import SampleRecord
from .metrics import edit_distance

MODES = ("auto", "json", "qra", "qa", "verbatim")
STRATEGIES = ("json_field", "answer_pattern", "role_split", "last_sentence", "verbatim")
BEHAVIORS = ("unaware_caption", "aware_caption", "repeat_question", "wrong_answer",
             "correct_answer")
DEFAULT_ROLE_TOKEN = "ASSISTANT:"

ANSWER_KEYS = ("answer",)
QUESTION_KEYS = ("detected question", "the question in the image", "question")


@dataclass(frozen=True)
class FilterOutcome:
    answer: str
    detected_question: str | None = None
    strategy: str = "verbatim"
    behavior: str | None = None
    flagged: bool = False

    def to_json(self, sample_id: str) -> dict:
        out = {"id": sample_id, "answer": self.answer}
        if self.detected_question is not None:
            out["detected_question"] = self.detected_question
        out["strategy"] = self.strategy
        if self.behavior is not None:
            out["behavior"] = self.behavior
        if self.flagged:
            out["flagged"] = True
        return out


def _balanced_objects(text: str):
    """Yield substrings that are brace-balanced ``{...}`` spans, outermost first."""
    i = text.find("{")
    while i != -1:
        depth, in_str, escape = 0, False, False
        for j in range(i, len(text)):
            ch = text[j]
            if in_str:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[i:j + 1]
                    break
        i = text.find("{", i + 1)


def parse_json_object(raw: str) -> dict | None:
    """Parse ``raw`` as a JSON object, tolerating prose and code fences around it."""
    text = raw.strip()
    try:
        obj = json.loads(text)
        return obj if isinstance(obj, dict) else None
    except json.JSONDecodeError:
        pass
    for span in _balanced_objects(text):
        try:
            obj = json.loads(span)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _lookup(obj: dict, keys) -> str | None:
    lowered = {str(k).strip().casefold(): v for k, v in obj.items()}
    for key in keys:
        if key in lowered and lowered[key] is not None:
            value = lowered[key]
            return value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)
    return None


# X runs to the end of its clause: sentence punctuation followed by space/end, or a newline.
_PATTERNS = [
    re.compile(r"\bthe answer is\s*:?\s*(?P<x>.+?)(?=[.!?](?:\s|$)|\n|$)", re.IGNORECASE),
    re.compile(r"\banswer\s*:\s*(?P<x>.+?)(?=[.!?](?:\s|$)|\n|$)", re.IGNORECASE),
]


def _clean_answer(x: str) -> str:
    return x.strip().strip("\"'`*").strip()


def match_answer_pattern(raw: str) -> str | None:
    best = None
    for pattern in _PATTERNS:
        m = pattern.search(raw)
        if m and (best is None or m.start() < best.start()):
            best = m
    if best is None:
        return None
    answer = _clean_answer(best.group("x"))
    return answer or None


def split_role(raw: str, role_token: str) -> tuple[str, str] | None:
    """(text before, text after) the last occurrence of ``role_token``."""
    if not role_token:
        return None
    idx = raw.rfind(role_token)
    if idx == -1:
        return None
    return raw[:idx], raw[idx + len(role_token):]


# a terminator only ends a sentence when followed by whitespace or the end
_SENTENCE = re.compile(r"(?:[^.!?]|[.!?](?=\S))+(?:[.!?]+|$)")


def last_sentence(raw: str) -> tuple[str, str | None]:
    """(last sentence without its terminator, preceding text or None)."""
    pieces = [m for m in _SENTENCE.finditer(raw) if m.group().strip(" \t\r\n.!?")]
    if not pieces:
        return raw.strip(), None
    last = pieces[-1]
    before = raw[:last.start()].strip()
    answer = last.group().strip().rstrip(".!?").strip()
    return answer, before or None


def filter_response(raw: str, mode: str = "auto", role_token: str = DEFAULT_ROLE_TOKEN,
                    dataset_kind: str = "custom") -> FilterOutcome:
    """Extract the final answer from a model response.

    ``auto`` tries, in order: a JSON object with an ``Answer`` field, the
    "The answer is X" / "Answer: X" patterns, the full text for POPE, and
    finally the trimmed raw text.
    """
    if mode not in MODES:
        raise ValueError(f"unknown filter mode {mode!r}")
    raw = raw or ""
    if not raw.strip():
        return FilterOutcome(answer="", strategy="verbatim")

    if mode == "verbatim":
        return FilterOutcome(answer=raw.strip(), strategy="verbatim")

    if mode == "qra":
        parts = split_role(raw, role_token)
        if parts is None:
            return FilterOutcome(answer=raw.strip(), strategy="verbatim", flagged=True)
        before, after = parts
        return FilterOutcome(answer=after.strip(), detected_question=before.strip() or None,
                             strategy="role_split")

    if mode == "qa":
        answer, before = last_sentence(raw)
        return FilterOutcome(answer=answer, detected_question=before, strategy="last_sentence")

    obj = parse_json_object(raw) if "{" in raw else None
    if obj is not None:
        answer = _lookup(obj, ANSWER_KEYS)
        if answer is not None:
            return FilterOutcome(answer=answer.strip(),
                                 detected_question=_lookup(obj, QUESTION_KEYS),
                                 strategy="json_field")
    if mode == "json":
        return FilterOutcome(answer=raw.strip(), strategy="verbatim")

    answer = match_answer_pattern(raw)
    if answer is not None:
        return FilterOutcome(answer=answer, strategy="answer_pattern")
    # POPE falls through here as well: the full text is kept for the no/not rule.
    return FilterOutcome(answer=raw.strip(), strategy="verbatim")


@dataclass(frozen=True)
class BehaviorThresholds:
    repeat_threshold: float = 0.8
    aware_ngram: int = 5
    short_answer_words: int = 6


def _words(text: str) -> list[str]:
    return re.findall(r"[\w']+", text.casefold())


def edit_similarity(a: str, b: str) -> float:
    a = re.sub(r"\s+", " ", a).strip().casefold()
    b = re.sub(r"\s+", " ", b).strip().casefold()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest


def shares_ngram(answer: str, question: str, n: int) -> bool:
    q_words, a_words = _words(question), _words(answer)
    n = min(n, len(q_words))
    if n == 0 or len(a_words) < n:
        return False
    q_grams = {tuple(q_words[i:i + n]) for i in range(len(q_words) - n + 1)}
    return any(tuple(a_words[i:i + n]) in q_grams for i in range(len(a_words) - n + 1))


def classify_behavior(outcome: FilterOutcome, record: SampleRecord, scored_correct: bool,
                      thresholds: BehaviorThresholds = BehaviorThresholds()) -> str:
    if scored_correct:
        return "correct_answer"
    answer = outcome.answer
    if edit_similarity(answer, record.question) >= thresholds.repeat_threshold:
        return "repeat_question"
    if shares_ngram(answer, record.question, thresholds.aware_ngram):
        return "aware_caption"
    if len(answer.split()) <= thresholds.short_answer_words:
        return "wrong_answer"
    return "unaware_caption"


__all__ = [
    "BEHAVIORS",
    "BehaviorThresholds",
    "DEFAULT_ROLE_TOKEN",
    "FilterOutcome",
    "MODES",
    "classify_behavior",
    "edit_similarity",
    "filter_response",
    "last_sentence",
    "match_answer_pattern",
    "parse_json_object",
    "shares_ngram",
    "split_role",
]
