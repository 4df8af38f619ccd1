"""Benchmark evaluation against an external vision-language model endpoint."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import subprocess
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .composite import CompositeArtifact
from .manifest import SampleRecord
from .metrics import qaa, score_answer_detail
from .prompts import PROMPT_KINDS, build_ocr_assisted_prompt, build_prompt
from .respfilter import (
    BEHAVIORS,
    DEFAULT_ROLE_TOKEN,
    BehaviorThresholds,
    classify_behavior,
    filter_response,
)

log = logging.getLogger(__name__)

HARNESS_PROMPT_KINDS = PROMPT_KINDS + ("ocr",)
TOKEN_ENV = "VOQA_ENDPOINT_TOKEN"


class EndpointError(RuntimeError):
    pass


class HarnessError(RuntimeError):
    def __init__(self, message: str, errors: dict[str, str] | None = None):
        super().__init__(message)
        self.errors = errors or {}


@dataclass
class EndpointRequest:
    id: str
    prompt: str
    artifact: CompositeArtifact

    @property
    def image_path(self) -> str | None:
        return self.artifact.image_path

    def png_bytes(self) -> bytes:
        return self.artifact.png_bytes()


class Endpoint(Protocol):
    endpoint_id: str

    def complete(self, request: EndpointRequest) -> str: ...


class HttpEndpoint:
    """Chat-style HTTP endpoint taking one image and one text part."""

    def __init__(self, url: str, model: str = "default", token: str | None = None,
                 timeout: float = 120.0, client: httpx.Client | None = None):
        self.url = url
        self.model = model
        self.endpoint_id = f"http:{url}:{model}"
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers

    def payload(self, request: EndpointRequest) -> dict:
        image = base64.b64encode(request.png_bytes()).decode("ascii")
        return {
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "image", "data": image},
                    {"type": "text", "text": request.prompt},
                ],
            }],
        }

    def complete(self, request: EndpointRequest) -> str:
        resp = self._client.post(self.url, json=self.payload(request), headers=self._headers)
        resp.raise_for_status()
        body = resp.json()
        if not isinstance(body, dict) or not isinstance(body.get("content"), str):
            raise EndpointError(f"malformed endpoint reply for {request.id!r}")
        return body["content"]

    def close(self) -> None:
        self._client.close()


class SubprocessEndpoint:
    """Line-oriented JSON protocol over a child process's stdin/stdout."""

    def __init__(self, command: Sequence[str], endpoint_id: str | None = None):
        self.command = list(command)
        self.endpoint_id = endpoint_id or "subprocess:" + " ".join(self.command)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                          stdout=subprocess.PIPE, text=True, encoding="utf-8",
                                          bufsize=1)
        return self._proc

    def complete(self, request: EndpointRequest) -> str:
        line = json.dumps({"id": request.id, "image_path": request.image_path,
                           "prompt": request.prompt}, ensure_ascii=False)
        with self._lock:
            proc = self._ensure()
            try:
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
                reply = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise EndpointError(f"subprocess endpoint failed: {exc}") from exc
        if not reply:
            raise EndpointError("subprocess endpoint closed its output")
        body = json.loads(reply)
        if body.get("id") != request.id:
            raise EndpointError(f"reply id {body.get('id')!r} does not match {request.id!r}")
        return str(body.get("response", ""))

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            if self._proc.stdout:
                self._proc.stdout.close()
            self._proc = None


@dataclass
class EndpointConfig:
    kind: str = "http"  # http | subprocess
    url: str | None = None
    model: str = "default"
    command: list[str] = field(default_factory=list)
    timeout: float = 120.0
    token_env: str = TOKEN_ENV

    def build(self) -> Endpoint:
        if self.kind == "http":
            if not self.url:
                raise ValueError("http endpoint needs a url")
            return HttpEndpoint(self.url, self.model, token=os.environ.get(self.token_env),
                                timeout=self.timeout)
        if self.kind == "subprocess":
            if not self.command:
                raise ValueError("subprocess endpoint needs a command")
            return SubprocessEndpoint(self.command)
        raise ValueError(f"unknown endpoint kind {self.kind!r}")


class ResponseCache:
    """Append-only JSONL cache of raw responses keyed by endpoint, sample and prompt."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[str, str] = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                    except json.JSONDecodeError:
                        # a torn final line from an interrupted run
                        continue
                    self._data[entry["key"]] = entry["response"]

    @staticmethod
    def key(endpoint_id: str, sample_id: str, prompt: str) -> str:
        prompt_hash = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        raw = f"{endpoint_id}\x00{sample_id}\x00{prompt_hash}"
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def get(self, key: str) -> str | None:
        return self._data.get(key)

    def put(self, key: str, sample_id: str, response: str) -> None:
        with self._lock:
            self._data[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "id": sample_id, "response": response},
                                    ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._data)


@dataclass
class SampleResult:
    id: str
    dataset_kind: str
    response: str | None = None
    answer: str | None = None
    detected_question: str | None = None
    strategy: str | None = None
    correct: bool | None = None
    flagged: bool = False
    behavior: str | None = None
    qaa: float | None = None
    error: str | None = None


@dataclass
class EvalReport:
    per_dataset: dict[str, dict]
    overall_accuracy: float
    qaa_correct: float | None
    qaa_incorrect: float | None
    behavior_histogram: dict[str, int]
    run_config: dict
    n_correct: int = 0
    n_incorrect: int = 0
    errored_ids: list[str] = field(default_factory=list)
    samples: list[SampleResult] = field(default_factory=list)

    def to_json(self, include_samples: bool = True) -> dict:
        out = asdict(self)
        if not include_samples:
            out.pop("samples")
        return out

    def to_table(self) -> str:
        rows = [("dataset", "n", "accuracy")]
        for kind in sorted(self.per_dataset):
            d = self.per_dataset[kind]
            rows.append((kind, str(d["n"]), f"{100 * d['accuracy']:.1f}"))
        total = self.n_correct + self.n_incorrect
        rows.append(("overall", str(total), f"{100 * self.overall_accuracy:.1f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        if self.qaa_correct is not None or self.qaa_incorrect is not None:
            lines.append(f"QAA correct: {_pct(self.qaa_correct)}  incorrect: {_pct(self.qaa_incorrect)}")
        hist = ", ".join(f"{k}={v}" for k, v in self.behavior_histogram.items() if v)
        lines.append(f"behaviors: {hist or '-'}")
        if self.errored_ids:
            lines.append(f"errored: {len(self.errored_ids)}")
        return "\n".join(lines)


def _pct(v: float | None) -> str:
    return "/" if v is None else f"{100 * v:.1f}"


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def make_prompt(kind: str, artifact: CompositeArtifact, record: SampleRecord) -> str:
    if kind == "ocr":
        return build_ocr_assisted_prompt(artifact, record.ocr_text or "")
    return build_prompt(kind, artifact)


def _call_with_retries(endpoint: Endpoint, request: EndpointRequest, retries: int,
                       backoff: float) -> str:
    for attempt in range(retries + 1):
        try:
            return endpoint.complete(request)
        except Exception as exc:  # any transport or protocol failure is retried
            if attempt == retries:
                raise
            delay = backoff * (2 ** attempt)
            log.info("retrying %s after %s (%.2fs)", request.id, exc, delay)
            if delay > 0:
                time.sleep(delay)
    raise AssertionError("unreachable")


def score_response(raw: str, record: SampleRecord, filter_mode: str = "auto",
                   role_token: str = DEFAULT_ROLE_TOKEN, match_policy: str = "exact",
                   thresholds: BehaviorThresholds = BehaviorThresholds()) -> SampleResult:
    """Filter, score, classify and (when a question was detected) align one response."""
    outcome = filter_response(raw, mode=filter_mode, role_token=role_token,
                              dataset_kind=record.dataset_kind)
    detail = score_answer_detail(outcome.answer, record, match_policy)
    behavior = classify_behavior(outcome, record, detail.correct, thresholds)
    alignment = None
    if outcome.detected_question:
        alignment = qaa([outcome.detected_question], record.question).qaa
    return SampleResult(
        id=record.id,
        dataset_kind=record.dataset_kind,
        response=raw,
        answer=outcome.answer,
        detected_question=outcome.detected_question,
        strategy=outcome.strategy,
        correct=detail.correct,
        flagged=outcome.flagged or detail.flagged,
        behavior=behavior,
        qaa=alignment,
    )


def aggregate(results: Sequence[SampleResult], run_config: dict) -> EvalReport:
    ok = [r for r in results if r.error is None]
    per_dataset: dict[str, dict] = {}
    for kind in sorted({r.dataset_kind for r in ok}):
        group = [r for r in ok if r.dataset_kind == kind]
        per_dataset[kind] = {"n": len(group),
                             "accuracy": sum(bool(r.correct) for r in group) / len(group)}
    n_correct = sum(bool(r.correct) for r in ok)
    hist = Counter(r.behavior for r in ok)
    return EvalReport(
        per_dataset=per_dataset,
        overall_accuracy=n_correct / len(ok) if ok else 0.0,
        qaa_correct=_mean([r.qaa for r in ok if r.correct and r.qaa is not None]),
        qaa_incorrect=_mean([r.qaa for r in ok if not r.correct and r.qaa is not None]),
        behavior_histogram={b: hist.get(b, 0) for b in BEHAVIORS},
        run_config=run_config,
        n_correct=n_correct,
        n_incorrect=len(ok) - n_correct,
        errored_ids=[r.id for r in results if r.error is not None],
        samples=list(results),
    )


def run_eval(
    artifacts: Sequence[CompositeArtifact],
    records: Sequence[SampleRecord],
    endpoint: Endpoint,
    prompt_kind: str = "none",
    filter_mode: str = "auto",
    concurrency: int = 4,
    *,
    role_token: str = DEFAULT_ROLE_TOKEN,
    match_policy: str = "exact",
    retries: int = 3,
    backoff: float = 0.5,
    cache: ResponseCache | None = None,
    log_path: str | Path | None = None,
    thresholds: BehaviorThresholds = BehaviorThresholds(),
) -> EvalReport:
    """Query ``endpoint`` for every non-excluded record and score the replies.

    At most ``concurrency`` requests are in flight. Samples that still fail
    after ``retries`` retries are reported as errored; if every sample fails
    a :class:`HarnessError` is raised.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    if prompt_kind not in HARNESS_PROMPT_KINDS:
        raise ValueError(f"unknown prompt kind {prompt_kind!r}")
    by_id = {a.source_id: a for a in artifacts}
    active = [r for r in records if not r.excluded]
    missing = [r.id for r in active if r.id not in by_id]
    if missing:
        raise ValueError(f"no composite for {len(missing)} record(s), e.g. {missing[:3]}")

    run_config = {
        "endpoint": getattr(endpoint, "endpoint_id", type(endpoint).__name__),
        "prompt_kind": prompt_kind,
        "filter_mode": filter_mode,
        "concurrency": concurrency,
        "role_token": role_token,
        "match_policy": match_policy,
        "retries": retries,
        "backoff": backoff,
        "thresholds": asdict(thresholds),
        "n_records": len(records),
        "n_excluded": len(records) - len(active),
    }
    log_lock = threading.Lock()
    log_file = open(log_path, "a", encoding="utf-8") if log_path else None

    def work(record: SampleRecord) -> SampleResult:
        artifact = by_id[record.id]
        try:
            prompt = make_prompt(prompt_kind, artifact, record)
            key = ResponseCache.key(run_config["endpoint"], record.id, prompt)
            raw = cache.get(key) if cache is not None else None
            if raw is None:
                raw = _call_with_retries(endpoint, EndpointRequest(record.id, prompt, artifact),
                                         retries, backoff)
                if cache is not None:
                    cache.put(key, record.id, raw)
        except Exception as exc:
            result = SampleResult(id=record.id, dataset_kind=record.dataset_kind,
                                  error=f"{type(exc).__name__}: {exc}")
        else:
            result = score_response(raw, record, filter_mode, role_token, match_policy, thresholds)
        if log_file is not None:
            with log_lock:
                log_file.write(json.dumps({"id": result.id, "response": result.response,
                                           "error": result.error}, ensure_ascii=False) + "\n")
                log_file.flush()
        return result

    try:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(work, active))
    finally:
        if log_file is not None:
            log_file.close()

    if results and all(r.error is not None for r in results):
        raise HarnessError(f"endpoint failed for all {len(results)} samples",
                           errors={r.id: r.error for r in results})
    return aggregate(results, run_config)


__all__ = [
    "Endpoint",
    "EndpointConfig",
    "EndpointError",
    "EndpointRequest",
    "EvalReport",
    "HarnessError",
    "HttpEndpoint",
    "ResponseCache",
    "SampleResult",
    "SubprocessEndpoint",
    "aggregate",
    "make_prompt",
    "run_eval",
    "score_response",
]
