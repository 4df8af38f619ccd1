"""Command-line entry point: ``voqa <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input or usage, 2 for I/O and
endpoint failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .composite import CompositeArtifact, load_sidecar, safe_filename, write_artifacts
from .harness import EndpointConfig, HarnessError, ResponseCache, run_eval
from .manifest import ManifestError, PrepConfig, SampleRecord, load_manifest, prepare_question
from .metrics import NormPolicy, qaa, score_answer_detail
from .prompts import (
    FEW_SHOT_K,
    Demo,
    PromptError,
    assemble_few_shot,
    build_ocr_assisted_prompt,
    build_prompt,
    load_template,
)
from .render import RENDER_METHODS, render_records
from .respfilter import DEFAULT_ROLE_TOKEN, MODES, filter_response
from .sft import STRATEGIES, build_sft_example

log = logging.getLogger("voqa")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; usage errors are validation errors
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}: invalid JSON ({exc.msg})", line=lineno) from None
    return rows


def _write_jsonl(rows, path: str | Path | None) -> None:
    if path is None:
        for row in rows:
            sys.stdout.write(json.dumps(row, ensure_ascii=False) + "\n")
        return
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _snapshot(args: argparse.Namespace, target: Path | None) -> None:
    """Write the resolved settings beside an output."""
    if target is None:
        return
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config["version"] = __version__
    if target.is_dir() or not target.suffix:
        path = target / "config.json"
    else:
        path = target.with_name(target.name + ".config.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _prep_config(args) -> PrepConfig:
    return PrepConfig(max_question_chars=args.max_question_chars,
                      textvqa_strip_patterns=tuple(args.strip_pattern or ()))


def _prepared(args) -> list[SampleRecord]:
    config = _prep_config(args)
    return [prepare_question(r, config) for r in load_manifest(args.manifest)]


def cmd_render(args) -> int:
    records = _prepared(args)
    artifacts = render_records(records, args.method, args.position, args.seed,
                               base_dir=Path(args.manifest).parent, jobs=args.jobs, font=args.font)
    out = Path(args.out)
    write_artifacts(artifacts, out)
    _snapshot(args, out)
    excluded = sum(r.excluded for r in records)
    log.info("rendered %d composites (%d excluded) into %s", len(artifacts), excluded, out)
    return EXIT_OK


def _load_demo_pool(path: str) -> list[Demo]:
    base = Path(path).parent
    demos = []
    for row in _read_jsonl(path):
        image = row.get("image") or f"{safe_filename(row['id'])}.png"
        artifact = CompositeArtifact(source_id=row["id"], question_bbox=tuple(row.get("bbox", (0, 0, 0, 0))),
                                     method=row.get("method", "watermark"),
                                     image_path=str(base / image))
        answer = row["answer"] if "answer" in row else row["answers"][0]
        demos.append(Demo(artifact, row["question"], answer, row.get("dataset")))
    return demos


def cmd_prompt(args) -> int:
    if args.dump:
        name = {"few_shot": "few_shot_example"}.get(args.kind, args.kind)
        if args.kind == "none":
            return EXIT_OK
        if args.kind == "ocr":
            sys.stdout.write(build_ocr_assisted_prompt(None, "{ocr}") + "\n")
            return EXIT_OK
        sys.stdout.write(load_template(name))
        return EXIT_OK
    if not args.sidecar:
        raise UsageError("prompt: --sidecar is required unless --dump is given")
    artifacts = load_sidecar(args.sidecar)
    records = {r.id: r for r in _prepared(args)} if args.manifest else {}
    pool = _load_demo_pool(args.pool) if args.kind == "few_shot" else None
    if args.kind == "few_shot" and args.k not in FEW_SHOT_K:
        raise UsageError(f"--k must be one of {FEW_SHOT_K}")
    rows = []
    for art in artifacts:
        if args.kind == "few_shot":
            fs = assemble_few_shot(pool, args.k, args.seed, art)
            rows.append({"id": art.source_id, "prompt": fs.text, "images": fs.image_slots})
            continue
        if args.kind == "ocr":
            record = records.get(art.source_id)
            if record is None or not record.ocr_text:
                raise PromptError(f"no OCR text for {art.source_id!r} (pass --manifest with 'ocr')")
            text = build_ocr_assisted_prompt(art, record.ocr_text)
        else:
            text = build_prompt(args.kind, art)
        rows.append({"id": art.source_id, "prompt": text, "images": [art.image_path]})
    _write_jsonl(rows, args.out)
    _snapshot(args, Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_filter(args) -> int:
    kinds = {}
    if args.manifest:
        kinds = {r.id: r.dataset_kind for r in load_manifest(args.manifest)}
    rows = []
    for row in _read_jsonl(args.responses):
        outcome = filter_response(row.get("response", ""), mode=args.mode, role_token=args.role_token,
                                  dataset_kind=kinds.get(row["id"], "custom"))
        rows.append(outcome.to_json(row["id"]))
    _write_jsonl(rows, args.out)
    _snapshot(args, Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_score(args) -> int:
    records = {r.id: r for r in _prepared(args)}
    per_sample, per_dataset = [], {}
    for row in _read_jsonl(args.outcomes):
        record = records.get(row["id"])
        if record is None:
            raise ManifestError(f"outcome id {row['id']!r} not in manifest")
        if record.excluded:
            continue
        detail = score_answer_detail(row.get("answer", ""), record, args.policy)
        per_sample.append({"id": record.id, "correct": detail.correct, "flagged": detail.flagged})
        bucket = per_dataset.setdefault(record.dataset_kind, [0, 0])
        bucket[0] += 1
        bucket[1] += detail.correct
    summary = {
        "n": len(per_sample),
        "accuracy": sum(s["correct"] for s in per_sample) / len(per_sample) if per_sample else 0.0,
        "per_dataset": {k: {"n": n, "accuracy": c / n} for k, (n, c) in sorted(per_dataset.items())},
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        _write_jsonl(per_sample, args.out)
        _snapshot(args, Path(args.out))
    return EXIT_OK


def _prediction_candidates(row: dict) -> list[str]:
    for key in ("detected_question", "question", "prediction", "pred"):
        value = row.get(key)
        if isinstance(value, list):
            return [str(v) for v in value]
        if isinstance(value, str):
            return [value]
    return []


def cmd_qaa(args) -> int:
    config = _prep_config(args)
    records = {r.id: prepare_question(r, config) for r in load_manifest(args.ref)}
    policy = NormPolicy.off() if args.no_normalize else NormPolicy()
    rows = []
    for row in _read_jsonl(args.pred):
        record = records.get(row["id"])
        if record is None:
            raise ManifestError(f"prediction id {row['id']!r} not in reference manifest")
        result = qaa(_prediction_candidates(row), record.question, policy)
        rows.append({"id": record.id, "qaa": result.qaa, "edit_distance": result.edit_distance,
                     "ref_len": result.ref_len})
    mean = sum(r["qaa"] for r in rows) / len(rows) if rows else 0.0
    print(f"mean QAA: {mean:.4f} over {len(rows)} samples")
    for row in rows:
        print(f"{row['id']}\t{row['qaa']:.4f}\t{row['edit_distance']}/{row['ref_len']}")
    if args.out:
        _write_jsonl(rows, args.out)
        _snapshot(args, Path(args.out))
    return EXIT_OK


def cmd_sft(args) -> int:
    records = [r for r in _prepared(args) if not r.excluded]
    artifacts: dict[str, CompositeArtifact] = {}
    if args.sidecar:
        artifacts = {a.source_id: a for a in load_sidecar(args.sidecar)}
    image_dir = Path(args.image_dir) if args.image_dir else None
    rows = []
    for record in records:
        artifact = artifacts.get(record.id)
        if artifact is None and args.strategy != "vqa" and not args.sidecar:
            # no sidecar: reference composites by naming convention
            name = f"{safe_filename(record.id)}.png"
            artifact = CompositeArtifact(source_id=record.id, question_bbox=(0, 0, 0, 0),
                                         method="watermark",
                                         image_path=str(image_dir / name) if image_dir else name)
        rows.append(build_sft_example(record, artifact, args.strategy, args.role_token).to_json())
    _write_jsonl(rows, args.out)
    _snapshot(args, Path(args.out) if args.out else None)
    return EXIT_OK


def _endpoint_config(args) -> EndpointConfig:
    target = args.endpoint
    kind = args.endpoint_kind
    if kind is None:
        kind = "http" if target.startswith(("http://", "https://")) else "subprocess"
    if kind == "http":
        return EndpointConfig(kind="http", url=target, model=args.model, timeout=args.timeout)
    return EndpointConfig(kind="subprocess", command=shlex.split(target))


def cmd_run(args) -> int:
    records = _prepared(args)
    artifacts = load_sidecar(args.sidecar)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache_path = out / "responses.cache.jsonl"
    if not args.resume and cache_path.exists():
        cache_path.unlink()
    endpoint = _endpoint_config(args).build()
    _snapshot(args, out)
    try:
        report = run_eval(artifacts, records, endpoint, args.prompt_kind, args.filter_mode,
                          args.concurrency, role_token=args.role_token, match_policy=args.policy,
                          retries=args.retries, backoff=args.backoff,
                          cache=ResponseCache(cache_path), log_path=out / "requests.log.jsonl")
    finally:
        close = getattr(endpoint, "close", None)
        if close:
            close()
    (out / "report.json").write_text(json.dumps(report.to_json(), indent=2, default=str) + "\n",
                                     encoding="utf-8")
    table = report.to_table()
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def _add_prep_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-question-chars", type=int, default=300,
                   help="sqa questions longer than this are excluded (default 300)")
    p.add_argument("--strip-pattern", action="append",
                   help="regex removed from textvqa questions; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voqa", description="Visual-only QA benchmark tooling")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"voqa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("render", help="render composites for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=RENDER_METHODS, default="watermark")
    p.add_argument("--position", choices=("top", "bottom", "left", "right", "random"),
                   default="bottom")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--font", default=None, help="font file overriding DejaVuSans-Bold")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("prompt", help="emit prompts for rendered composites")
    p.add_argument("--kind", choices=("none", "light", "short_workflow", "long_workflow", "ocr",
                                      "few_shot"), default="light")
    p.add_argument("--sidecar")
    p.add_argument("--manifest")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool", help="demonstration pool JSONL for few_shot")
    p.add_argument("--out")
    p.add_argument("--dump", action="store_true", help="print the raw template and exit")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("filter", help="extract answers from raw responses")
    p.add_argument("--responses", required=True)
    p.add_argument("--mode", choices=MODES, default="auto")
    p.add_argument("--role-token", default=DEFAULT_ROLE_TOKEN)
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("score", help="score filtered answers against a manifest")
    p.add_argument("--outcomes", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--policy", choices=("exact", "vqa_soft"), default="exact")
    p.add_argument("--out")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("qaa", help="question alignment accuracy of predicted questions")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_qaa)

    p = sub.add_parser("sft", help="build fine-tuning sequences")
    p.add_argument("--manifest", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--role-token", default=DEFAULT_ROLE_TOKEN)
    p.add_argument("--sidecar")
    p.add_argument("--image-dir")
    p.add_argument("--out")
    _add_prep_flags(p)
    p.set_defaults(func=cmd_sft)

    p = sub.add_parser("run", help="evaluate an endpoint over rendered composites")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--endpoint", required=True, help="http(s) URL or a command line")
    p.add_argument("--endpoint-kind", choices=("http", "subprocess"))
    p.add_argument("--model", default="default")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--prompt-kind", choices=("none", "light", "short_workflow", "long_workflow", "ocr"),
                   default="none")
    p.add_argument("--filter-mode", choices=MODES, default="auto")
    p.add_argument("--role-token", default=DEFAULT_ROLE_TOKEN)
    p.add_argument("--policy", choices=("exact", "vqa_soft"), default="exact")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--backoff", type=float, default=0.5)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--out", required=True)
    _add_prep_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (HarnessError, OSError) as exc:
        print(f"voqa: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyError as exc:
        print(f"voqa: missing field {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"voqa: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
