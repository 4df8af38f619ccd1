import hashlib
import json
import subprocess
import sys

import pytest

from voqa.cli import main
from voqa.manifest import load_manifest

from conftest import make_record, synthetic_manifest, write_manifest

ORACLE_SCRIPT = """\
import json, sys
truth = {}
for line in open(sys.argv[1], encoding="utf-8"):
    if line.strip():
        row = json.loads(line)
        truth[row["id"]] = row["answers"][0]
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "response": "The answer is " + truth[req["id"]] + "."}),
          flush=True)
"""


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def manifest(tmp_path):
    return write_manifest(tmp_path, synthetic_manifest(6))


def run(*argv):
    return main([str(a) for a in argv])


def test_render_writes_pngs_sidecar_and_config(tmp_path, manifest):
    before = digest(manifest)
    out = tmp_path / "out"
    assert run("render", "--manifest", manifest, "--out", out, "--seed", "0") == 0
    rows = [json.loads(line) for line in (out / "sidecar.jsonl").read_text().splitlines()]
    assert [r["id"] for r in rows] == [r.id for r in load_manifest(manifest)]
    assert all((out / f"{r['id']}.png").exists() for r in rows)
    assert rows[0]["method"] == "watermark" and rows[0]["provenance"] in (
        "computed", "black_fallback", "white_fallback")
    config = json.loads((out / "config.json").read_text())
    assert config["seed"] == 0 and config["method"] == "watermark"
    assert digest(manifest) == before


@pytest.mark.parametrize("method", ["concat-pad", "concat-resize"])
def test_render_concat_random_position(tmp_path, manifest, method):
    out = tmp_path / method
    assert run("render", "--manifest", manifest, "--out", out, "--method", method,
               "--position", "random", "--seed", "3", "--jobs", "3") == 0
    rows = [json.loads(line) for line in (out / "sidecar.jsonl").read_text().splitlines()]
    assert all(r["position"] in ("top", "bottom", "left", "right") for r in rows)


def test_render_deterministic(tmp_path, manifest):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("render", "--manifest", manifest, "--out", a, "--seed", "0") == 0
    assert run("render", "--manifest", manifest, "--out", b, "--seed", "0", "--jobs", "4") == 0
    for f in a.iterdir():
        if f.name != "config.json":
            if f.suffix == ".jsonl":
                assert f.read_text() == (b / f.name).read_text().replace(str(b), str(a))
            else:
                assert f.read_bytes() == (b / f.name).read_bytes()


def test_exit_codes(tmp_path, manifest, capsys):
    assert run("render", "--manifest", manifest, "--out", tmp_path / "o", "--bogus") == 1
    assert "usage" in capsys.readouterr().err
    assert run("render", "--manifest", tmp_path / "missing.jsonl", "--out", tmp_path / "o") == 2
    assert run() == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x"}\n')
    assert run("render", "--manifest", bad, "--out", tmp_path / "o") == 1


def test_missing_scene_is_io_error(tmp_path):
    path = write_manifest(tmp_path, [make_record("a")], scenes=False)
    assert run("render", "--manifest", path, "--out", tmp_path / "o") == 2


def test_qaa_command(tmp_path, capsys):
    ref = write_manifest(tmp_path, [make_record("a", "what color?"), make_record("b", "how many?")],
                         scenes=False)
    pred = tmp_path / "pred.jsonl"
    pred.write_text(json.dumps({"id": "a", "detected_question": "what colour?"}) + "\n"
                    + json.dumps({"id": "b", "question": "How many?"}) + "\n")
    out = tmp_path / "qaa.jsonl"
    assert run("qaa", "--pred", pred, "--ref", ref, "--out", out) == 0
    text = capsys.readouterr().out
    assert "mean QAA: 0.9545" in text
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows[0]["qaa"] == pytest.approx(1 - 1 / 11) and rows[1]["qaa"] == 1.0
    assert (tmp_path / "qaa.jsonl.config.json").exists()
    assert run("qaa", "--pred", pred, "--ref", ref, "--no-normalize") == 0
    assert "b\t0.8889" in capsys.readouterr().out


def test_filter_and_score(tmp_path, capsys):
    recs = [make_record("a", answers=("red",)),
            make_record("b", "Is there a dog?", ("yes",), question_type="binary", dataset_kind="pope")]
    man = write_manifest(tmp_path, recs, scenes=False)
    responses = tmp_path / "responses.jsonl"
    responses.write_text(json.dumps({"id": "a", "response": '{"Answer": "Red"}'}) + "\n"
                         + json.dumps({"id": "b", "response": "No, there is no dog."}) + "\n")
    outcomes = tmp_path / "outcomes.jsonl"
    assert run("filter", "--responses", responses, "--manifest", man, "--out", outcomes) == 0
    rows = [json.loads(line) for line in outcomes.read_text().splitlines()]
    assert rows[0]["answer"] == "Red" and rows[1]["answer"] == "No, there is no dog."
    capsys.readouterr()
    scored = tmp_path / "scored.jsonl"
    assert run("score", "--outcomes", outcomes, "--manifest", man, "--out", scored) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n"] == 2 and summary["accuracy"] == 0.5
    assert summary["per_dataset"]["pope"]["accuracy"] == 0.0


def test_filter_role_split_stdout(tmp_path, capsys):
    responses = tmp_path / "r.jsonl"
    responses.write_text(json.dumps({"id": "a", "response": "Q? HELPER: red"}) + "\n")
    assert run("filter", "--responses", responses, "--mode", "qra", "--role-token", "HELPER:") == 0
    assert json.loads(capsys.readouterr().out)["answer"] == "red"


def test_sft_command(tmp_path, manifest):
    out = tmp_path / "sft.jsonl"
    assert run("sft", "--manifest", manifest, "--strategy", "rqra", "--role-token", "CAT:",
               "--out", out) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 6 and rows[0]["target"].startswith("CAT: ")
    assert rows[0]["image"].endswith(".png")
    assert (tmp_path / "sft.jsonl.config.json").exists()


def test_sft_with_sidecar(tmp_path, manifest):
    out_dir = tmp_path / "render"
    assert run("render", "--manifest", manifest, "--out", out_dir) == 0
    out = tmp_path / "sft.jsonl"
    assert run("sft", "--manifest", manifest, "--strategy", "qra", "--sidecar",
               out_dir / "sidecar.jsonl", "--out", out) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows[0]["image"] == str(out_dir / f"{rows[0]['id']}.png")


def test_prompt_command(tmp_path, manifest, capsys):
    out_dir = tmp_path / "render"
    assert run("render", "--manifest", manifest, "--out", out_dir) == 0
    prompts = tmp_path / "prompts.jsonl"
    assert run("prompt", "--kind", "short_workflow", "--sidecar", out_dir / "sidecar.jsonl",
               "--out", prompts) == 0
    rows = [json.loads(line) for line in prompts.read_text().splitlines()]
    assert len(rows) == 6 and "<bbox>" not in rows[0]["prompt"]
    assert run("prompt", "--kind", "long_workflow", "--dump") == 0
    assert "<top-left-location>" in capsys.readouterr().out


def test_prompt_few_shot(tmp_path, manifest):
    out_dir = tmp_path / "render"
    assert run("render", "--manifest", manifest, "--out", out_dir) == 0
    pool = tmp_path / "pool.jsonl"
    pool.write_text("".join(json.dumps({"id": f"d{i}", "question": f"Q{i}?", "answer": "a"}) + "\n"
                            for i in range(5)))
    prompts = tmp_path / "fs.jsonl"
    args = ("prompt", "--kind", "few_shot", "--k", "2", "--pool", pool,
            "--sidecar", out_dir / "sidecar.jsonl", "--out", prompts)
    assert run(*args) == 0
    first = prompts.read_text()
    assert run(*args) == 0
    assert prompts.read_text() == first
    row = json.loads(first.splitlines()[0])
    assert len(row["images"]) == 3 and "Example 2:" in row["prompt"]
    assert run("prompt", "--kind", "few_shot", "--k", "8", "--pool", pool,
               "--sidecar", out_dir / "sidecar.jsonl") == 1
    assert run("prompt", "--kind", "light") == 1


def test_run_command_with_subprocess_endpoint(tmp_path, manifest, capsys):
    out_dir = tmp_path / "render"
    assert run("render", "--manifest", manifest, "--out", out_dir) == 0
    script = tmp_path / "oracle.py"
    script.write_text(ORACLE_SCRIPT)
    endpoint = f"{sys.executable} {script} {manifest}"
    res = tmp_path / "run"
    assert run("run", "--manifest", manifest, "--sidecar", out_dir / "sidecar.jsonl",
               "--endpoint", endpoint, "--prompt-kind", "light", "--concurrency", "2",
               "--out", res) == 0
    report = json.loads((res / "report.json").read_text())
    assert report["overall_accuracy"] == 1.0
    assert (res / "report.txt").exists() and (res / "config.json").exists()
    assert len((res / "responses.cache.jsonl").read_text().splitlines()) == 6
    # resume serves everything from the cache, so a broken endpoint is never called
    assert run("run", "--manifest", manifest, "--sidecar", out_dir / "sidecar.jsonl",
               "--endpoint", endpoint, "--prompt-kind", "light", "--resume", "--out", res) == 0
    assert json.loads((res / "report.json").read_text())["overall_accuracy"] == 1.0


def test_run_all_failing_endpoint_exit_2(tmp_path, manifest):
    out_dir = tmp_path / "render"
    assert run("render", "--manifest", manifest, "--out", out_dir) == 0
    assert run("run", "--manifest", manifest, "--sidecar", out_dir / "sidecar.jsonl",
               "--endpoint", "/nonexistent/model-binary", "--retries", "0",
               "--out", tmp_path / "run") == 2


def test_console_script_module():
    proc = subprocess.run([sys.executable, "-m", "voqa.cli", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "voqa" in proc.stdout
