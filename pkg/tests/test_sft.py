import random

import pytest

from voqa.composite import CompositeArtifact
from voqa.sft import ROLE_TOKENS, STRATEGIES, SftError, build_sft_example, round_trip_check

from conftest import make_record

REC = make_record(question="What color is the hat?", answers=("red", "crimson"))
ART = CompositeArtifact(source_id="q1", question_bbox=(0, 0, 10, 10), method="watermark",
                        size=(40, 40), image_path="out/q1.png")

Q, A, R = "What color is the hat?", "red", "ASSISTANT:"
SHAPES = {
    "vqa": (f"{Q} {R}", A),
    "baseline": (R, A),
    "qa": (R, f"{Q} {A}"),
    "qra": ("", f"{Q} {R} {A}"),
    "r_qra": (R, f"{Q} {R} {A}"),
    "qa_only": ("", f"{Q} {A}"),
    "rqa": ("", f"{R} {Q} {A}"),
    "rqra": ("", f"{R} {Q} {R} {A}"),
}


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_shapes(strategy):
    ex = build_sft_example(REC, ART, strategy, R)
    assert (ex.input_text, ex.target_text) == SHAPES[strategy]
    assert ex.strategy == strategy and ex.role_token == R
    assert round_trip_check(ex)


def test_paper_examples():
    assert build_sft_example(REC, ART, "qra").target_text == "What color is the hat? ASSISTANT: red"
    assert build_sft_example(REC, ART, "baseline").target_text == "red"
    assert build_sft_example(REC, ART, "rqra").target_text == \
        "ASSISTANT: What color is the hat? ASSISTANT: red"


def test_image_refs():
    assert build_sft_example(REC, None, "vqa").image_ref == REC.scene_path
    assert build_sft_example(REC, ART, "qa").image_ref == "out/q1.png"


def test_qra_and_r_qra_share_target():
    for role in ROLE_TOKENS:
        a = build_sft_example(REC, ART, "qra", role)
        b = build_sft_example(REC, ART, "r_qra", role)
        assert a.target_text == b.target_text and a.input_text != b.input_text


def test_multi_sentence_answer_fails_round_trip():
    rec = make_record(question=Q, answers=("It is red. Very red.",))
    ex = build_sft_example(rec, ART, "qa")
    assert not round_trip_check(ex)


def test_missing_artifact():
    with pytest.raises(SftError):
        build_sft_example(REC, None, "qra")


@pytest.mark.parametrize("strategy", [s for s in STRATEGIES if s != "qa_only"])
def test_empty_role_token(strategy):
    with pytest.raises(SftError):
        build_sft_example(REC, ART, strategy, "")


def test_qa_only_does_not_need_role():
    assert build_sft_example(REC, ART, "qa_only", "").target_text == f"{Q} {A}"


def test_unknown_strategy():
    with pytest.raises(SftError):
        build_sft_example(REC, ART, "qqa")


def test_json_shape():
    row = build_sft_example(REC, ART, "qra").to_json()
    assert set(row) == {"id", "image", "input", "target", "strategy", "role_token"}


WORDS = "the a red blue hat dog sits on table near window big small two".split()


def synthetic_records(n, seed=0):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        q = " ".join(rng.choices(WORDS, k=rng.randint(2, 12))).capitalize() + rng.choice("?.!")
        a = " ".join(rng.choices(WORDS + ["3", "4.5", "x-ray", "it's"], k=rng.randint(1, 4)))
        out.append(make_record(f"s{i}", q, (a,)))
    return out


@pytest.mark.parametrize("role", ROLE_TOKENS)
def test_round_trip_all_strategies(role):
    for rec in synthetic_records(100):
        for strategy in STRATEGIES:
            ex = build_sft_example(rec, ART, strategy, role)
            assert round_trip_check(ex), (strategy, role, ex.target_text)
