import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voqa.respfilter import (
    BehaviorThresholds,
    FilterOutcome,
    classify_behavior,
    filter_response,
    shares_ngram,
)

from conftest import make_record

CANON = ('{"Detected Question": "What is the brand of this camera?", "Answer": "Canon", '
         '"Reasoning": "The text \'Canon\' is clearly visible on the camera body."}')


def test_json_example():
    out = filter_response(CANON)
    assert out.answer == "Canon"
    assert out.detected_question == "What is the brand of this camera?"
    assert out.strategy == "json_field"


def test_json_case_insensitive_keys_and_embedded():
    raw = 'Sure! ```json\n{"detected question": "Is it red?", "ANSWER": "yes"}\n``` done'
    out = filter_response(raw)
    assert (out.answer, out.detected_question, out.strategy) == ("yes", "Is it red?", "json_field")


def test_json_with_braces_inside_strings():
    raw = 'prefix {"Answer": "a {weird} } value", "x": 1} suffix'
    assert filter_response(raw).answer == "a {weird} } value"


def test_few_shot_output_key():
    raw = '{"The question in the image": "How many cats?", "Answer": "2"}'
    out = filter_response(raw)
    assert out.answer == "2" and out.detected_question == "How many cats?"


def test_json_without_answer_falls_through():
    out = filter_response('{"caption": "a dog"} The answer is dog.')
    assert out.answer == "dog" and out.strategy == "answer_pattern"


def test_json_beats_pattern():
    raw = 'The answer is cat. {"Answer": "dog"}'
    assert filter_response(raw).answer == "dog"


@pytest.mark.parametrize("raw, answer", [
    ("I think the answer is blue. It is clearly visible.", "blue"),
    ("Answer: 3.5 meters", "3.5 meters"),
    ("THE ANSWER IS: Paris!", "Paris"),
    ("Reasoning here.\nAnswer: tennis racket\nMore text", "tennis racket"),
    ('The answer is "frisbee".', "frisbee"),
])
def test_answer_patterns(raw, answer):
    out = filter_response(raw)
    assert out.strategy == "answer_pattern" and out.answer == answer


def test_first_pattern_occurrence_wins():
    assert filter_response("Answer: one. The answer is two.").answer == "one"


def test_pope_keeps_full_text():
    out = filter_response("There is not a dog in the picture.", dataset_kind="pope")
    assert out.answer == "There is not a dog in the picture." and out.strategy == "verbatim"


def test_verbatim_fallback_trims():
    assert filter_response("  red  \n").answer == "red"


@pytest.mark.parametrize("mode", ["auto", "json", "qra", "qa", "verbatim"])
def test_empty_input(mode):
    out = filter_response("", mode=mode)
    assert out.answer == "" and out.strategy == "verbatim"


def test_role_split():
    out = filter_response("What color is the hat? ASSISTANT: red", mode="qra", role_token="ASSISTANT:")
    assert out.answer == "red"
    assert out.detected_question == "What color is the hat?"
    assert out.strategy == "role_split"


def test_role_split_uses_last_occurrence():
    out = filter_response("ASSISTANT: Q? ASSISTANT: blue", mode="qra")
    assert out.answer == "blue" and out.detected_question == "ASSISTANT: Q?"


def test_role_split_missing_token_flags():
    out = filter_response("just text", mode="qra", role_token="HELPER:")
    assert out.answer == "just text" and out.strategy == "verbatim" and out.flagged


def test_last_sentence():
    out = filter_response("What color is the hat? red", mode="qa")
    assert out.answer == "red" and out.detected_question == "What color is the hat?"
    assert out.strategy == "last_sentence"
    assert filter_response("Q? It is red. Very red.", mode="qa").answer == "Very red"


def test_json_mode_does_not_use_patterns():
    out = filter_response("The answer is cat.", mode="json")
    assert out.answer == "The answer is cat." and out.strategy == "verbatim"


def test_outcome_json():
    out = filter_response(CANON)
    row = out.to_json("q7")
    assert row["id"] == "q7" and row["strategy"] == "json_field"
    assert "behavior" not in row


@settings(max_examples=300)
@given(st.text(), st.sampled_from(["auto", "json", "qra", "qa", "verbatim"]),
       st.sampled_from(["ASSISTANT:", "\nassistant\n", "CAT:"]),
       st.sampled_from(["pope", "gqa", "custom"]))
def test_total_on_arbitrary_input(raw, mode, role, kind):
    out = filter_response(raw, mode=mode, role_token=role, dataset_kind=kind)
    assert isinstance(out, FilterOutcome) and isinstance(out.answer, str)


@settings(max_examples=300)
@given(st.text(max_size=30), st.text(max_size=30),
       st.sampled_from(["ASSISTANT:", "\nassistant\n", "HELPER:", "CAT:"]))
def test_role_split_reassembly(q, a, role):
    raw = q + role + a
    out = filter_response(raw, mode="qra", role_token=role)
    if not raw.strip():
        return
    assert out.strategy == "role_split"
    rebuilt = (out.detected_question or "") + role + out.answer

    def squash(s):
        return re.sub(r"\s+", "", s)

    assert squash(rebuilt) == squash(raw)


@settings(max_examples=200)
@given(st.text(alphabet="abc xyz", max_size=20), st.text(alphabet="abc xyz", max_size=20))
def test_json_precedence(json_answer, pattern_answer):
    import json

    raw = f"The answer is {pattern_answer}. " + json.dumps({"Answer": json_answer})
    out = filter_response(raw)
    assert out.strategy == "json_field" and out.answer == json_answer.strip()


QUESTION = "Where will these things eventually be seen? Answer the question using a single word or phrase."


def _classify(answer, correct=False, **rec_kw):
    rec = make_record(question=QUESTION, answers=("road",), **rec_kw)
    return classify_behavior(FilterOutcome(answer=answer), rec, correct)


def test_behavior_repeat():
    assert _classify(QUESTION) == "repeat_question"
    assert _classify(QUESTION.upper().replace("EVENTUALLY", "EVENLY")) == "repeat_question"


def test_behavior_correct_has_priority():
    assert _classify(QUESTION, correct=True) == "correct_answer"


def test_behavior_aware_caption():
    caption = ('The image shows a road construction scene and a text that reads "where will these '
               'things eventually be seen" over the barricades.')
    assert shares_ngram(caption, QUESTION, 5)
    assert _classify(caption) == "aware_caption"


def test_behavior_unaware_caption():
    caption = ("The image features a construction site with several road signs and barricades "
               "placed along the side of a busy street.")
    q_words = re.findall(r"[\w']+", QUESTION.lower())
    grams = {tuple(q_words[i:i + 5]) for i in range(len(q_words) - 4)}
    c_words = re.findall(r"[\w']+", caption.lower())
    assert not any(tuple(c_words[i:i + 5]) in grams for i in range(len(c_words) - 4))
    assert _classify(caption) == "unaware_caption"


def test_behavior_wrong_answer():
    assert _classify("highway") == "wrong_answer"


def test_behavior_thresholds_configurable():
    rec = make_record(question=QUESTION)
    long_wrong = "one two three four five six seven eight"
    t = BehaviorThresholds(short_answer_words=10)
    assert classify_behavior(FilterOutcome(long_wrong), rec, False, t) == "wrong_answer"


def test_last_sentence_keeps_decimals():
    assert filter_response("How tall is it? 3.5 meters", mode="qa").answer == "3.5 meters"
