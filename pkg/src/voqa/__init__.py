"""Tooling for Visual-only QA: embed questions into images and score model replies."""

__version__ = "0.1.0"

from .composite import CompositeArtifact, WatermarkColor
from .concat import compose_concat
from .harness import EndpointConfig, EvalReport, run_eval
from .manifest import PrepConfig, SampleRecord, load_manifest, prepare_question, split_dialogues
from .metrics import edit_distance, qaa, score_answer
from .prompts import assemble_few_shot, build_ocr_assisted_prompt, build_prompt
from .rasterizer import TextTile, render_text_tile
from .respfilter import FilterOutcome, classify_behavior, filter_response
from .sft import SftExample, build_sft_example, round_trip_check
from .watermark import (
    compose_watermark,
    enumerate_candidates,
    pick_color,
    select_region,
    wcag_contrast,
)

__all__ = [
    "CompositeArtifact",
    "EndpointConfig",
    "EvalReport",
    "FilterOutcome",
    "PrepConfig",
    "SampleRecord",
    "SftExample",
    "TextTile",
    "WatermarkColor",
    "assemble_few_shot",
    "build_ocr_assisted_prompt",
    "build_prompt",
    "build_sft_example",
    "classify_behavior",
    "compose_concat",
    "compose_watermark",
    "edit_distance",
    "enumerate_candidates",
    "filter_response",
    "load_manifest",
    "pick_color",
    "prepare_question",
    "qaa",
    "render_text_tile",
    "round_trip_check",
    "run_eval",
    "score_answer",
    "select_region",
    "split_dialogues",
    "wcag_contrast",
]
