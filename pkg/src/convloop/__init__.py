"""Conversational program repair: interleave LLM patch generation with test validation."""

from .backends import CommandBackend, HttpBackend, ScriptedBackend, load_script
from .corpus import doctor, fixtures_root, load_bug, load_suite
from .extraction import extract_patch
from .harness import OutcomeCache, validate
from .literals import format_literal, parse_literal, values_equal
from .model import (
    BugInstance,
    CandidatePatch,
    Chain,
    FeedbackStyle,
    Language,
    RepairConfig,
    RepairResult,
    Termination,
    TestCase,
    Turn,
    normalize_patch,
)
from .orchestrator import repair, repair_suite
from .prompting import assemble_transcript, build_feedback, build_initial_prompt, render_invocation, token_estimate
from .reporting import emit_report, judge_correct_exact, summarize

__version__ = "0.1.0"

__all__ = [
    "BugInstance",
    "CandidatePatch",
    "Chain",
    "CommandBackend",
    "FeedbackStyle",
    "HttpBackend",
    "Language",
    "OutcomeCache",
    "RepairConfig",
    "RepairResult",
    "ScriptedBackend",
    "Termination",
    "TestCase",
    "Turn",
    "assemble_transcript",
    "build_feedback",
    "build_initial_prompt",
    "doctor",
    "emit_report",
    "extract_patch",
    "fixtures_root",
    "format_literal",
    "judge_correct_exact",
    "load_bug",
    "load_script",
    "load_suite",
    "normalize_patch",
    "parse_literal",
    "render_invocation",
    "repair",
    "repair_suite",
    "summarize",
    "token_estimate",
    "validate",
    "values_equal",
]
