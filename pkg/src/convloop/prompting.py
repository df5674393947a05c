"""Prompt construction: initial prompt, failure feedback and transcripts.

All templates are byte-exact; changing any of them changes experiment
results and must be reflected in the golden files under tests/data.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

from .literals import format_arguments, format_literal
from .model import (
    BugInstance,
    CompileError,
    FeedbackStyle,
    HarnessError,
    Plausible,
    RuntimeFailure,
    TestFailure,
    Timeout,
    Turn,
    ValidationOutcome,
)

INITIAL_TEMPLATE = "The following code is buggy.\n{src}\nPlease provide a fixed version.\n"
NOT_CORRECT = "The fixed version is still not correct."
ASK_AGAIN = "Please provide another fixed version.\n"
FENCE = "```"


def token_estimate(text: str) -> int:
    """Approximate token count: one token per four UTF-8 bytes, rounded up."""
    return math.ceil(len(text.encode("utf-8")) / 4)


@dataclass(frozen=True)
class PromptText:
    text: str
    estimated_tokens: int

    @classmethod
    def of(cls, text: str) -> "PromptText":
        return cls(text, token_estimate(text))


def build_initial_prompt(bug: BugInstance) -> PromptText:
    return PromptText.of(INITIAL_TEMPLATE.format(src=bug.buggy_source))


def render_invocation(entry_point: str, inputs: Sequence) -> str:
    return f"{entry_point}({format_arguments(inputs)})"


def _one_line(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().rstrip(".")


def diagnostic(outcome: ValidationOutcome) -> str:
    """One-line error summary used for non-test-failure feedback."""
    if isinstance(outcome, (CompileError, RuntimeFailure)):
        return _one_line(outcome.message)
    if isinstance(outcome, Timeout):
        return f"Timeout: execution exceeded {outcome.limit_ms} ms"
    raise TypeError(f"no diagnostic for {outcome.kind}")


def build_feedback(outcome: ValidationOutcome, style: FeedbackStyle, bug: BugInstance) -> PromptText:
    if isinstance(outcome, (Plausible, HarnessError)):
        raise ValueError(f"{outcome.kind} outcomes never produce feedback")
    style = FeedbackStyle(style)
    if not isinstance(outcome, TestFailure):
        return PromptText.of(f"{NOT_CORRECT} It fails with: {diagnostic(outcome)}. {ASK_AGAIN}")
    if style is FeedbackStyle.NO_TESTCASE:
        return PromptText.of(f"{NOT_CORRECT} {ASK_AGAIN}")

    case = outcome.first_failing
    actual = format_literal(outcome.actual)
    expected = format_literal(case.expected)
    if style is FeedbackStyle.NATURAL_LANGUAGE:
        inputs = format_arguments(case.inputs) or "()"
        body = f"When the input is {inputs}, it incorrectly returns {actual} but it should return {expected}."
    else:
        call = render_invocation(bug.entry_point, case.inputs)
        body = f"{call} returns {actual} but the expected output is {expected}."
    return PromptText.of(f"{NOT_CORRECT} {body} {ASK_AGAIN}")


def code_block(source: str) -> str:
    if source and not source.endswith("\n"):
        source += "\n"
    return f"{FENCE}\n{source}{FENCE}\n"


def assemble_transcript(
    initial: PromptText, turns: Sequence[Turn], style: FeedbackStyle, bug: BugInstance
) -> PromptText:
    """Concatenate the initial prompt with every (sample, feedback) pair in order."""
    if not turns:
        return initial
    parts = [initial.text]
    for turn in turns:
        parts.append(code_block(turn.patch.extracted_source))
        parts.append(build_feedback(turn.outcome, style, bug).text)
    return PromptText.of("".join(parts))
