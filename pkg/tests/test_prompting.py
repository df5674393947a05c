import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import check_golden
from convloop.model import (
    BugInstance,
    CandidatePatch,
    CompileError,
    FeedbackStyle,
    HarnessError,
    Plausible,
    Provenance,
    RuntimeFailure,
    TestCase,
    TestFailure,
    Timeout,
    Turn,
)
from convloop.prompting import (
    PromptText,
    assemble_transcript,
    build_feedback,
    build_initial_prompt,
    code_block,
    render_invocation,
    token_estimate,
)


def _failure(bug, inputs, actual):
    case = next(t for t in bug.testcases if list(t.inputs) == list(inputs))
    return TestFailure(case, actual, 0, len(bug.testcases))


def test_initial_prompt(sieve):
    prompt = build_initial_prompt(sieve)
    assert prompt.text == "The following code is buggy.\n" + sieve.buggy_source + "\nPlease provide a fixed version.\n"
    assert "The following code is buggy." in prompt.text.splitlines()
    assert "Please provide a fixed version." in prompt.text.splitlines()
    assert prompt.estimated_tokens > 0
    check_golden("initial_prompt_sieve.txt", prompt.text)


def test_initial_prompt_empty_source(sieve):
    bug = BugInstance("e", "python", "", "f", sieve.testcases, "")
    assert build_initial_prompt(bug).text == "The following code is buggy.\n\nPlease provide a fixed version.\n"


@pytest.mark.parametrize(
    "entry, inputs, expected",
    [
        ("sieve", [2], "sieve(2)"),
        ("f", [], "f()"),
        ("bitcount", [127], "bitcount(127)"),
        ("g", [[1, 2], "s", True, None, 2.5], 'g([1, 2], "s", true, null, 2.5)'),
    ],
)
def test_render_invocation(entry, inputs, expected):
    assert render_invocation(entry, inputs) == expected


def test_functional_feedback_sieve4(sieve):
    fb = build_feedback(_failure(sieve, [4], [2, 4]), FeedbackStyle.FUNCTIONAL, sieve)
    assert "sieve(4) returns [2, 4] but the expected output is [2, 3]" in fb.text


@pytest.mark.parametrize(
    "style, golden",
    [
        (FeedbackStyle.NO_TESTCASE, "feedback_none_sieve2.txt"),
        (FeedbackStyle.NATURAL_LANGUAGE, "feedback_nl_sieve2.txt"),
        (FeedbackStyle.FUNCTIONAL, "feedback_functional_sieve2.txt"),
    ],
)
def test_feedback_styles_golden(sieve, style, golden):
    fb = build_feedback(_failure(sieve, [2], []), style, sieve)
    check_golden(golden, fb.text)
    assert fb.estimated_tokens == token_estimate(fb.text)


def test_feedback_templates_exact(sieve):
    failure = _failure(sieve, [2], [])
    none = build_feedback(failure, FeedbackStyle.NO_TESTCASE, sieve).text
    nl = build_feedback(failure, FeedbackStyle.NATURAL_LANGUAGE, sieve).text
    fn = build_feedback(failure, FeedbackStyle.FUNCTIONAL, sieve).text
    assert none == "The fixed version is still not correct. Please provide another fixed version.\n"
    assert nl == (
        "The fixed version is still not correct. When the input is 2, it incorrectly returns [] "
        "but it should return [2]. Please provide another fixed version.\n"
    )
    assert fn == (
        "The fixed version is still not correct. sieve(2) returns [] but the expected output is [2]. "
        "Please provide another fixed version.\n"
    )


def test_no_testcase_feedback_leaks_nothing(sieve):
    for case in sieve.testcases:
        fb = build_feedback(TestFailure(case, [999], 0, 7), FeedbackStyle.NO_TESTCASE, sieve).text
        assert not re.search(r"\d", fb)
        assert "sieve(" not in fb


def test_functional_always_invokes_entry_point(sieve):
    for case in sieve.testcases:
        fb = build_feedback(TestFailure(case, [], 0, 7), FeedbackStyle.FUNCTIONAL, sieve).text
        assert "sieve(" in fb


@pytest.mark.parametrize("style", list(FeedbackStyle))
def test_error_feedback_shared_by_all_styles(sieve, style):
    case = sieve.testcases[0]
    cases = [
        (CompileError("SyntaxError: '(' was never closed (patch.py, line 3)"),
         "It fails with: SyntaxError: '(' was never closed (patch.py, line 3). "),
        (RuntimeFailure(case, "ZeroDivisionError: division by zero"),
         "It fails with: ZeroDivisionError: division by zero. "),
        (Timeout(case, 5000), "It fails with: Timeout: execution exceeded 5000 ms. "),
    ]
    for outcome, fragment in cases:
        text = build_feedback(outcome, style, sieve).text
        assert text == "The fixed version is still not correct. " + fragment + "Please provide another fixed version.\n"


def test_error_feedback_is_one_line(sieve):
    fb = build_feedback(CompileError("Traceback:\n  line 1\nSyntaxError: bad."), FeedbackStyle.FUNCTIONAL, sieve)
    assert fb.text.count("\n") == 1
    assert "bad.." not in fb.text


def test_nl_zero_argument_input():
    bug = BugInstance("z", "python", "def f():\n    return 1\n", "f", (TestCase("t1", (), 2),), "")
    fb = build_feedback(TestFailure(bug.testcases[0], 1, 0, 1), FeedbackStyle.NATURAL_LANGUAGE, bug).text
    assert "When the input is (), it incorrectly returns 1 but it should return 2." in fb


@pytest.mark.parametrize("outcome", [Plausible(3), HarnessError("python3 missing")])
def test_feedback_rejects_plausible_and_harness(sieve, outcome):
    with pytest.raises(ValueError):
        build_feedback(outcome, FeedbackStyle.FUNCTIONAL, sieve)


def test_token_estimate():
    assert token_estimate("") == 0
    assert token_estimate("abcdefgh") == 2
    assert token_estimate("abcdefghi") == 3
    assert token_estimate("é") == 1  # two bytes


@given(st.text(), st.text())
def test_token_estimate_subadditive(a, b):
    assert token_estimate(a + b) <= token_estimate(a) + token_estimate(b) + 1


def _turn(bug, i, source, outcome):
    patch = CandidatePatch.create(source, source, bug.language, Provenance(0, i, i))
    return Turn("p", patch, outcome, False)


def test_assemble_empty_is_identity(sieve):
    initial = build_initial_prompt(sieve)
    assert assemble_transcript(initial, [], FeedbackStyle.FUNCTIONAL, sieve) is initial


def test_assemble_order_and_monotonicity(sieve):
    initial = build_initial_prompt(sieve)
    s1 = "def sieve(max):\n    return [2, 4]"
    s2 = "def sieve(max):\n    return []"
    t1 = _turn(sieve, 1, s1, _failure(sieve, [4], [2, 4]))
    t2 = _turn(sieve, 2, s2, _failure(sieve, [2], []))
    one = assemble_transcript(initial, [t1], FeedbackStyle.FUNCTIONAL, sieve)
    two = assemble_transcript(initial, [t1, t2], FeedbackStyle.FUNCTIONAL, sieve)
    assert one.text == initial.text + "```\n" + s1 + "\n```\n" + build_feedback(t1.outcome, "functional", sieve).text
    assert two.text.startswith(one.text)
    assert initial.estimated_tokens < one.estimated_tokens < two.estimated_tokens
    assert isinstance(two, PromptText) and two.estimated_tokens == token_estimate(two.text)


def test_code_block():
    assert code_block("x") == "```\nx\n```\n"
    assert code_block("x\n") == "```\nx\n```\n"
    assert code_block("") == "```\n```\n"
