import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from convloop.extraction import extract_patch
from convloop.model import BugInstance, Language, TestCase

CHAT = DATA / "chat_outputs"


def _bug(entry, language=Language.PYTHON):
    if language is Language.PYTHON:
        src = f"def {entry}(x):\n    return x\n"
    else:
        src = f"public static int {entry}(int x) {{\n    return x;\n}}\n"
    return BugInstance("b", language, src, entry, (TestCase("t1", (1,), 1),), src)


def _entry_of(text):
    return re.search(r"def (\w+)\(", text).group(1)


def test_fenced_body_only(sieve):
    raw = "Here is the fix:\n```python\ndef sieve(max):\n    return []\n```\nHope it helps."
    assert extract_patch(raw, sieve) == "def sieve(max):\n    return []"


def test_first_fence_wins(sieve):
    raw = "```\nFIRST = 1\n```\ntext\n```\nSECOND = 2\n```"
    assert extract_patch(raw, sieve) == "FIRST = 1"


def test_unclosed_fence_runs_to_end(sieve):
    raw = "```python\ndef sieve(max):\n    return [2]\n"
    assert extract_patch(raw, sieve) == "def sieve(max):\n    return [2]"


def test_bare_definition_is_returned_unchanged(sieve):
    assert extract_patch(sieve.reference_patch, sieve) == sieve.reference_patch.strip()


def test_fallback_is_trimmed_text(sieve):
    assert extract_patch("  I cannot help with that.  \n", sieve) == "I cannot help with that."


def test_empty_output(sieve):
    assert extract_patch("", sieve) == ""


def test_nested_fence_reaches_fixpoint(sieve):
    raw = "```\n```py\nx = 1\n```"
    once = extract_patch(raw, sieve)
    assert once == "x = 1"
    assert extract_patch(once, sieve) == once


@pytest.mark.parametrize("name", sorted(p.stem for p in CHAT.glob("*.txt")))
def test_chat_transcripts_golden(name):
    raw = (CHAT / f"{name}.txt").read_text(encoding="utf-8")
    expected = (CHAT / f"{name}.expected").read_text(encoding="utf-8").strip()
    bug = _bug(_entry_of(expected))
    assert extract_patch(raw, bug) == expected


def test_java_brace_region():
    bug = _bug("gcd", Language.JAVA)
    raw = (
        "The fix swaps the arguments.\n"
        "public static int gcd(int a, int b) {\n"
        "    if (b == 0) {\n"
        "        return a;\n"
        "    }\n"
        "    return gcd(b, a % b);\n"
        "}\n"
        "This now terminates."
    )
    out = extract_patch(raw, bug)
    assert out.startswith("public static int gcd(int a, int b) {")
    assert out.endswith("return gcd(b, a % b);\n}")


def test_java_return_call_is_not_a_definition():
    bug = _bug("gcd", Language.JAVA)
    raw = "Note that it does\n    return gcd(b, a % b);\nin the last line."
    assert extract_patch(raw, bug) == raw.strip()


_alphabet = st.sampled_from(
    ["def sieve(max):\n", "    return []\n", "```\n", "```python\n", "text ", "\n", "  ", "x = 1\n", "#c\n", "}"]
)


@settings(max_examples=300, deadline=None)
@given(st.lists(_alphabet, max_size=15).map("".join))
def test_idempotent_python(raw):
    bug = _bug("sieve")
    once = extract_patch(raw, bug)
    assert extract_patch(once, bug) == once


_java_alphabet = st.sampled_from(
    ["static int gcd(int a) {\n", "return gcd(a);\n", "}\n", "{", "```\n", "```java\n", "prose ", "\n", "int x;\n"]
)


@settings(max_examples=300, deadline=None)
@given(st.lists(_java_alphabet, max_size=15).map("".join))
def test_idempotent_java(raw):
    bug = _bug("gcd", Language.JAVA)
    once = extract_patch(raw, bug)
    assert extract_patch(once, bug) == once


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=200))
def test_total_on_arbitrary_text(raw):
    bug = _bug("sieve")
    out = extract_patch(raw, bug)
    assert isinstance(out, str) and extract_patch(out, bug) == out
