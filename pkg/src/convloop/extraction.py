"""Pull a candidate function out of raw model output."""

from __future__ import annotations

import ast
import re
import textwrap

from .model import BugInstance, Language, definition_pattern

_FENCE_OPEN = re.compile(r"^[ \t]*```[^\n`]*\n", re.MULTILINE)
_FENCE_CLOSE = re.compile(r"^[ \t]*```[ \t]*$", re.MULTILINE)
_JAVA_CODE_START = re.compile(
    r"(?:(?:import|package|public|private|protected|static|final|abstract|class)\b|@|/\*|//)"
)


def _fenced_block(text: str):
    m = _FENCE_OPEN.search(text)
    if m is None:
        return None
    close = _FENCE_CLOSE.search(text, m.end())
    body = text[m.end() : close.start() if close else len(text)]
    return textwrap.dedent(body).strip()


def _looks_like_code(text: str, language: Language) -> bool:
    if not text:
        return False
    if language is Language.PYTHON:
        try:
            ast.parse(text)
        except (SyntaxError, ValueError):
            return False
        return True
    return _JAVA_CODE_START.match(text) is not None and text.endswith("}")


def _python_block(lines: list[str], start: int) -> list[str]:
    indent = len(lines[start]) - len(lines[start].lstrip())
    end = start + 1
    last_code = start
    while end < len(lines):
        line = lines[end]
        if line.strip():
            if len(line) - len(line.lstrip()) <= indent:
                break
            last_code = end
        end += 1
    return lines[start : last_code + 1]


def _java_block(lines: list[str], start: int) -> list[str]:
    depth = 0
    opened = False
    for i in range(start, len(lines)):
        for ch in lines[i]:
            if ch == "{":
                depth += 1
                opened = True
            elif ch == "}":
                depth -= 1
        if opened and depth <= 0:
            return lines[start : i + 1]
        if not opened and lines[i].rstrip().endswith(";"):
            return lines[start : i + 1]
    return lines[start:]


def _definition_region(text: str, bug: BugInstance):
    pattern = definition_pattern(bug.language, bug.entry_point)
    lines = text.split("\n")
    best = None
    for i, line in enumerate(lines):
        if not pattern.match(line):
            continue
        if bug.language is Language.PYTHON:
            region = _python_block(lines, i)
        else:
            region = _java_block(lines, i)
        joined = "\n".join(region)
        if best is None or len(joined) > len(best):
            best = joined
    return None if best is None else textwrap.dedent(best)


def _extract_once(raw_text: str, bug: BugInstance) -> str:
    fenced = _fenced_block(raw_text)
    if fenced is not None:
        return fenced
    trimmed = raw_text.strip()
    if _looks_like_code(trimmed, bug.language):
        return trimmed
    region = _definition_region(raw_text, bug)
    if region is not None:
        return region.strip()
    return trimmed


def extract_patch(raw_text: str, bug: BugInstance) -> str:
    """Return the patch source contained in ``raw_text``.

    Priority: the first fenced code block; otherwise the largest block that
    defines the entry point (by indentation for Python, brace balance for
    Java); otherwise the whole text, trimmed.  Text that already is valid
    code is kept whole.  The rules are reapplied until nothing changes (a
    fenced body can itself hold a fence), so the result is a fixpoint.
    """
    current = _extract_once(raw_text, bug)
    while True:
        nxt = _extract_once(current, bug)
        if nxt == current or len(nxt) >= len(current):
            return current
        current = nxt
