"""Domain types shared by every stage of the repair loop.

Everything here is immutable after construction and free of I/O.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Any, Optional, Union

from .literals import Literal, check_literal, format_literal


class Language(str, enum.Enum):
    PYTHON = "python"
    JAVA = "java"


class FeedbackStyle(str, enum.Enum):
    NO_TESTCASE = "none"
    NATURAL_LANGUAGE = "nl"
    FUNCTIONAL = "functional"


class Termination(str, enum.Enum):
    FOUND_PLAUSIBLE = "FoundPlausible"
    MAX_LENGTH_REACHED = "MaxLengthReached"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    TOKEN_BUDGET_EXCEEDED = "TokenBudgetExceeded"
    BACKEND_FAILURE = "BackendFailure"


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    id: str
    inputs: tuple
    expected: Literal

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        for value in self.inputs:
            check_literal(value)
        check_literal(self.expected)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "inputs": [format_literal(v) for v in self.inputs],
            "expected": format_literal(self.expected),
        }


_PY_DEF = r"^[ \t]*(?:async[ \t]+)?def[ \t]+{name}[ \t]*\("
_JAVA_DEF = (
    r"^[ \t]*(?:(?:public|private|protected|static|final|synchronized|abstract)[ \t]+)*"
    r"(?:<[^>\n]*>[ \t]*)?(?!return\b|new\b|else\b|throw\b)[\w.$]+(?:[ \t]*<[^\n{{;]*>)?(?:[ \t]*\[[ \t]*\])*[ \t]+{name}[ \t]*\("
)


def definition_pattern(language: Language, name: str) -> re.Pattern:
    """Regex matching a line that defines function ``name`` in ``language``."""
    template = _PY_DEF if Language(language) is Language.PYTHON else _JAVA_DEF
    return re.compile(template.format(name=re.escape(name)), re.MULTILINE)


def defines(source: str, language: Language, name: str) -> bool:
    return definition_pattern(language, name).search(source) is not None


@dataclass(frozen=True)
class BugInstance:
    id: str
    language: Language
    buggy_source: str
    entry_point: str
    testcases: tuple
    reference_patch: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", Language(self.language))
        object.__setattr__(self, "testcases", tuple(self.testcases))
        if not self.testcases:
            raise ValueError(f"bug {self.id}: at least one testcase is required")
        ids = [t.id for t in self.testcases]
        if len(set(ids)) != len(ids):
            raise ValueError(f"bug {self.id}: duplicate testcase ids")
        arities = {len(t.inputs) for t in self.testcases}
        if len(arities) != 1:
            raise ValueError(f"bug {self.id}: testcases disagree on arity {sorted(arities)}")


# -- patch normalisation ------------------------------------------------------

_WS = re.compile(r"\s+")


def _strip_python_comments(src: str) -> str:
    out = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if ch in "'\"":
            quote = src[i : i + 3] if src.startswith(ch * 3, i) else ch
            j = i + len(quote)
            while j < n and not src.startswith(quote, j):
                j += 2 if src[j] == "\\" else 1
            j = min(n, j + len(quote))
            out.append(src[i:j])
            i = j
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _strip_java_comments(src: str) -> str:
    out = []
    i, n = 0, len(src)
    while i < n:
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if src.startswith("/*", i):
            end = src.find("*/", i + 2)
            i = n if end < 0 else end + 2
            out.append(" ")
            continue
        ch = src[i]
        if ch in "'\"":
            j = i + 1
            while j < n and src[j] != ch:
                j += 2 if src[j] == "\\" else 1
            j = min(n, j + 1)
            out.append(src[i:j])
            i = j
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _normalize_once(source: str, language: Language) -> str:
    if Language(language) is Language.JAVA:
        stripped = _strip_java_comments(source)
    else:
        stripped = _strip_python_comments(source)
    return _WS.sub(" ", stripped).strip()


def normalize_patch(source: str, language: Language = Language.PYTHON) -> str:
    """Lexical normal form used for deduplication.

    Comments are removed and whitespace runs collapse to one space.  The
    transformation is iterated to a fixpoint so it is idempotent even for
    malformed sources whose quoting shifts once newlines disappear.
    """
    current = source
    while True:
        nxt = _normalize_once(current, language)
        if nxt == current:
            return nxt
        current = nxt


# -- patches and outcomes -------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    chain_index: int
    turn_index: int
    global_sample_index: int

    def __post_init__(self) -> None:
        if self.chain_index < 0 or self.turn_index < 1 or self.global_sample_index < 1:
            raise ValueError(f"invalid provenance {self}")


@dataclass(frozen=True)
class CandidatePatch:
    raw_model_output: str
    extracted_source: str
    normalized: str
    provenance: Provenance

    @classmethod
    def create(
        cls, raw: str, extracted: str, language: Language, provenance: Provenance
    ) -> "CandidatePatch":
        return cls(raw, extracted, normalize_patch(extracted, language), provenance)

    def to_dict(self) -> dict:
        p = self.provenance
        return {
            "raw_model_output": self.raw_model_output,
            "extracted_source": self.extracted_source,
            "normalized": self.normalized,
            "chain_index": p.chain_index,
            "turn_index": p.turn_index,
            "global_sample_index": p.global_sample_index,
        }


@dataclass(frozen=True)
class Plausible:
    total: int

    kind = "Plausible"

    @property
    def passed_count(self) -> int:
        return self.total

    def to_dict(self) -> dict:
        return {"kind": self.kind, "passed_count": self.total, "total": self.total}


@dataclass(frozen=True)
class TestFailure:
    __test__ = False

    first_failing: TestCase
    actual: Literal
    passed_count: int
    total: int

    kind = "TestFailure"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "first_failing": self.first_failing.to_dict(),
            "actual": format_literal(self.actual),
            "passed_count": self.passed_count,
            "total": self.total,
        }


@dataclass(frozen=True)
class CompileError:
    message: str

    kind = "CompileError"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": self.message}


@dataclass(frozen=True)
class RuntimeFailure:
    """An uncaught exception while running ``test``."""

    test: TestCase
    message: str

    kind = "RuntimeError"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "test": self.test.to_dict(), "message": self.message}


@dataclass(frozen=True)
class Timeout:
    test: TestCase
    limit_ms: int

    kind = "Timeout"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "test": self.test.to_dict(), "limit_ms": self.limit_ms}


@dataclass(frozen=True)
class HarnessError:
    """Environment fault; never a property of the patch under test."""

    message: str

    kind = "HarnessError"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": self.message}


ValidationOutcome = Union[Plausible, TestFailure, CompileError, RuntimeFailure, Timeout, HarnessError]


# -- conversation ---------------------------------------------------------------


@dataclass(frozen=True)
class Turn:
    prompt_sent: str
    patch: CandidatePatch
    outcome: ValidationOutcome
    reused_cached_outcome: bool

    def to_dict(self) -> dict:
        return {
            "prompt_sent": self.prompt_sent,
            "patch": self.patch.to_dict(),
            "outcome": self.outcome.to_dict(),
            "reused_cached_outcome": self.reused_cached_outcome,
        }


@dataclass(frozen=True)
class Chain:
    chain_index: int
    turns: tuple
    termination: Termination

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        for expected, turn in enumerate(self.turns, start=1):
            if turn.patch.provenance.turn_index != expected:
                raise ValueError("turn indices must increase by one starting at 1")
        plausible = [i for i, t in enumerate(self.turns) if isinstance(t.outcome, Plausible)]
        if self.termination is Termination.FOUND_PLAUSIBLE:
            if plausible != [len(self.turns) - 1]:
                raise ValueError("FoundPlausible chain must end in its only plausible turn")
        elif plausible:
            raise ValueError("plausible turn in a chain not terminated by FoundPlausible")

    def to_dict(self) -> dict:
        return {
            "chain_index": self.chain_index,
            "termination": self.termination.value,
            "turns": [t.to_dict() for t in self.turns],
        }


@dataclass(frozen=True)
class RepairConfig:
    max_chain_length: int = 3
    sample_budget: int = 50
    feedback_style: FeedbackStyle = FeedbackStyle.FUNCTIONAL
    top_p: float = 0.95
    temperature: float = 1.0
    per_test_timeout_ms: int = 5000
    prompt_token_budget: int = 2048
    max_generation_tokens: int = 512
    float_tolerance: float = 1e-6
    # runner settings
    python_bin: str = "python3"
    javac_bin: str = "javac"
    java_bin: str = "java"
    keep_workdirs: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "feedback_style", FeedbackStyle(self.feedback_style))
        if self.max_chain_length < 1:
            raise ValueError("max_chain_length must be >= 1")
        if self.sample_budget < 1:
            raise ValueError("sample_budget must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.per_test_timeout_ms < 1:
            raise ValueError("per_test_timeout_ms must be >= 1")
        if self.prompt_token_budget < 1 or self.max_generation_tokens < 1:
            raise ValueError("token budgets must be >= 1")
        if self.float_tolerance < 0:
            raise ValueError("float_tolerance must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_chain_length": self.max_chain_length,
            "sample_budget": self.sample_budget,
            "feedback_style": self.feedback_style.value,
            "top_p": self.top_p,
            "temperature": self.temperature,
            "per_test_timeout_ms": self.per_test_timeout_ms,
            "prompt_token_budget": self.prompt_token_budget,
            "max_generation_tokens": self.max_generation_tokens,
            "float_tolerance": self.float_tolerance,
        }


@dataclass(frozen=True)
class RepairResult:
    bug_id: str
    chains: tuple
    plausible_patch: Optional[CandidatePatch] = None
    tries: Optional[int] = None
    correct_exact: Optional[bool] = None
    wall_clock_ms: int = 0
    validations: int = 0
    failure: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "chains", tuple(self.chains))
        if (self.tries is None) != (self.plausible_patch is None):
            raise ValueError("tries is present exactly when a plausible patch is")
        if self.plausible_patch is not None:
            if self.tries != self.plausible_patch.provenance.global_sample_index:
                raise ValueError("tries must equal the plausible patch's sample index")

    @property
    def samples_used(self) -> int:
        return sum(len(c.turns) for c in self.chains)

    @property
    def plausible(self) -> bool:
        return self.plausible_patch is not None

    def to_dict(self) -> dict:
        return {
            "bug_id": self.bug_id,
            "plausible": self.plausible,
            "tries": self.tries,
            "correct_exact": self.correct_exact,
            "samples_used": self.samples_used,
            "validations": self.validations,
            "failure": self.failure,
            "wall_clock_ms": self.wall_clock_ms,
            "plausible_patch": None if self.plausible_patch is None else self.plausible_patch.to_dict(),
            "chains": [c.to_dict() for c in self.chains],
        }


def all_turns(result: RepairResult) -> list:
    return [t for c in result.chains for t in c.turns]

