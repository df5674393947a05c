"""Canonical literal syntax for testcase values.

Testcase inputs and expected outputs are a closed set of values: integers,
floats, booleans, strings, null and (nested) lists.  The textual form is a
JSON subset written with ``", "`` separators, so ``[2, 3]``, ``"s"``,
``true``, ``3.5`` and ``null`` are all valid literals.
"""

from __future__ import annotations

import json
import math
import sys
from typing import Union

Literal = Union[int, float, bool, str, None, list]

if hasattr(sys, "set_int_max_str_digits"):
    sys.set_int_max_str_digits(0)


class LiteralError(ValueError):
    """Raised when text is not a valid canonical literal."""


def _reject_object(pairs):
    raise LiteralError("objects/maps are not valid literals")


def _nonfinite_rejector(name: str):
    raise LiteralError(f"non-finite number {name!r} is not a valid literal")


def _finite_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise LiteralError(f"float {text!r} overflows")
    return value


def parse_literal(text: str, *, allow_nonfinite: bool = False) -> Literal:
    """Parse one literal.

    ``allow_nonfinite`` admits ``NaN``/``Infinity``; it is used for values
    reported by a running patch, never for corpus data.
    """
    kwargs = {"object_pairs_hook": _reject_object}
    if not allow_nonfinite:
        kwargs["parse_constant"] = _nonfinite_rejector
        kwargs["parse_float"] = _finite_float
    try:
        return json.loads(text, **kwargs)
    except LiteralError:
        raise
    except (json.JSONDecodeError, ValueError) as exc:
        raise LiteralError(f"invalid literal {text.strip()!r}: {exc}") from None


def parse_arguments(text: str) -> list[Literal]:
    """Parse a comma-separated argument list (possibly empty)."""
    if not text.strip():
        return []
    value = parse_literal("[" + text + "]")
    assert isinstance(value, list)
    return value


def format_literal(value: Literal) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_literal(v) for v in value) + "]"
    raise LiteralError(f"unsupported literal type {type(value).__name__}")


def format_arguments(values) -> str:
    return ", ".join(format_literal(v) for v in values)


def check_literal(value: object) -> None:
    """Raise LiteralError unless ``value`` is a finite, well-typed literal."""
    if value is None or isinstance(value, (bool, int, str)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise LiteralError("non-finite float")
        return
    if isinstance(value, list):
        for item in value:
            check_literal(item)
        return
    raise LiteralError(f"unsupported literal type {type(value).__name__}")


def split_arrow(line: str) -> tuple[str, str]:
    """Split ``inputs -> expected`` at the first ``->`` outside a string literal."""
    in_string = False
    escaped = False
    for i, ch in enumerate(line):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "-" and line.startswith("->", i):
            return line[:i], line[i + 2 :]
    raise LiteralError("missing '->' separator")


def _is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def values_equal(a: Literal, b: Literal, tol: float = 0.0) -> bool:
    """Deep structural equality with numeric widening.

    Numbers compare across int/float with ``|a - b| <= tol``; booleans only
    equal booleans.  With ``tol == 0`` the comparison is exact, which keeps
    the relation transitive even for integers beyond float precision.
    """
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    if _is_number(a) and _is_number(b):
        if a == b:
            return True
        if tol == 0 or isinstance(a, int) and isinstance(b, int):
            return False
        try:
            return abs(a - b) <= tol
        except OverflowError:
            return False
    if isinstance(a, bool) or isinstance(b, bool):
        return type(a) is type(b) and a == b
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(values_equal(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    return a is None and b is None
