"""Patch validation: run a candidate against the full testsuite in a child process."""

from __future__ import annotations

import logging
import os
import queue
import re
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .literals import LiteralError, format_literal, parse_literal, values_equal
from .model import (
    BugInstance,
    CompileError,
    HarnessError,
    Language,
    Plausible,
    RepairConfig,
    RuntimeFailure,
    TestFailure,
    Timeout,
    ValidationOutcome,
)
from .shims import JAVA_SHIM, PYTHON_SHIM

log = logging.getLogger(__name__)

JAVA_COMPILE_TIMEOUT_S = 120
_STDERR_KEEP = 4000


class UnsupportedLanguage(ValueError):
    pass


def generate_shim(bug: BugInstance) -> str:
    try:
        language = Language(bug.language)
    except ValueError:
        raise UnsupportedLanguage(f"no runner for language {bug.language!r}") from None
    if language is Language.PYTHON:
        return PYTHON_SHIM
    return JAVA_SHIM


def serialize_tests(bug: BugInstance) -> str:
    lines = [
        ", ".join(format_literal(v) for v in t.inputs) + " -> " + format_literal(t.expected)
        for t in bug.testcases
    ]
    return "\n".join(lines) + "\n"


# -- per-language preparation ---------------------------------------------------

_JAVA_CLASS = re.compile(r"^\s*(?:public\s+|final\s+|abstract\s+)*class\s+(\w+)", re.MULTILINE)
_JAVA_PACKAGE = re.compile(r"^\s*package\s+[\w.]+\s*;\s*$", re.MULTILINE)


def java_compilation_unit(source: str) -> tuple[str, str]:
    """Return ``(class_name, source)`` for a Java patch, wrapping bare methods."""
    source = _JAVA_PACKAGE.sub("", source)
    m = _JAVA_CLASS.search(source)
    if m:
        return m.group(1), source
    wrapped = "import java.util.*;\n\npublic class Patch {\n" + source + "\n}\n"
    return "Patch", wrapped


def _prepare_python(workdir: Path, bug: BugInstance, patch_source: str, cfg: RepairConfig):
    (workdir / "patch.py").write_text(patch_source, encoding="utf-8")
    (workdir / "shim.py").write_text(generate_shim(bug), encoding="utf-8")
    return [cfg.python_bin, "-I", "shim.py", "patch.py", "tests.txt", bug.entry_point]


def _prepare_java(workdir: Path, bug: BugInstance, patch_source: str, cfg: RepairConfig):
    class_name, unit = java_compilation_unit(patch_source)
    (workdir / f"{class_name}.java").write_text(unit, encoding="utf-8")
    (workdir / "ConvloopRunner.java").write_text(generate_shim(bug), encoding="utf-8")
    try:
        proc = subprocess.run(
            [cfg.javac_bin, "-nowarn", "-encoding", "UTF-8", "-d", ".", f"{class_name}.java", "ConvloopRunner.java"],
            cwd=workdir,
            capture_output=True,
            timeout=JAVA_COMPILE_TIMEOUT_S,
        )
    except FileNotFoundError:
        return HarnessError(f"java compiler not found: {cfg.javac_bin}")
    except subprocess.TimeoutExpired:
        return CompileError(f"CompileError: javac did not finish within {JAVA_COMPILE_TIMEOUT_S} s")
    if proc.returncode != 0:
        out = (proc.stderr or proc.stdout).decode("utf-8", "replace")
        if "ConvloopRunner.java" in out and f"{class_name}.java" not in out:
            return HarnessError(f"runner failed to compile: {out.strip()[:500]}")
        first = next((ln for ln in out.splitlines() if "error" in ln), out.strip()[:300])
        return CompileError("CompileError: " + " ".join(first.split()))
    return [cfg.java_bin, "-cp", ".", "ConvloopRunner", class_name, "tests.txt", bug.entry_point]


_PREPARERS = {Language.PYTHON: _prepare_python, Language.JAVA: _prepare_java}


# -- running the shim -------------------------------------------------------------


@dataclass
class RunRecord:
    lines: list
    timed_out_at: Optional[int]  # last started test index (0 = before any test)
    returncode: Optional[int]
    stderr: str


def _reader(stream, sink: "queue.Queue"):
    for raw in iter(stream.readline, b""):
        sink.put(raw.decode("utf-8", "replace").rstrip("\r\n"))
    sink.put(None)


def _drain(stream, buf: list):
    for chunk in iter(lambda: stream.read(4096), b""):
        if sum(len(c) for c in buf) < _STDERR_KEEP * 4:
            buf.append(chunk)


def _kill(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def run_protocol(argv: list, cwd: Path, limit_ms: int, total: int) -> RunRecord:
    """Run the shim, enforcing ``limit_ms`` per test from each ``START`` line.

    Start-up (interpreter launch, loading the patch) gets one allowance of
    ``limit_ms`` as well, so the whole run is bounded by
    ``limit_ms * (total + 1)``.
    """
    proc = subprocess.Popen(
        argv,
        cwd=cwd,
        stdin=subprocess.DEVNULL,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        start_new_session=True,
    )
    lines: "queue.Queue" = queue.Queue()
    err_chunks: list = []
    threads = [
        threading.Thread(target=_reader, args=(proc.stdout, lines), daemon=True),
        threading.Thread(target=_drain, args=(proc.stderr, err_chunks), daemon=True),
    ]
    for t in threads:
        t.start()

    limit = limit_ms / 1000.0
    deadline = time.monotonic() + limit
    current = 0
    seen: list = []
    timed_out_at = None
    try:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                timed_out_at = current
                _kill(proc)
                break
            try:
                line = lines.get(timeout=remaining)
            except queue.Empty:
                continue
            if line is None:
                break
            seen.append(line)
            if line.startswith("START "):
                try:
                    current = int(line.split()[1])
                except (IndexError, ValueError):
                    pass
                deadline = time.monotonic() + limit
    finally:
        try:
            returncode = proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            _kill(proc)
            returncode = proc.wait()
        for t in threads:
            t.join(timeout=1)
        proc.stdout.close()
        proc.stderr.close()
    stderr = b"".join(err_chunks).decode("utf-8", "replace")[-_STDERR_KEEP:]
    return RunRecord(seen, timed_out_at, returncode, stderr)


_LINE = re.compile(r"(START|OK|VAL|ERR) (\d+)(?: (.*))?$")


def classify(bug: BugInstance, record: RunRecord, cfg: RepairConfig) -> ValidationOutcome:
    """Turn a shim transcript into a ValidationOutcome.

    The earliest problem in test order decides the class: a wrong value at
    test 2 outranks an exception at test 5.
    """
    tests = bug.testcases
    total = len(tests)
    values: dict = {}
    error: Optional[tuple] = None
    done = False
    for line in record.lines:
        if line == "DONE":
            done = True
            continue
        m = _LINE.match(line)
        if m is None:
            return HarnessError(f"unparseable shim output: {line[:200]!r}")
        tag, idx, rest = m.group(1), int(m.group(2)), m.group(3) or ""
        if idx > total or (idx == 0 and tag != "ERR"):
            return HarnessError(f"shim reported unknown test index: {line[:200]!r}")
        if tag == "VAL":
            try:
                values[idx] = parse_literal(rest, allow_nonfinite=True)
            except LiteralError as exc:
                return HarnessError(f"unparseable value for test {idx}: {exc}")
        elif tag == "ERR":
            error = (idx, rest)

    if error is not None and error[0] == 0:
        return CompileError(error[1])

    passed = 0
    first_failure = None
    for i, case in enumerate(tests, start=1):
        if i in values:
            if values_equal(values[i], case.expected, cfg.float_tolerance):
                passed += 1
            elif first_failure is None:
                first_failure = (case, values[i])
            continue
        # first test without a value: this is where execution stopped
        if first_failure is not None:
            break
        if error is not None and error[0] == i:
            return RuntimeFailure(case, error[1])
        if record.timed_out_at is not None:
            return Timeout(tests[max(record.timed_out_at, 1) - 1], cfg.per_test_timeout_ms)
        if not record.lines and record.returncode not in (0, None):
            return HarnessError(f"runner exited with status {record.returncode}: {record.stderr.strip()[-500:]}")
        if done:
            return HarnessError(f"shim finished without a value for test {i}")
        status = record.returncode
        detail = record.stderr.strip().splitlines()[-1:] if record.stderr.strip() else []
        msg = f"ProcessExit: runner terminated with status {status} during the test"
        if detail:
            msg += f" ({detail[0][:200]})"
        return RuntimeFailure(case, msg)

    if first_failure is not None:
        case, actual = first_failure
        return TestFailure(case, actual, passed, total)
    if not done:
        return HarnessError("shim exited without reporting DONE")
    return Plausible(total)


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", text)[:40] or "bug"


def validate(bug: BugInstance, patch_source: str, cfg: RepairConfig) -> ValidationOutcome:
    """Run ``patch_source`` against every testcase of ``bug``.

    Raises UnsupportedLanguage for languages without a runner; environment
    problems (missing interpreter, broken shim output) come back as
    HarnessError rather than being blamed on the patch.
    """
    preparer = _PREPARERS.get(Language(bug.language))
    if preparer is None:
        raise UnsupportedLanguage(f"no runner for language {bug.language!r}")
    workdir = Path(tempfile.mkdtemp(prefix=f"convloop-{_safe_name(bug.id)}-"))
    try:
        (workdir / "tests.txt").write_text(serialize_tests(bug), encoding="utf-8")
        prepared = preparer(workdir, bug, patch_source, cfg)
        if not isinstance(prepared, list):
            return prepared
        try:
            record = run_protocol(prepared, workdir, cfg.per_test_timeout_ms, len(bug.testcases))
        except FileNotFoundError:
            return HarnessError(f"runner not found: {prepared[0]}")
        except PermissionError as exc:
            return HarnessError(f"cannot execute runner {prepared[0]}: {exc}")
        return classify(bug, record, cfg)
    finally:
        if cfg.keep_workdirs:
            log.info("kept workdir %s", workdir)
        else:
            shutil.rmtree(workdir, ignore_errors=True)


class OutcomeCache:
    """Per-bug map from normalized patch text to its validation outcome."""

    def __init__(self) -> None:
        self._data: dict = {}
        self._lock = threading.Lock()

    def lookup(self, normalized: str) -> Optional[ValidationOutcome]:
        with self._lock:
            return self._data.get(normalized)

    def insert(self, normalized: str, outcome: ValidationOutcome) -> None:
        with self._lock:
            self._data.setdefault(normalized, outcome)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)
