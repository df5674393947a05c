"""Bug corpus: loading, health checks and QuixBugs conversion.

A bug lives in its own directory::

    bug.cfg      key=value manifest (id, language, entry_point, source, reference)
    buggy.src    buggy function
    fixed.src    reference patch
    tests.txt    one ``inputs -> expected`` line per testcase
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .harness import validate
from .literals import LiteralError, check_literal, format_literal, parse_arguments, parse_literal, split_arrow
from .model import (
    BugInstance,
    Language,
    Plausible,
    RepairConfig,
    RuntimeFailure,
    TestCase,
    TestFailure,
    Timeout,
    defines,
)
from .prompting import render_invocation

log = logging.getLogger(__name__)

MANIFEST = "bug.cfg"
REQUIRED_KEYS = ("id", "language", "entry_point", "source", "reference")


class CorpusError(Exception):
    pass


class ManifestMissing(CorpusError):
    def __init__(self, path):
        super().__init__(f"{path}: manifest {MANIFEST} not found")
        self.path = path


class ManifestInvalid(CorpusError):
    def __init__(self, path, field_name: str, reason: str):
        super().__init__(f"{path}: invalid field {field_name!r}: {reason}")
        self.path = path
        self.field = field_name


class SourceMissing(CorpusError):
    def __init__(self, path):
        super().__init__(f"{path}: source file not found")
        self.path = path


class TestcaseParseError(CorpusError):
    __test__ = False

    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


def data_root():
    return resources.files("convloop") / "data"


def fixtures_root() -> Path:
    """Directory holding the bundled fixture corpus."""
    return Path(str(data_root() / "fixtures"))


def scripts_root() -> Path:
    return Path(str(data_root() / "scripts"))


def quixbugs_exclusion_file() -> Path:
    return Path(str(data_root() / "quixbugs_excluded.txt"))


def read_manifest(path: Path) -> dict:
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestInvalid(path, f"line {lineno}", "expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def parse_tests(text: str, path="tests.txt") -> list[TestCase]:
    cases = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            lhs, rhs = split_arrow(line)
            inputs = parse_arguments(lhs)
            expected = parse_literal(rhs)
        except LiteralError as exc:
            raise TestcaseParseError(path, lineno, str(exc)) from None
        if cases and len(inputs) != len(cases[0].inputs):
            raise TestcaseParseError(path, lineno, f"expected {len(cases[0].inputs)} inputs, got {len(inputs)}")
        cases.append(TestCase(f"t{len(cases) + 1}", tuple(inputs), expected))
    return cases


def load_bug(dir_path) -> BugInstance:
    root = Path(dir_path)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise ManifestMissing(manifest_path)
    manifest = read_manifest(manifest_path)
    for key in REQUIRED_KEYS:
        if not manifest.get(key):
            raise ManifestInvalid(manifest_path, key, "missing")
    try:
        language = Language(manifest["language"])
    except ValueError:
        raise ManifestInvalid(manifest_path, "language", f"unsupported {manifest['language']!r}") from None

    sources = {}
    for key in ("source", "reference"):
        path = root / manifest[key]
        if not path.is_file():
            raise SourceMissing(path)
        sources[key] = path.read_text(encoding="utf-8")
    entry = manifest["entry_point"]
    for key, src in sources.items():
        if not defines(src, language, entry):
            raise ManifestInvalid(manifest_path, "entry_point", f"{entry!r} is not defined in the {key} file")

    tests_path = root / manifest.get("tests", "tests.txt")
    if not tests_path.is_file():
        raise SourceMissing(tests_path)
    cases = parse_tests(tests_path.read_text(encoding="utf-8"), tests_path)
    if not cases:
        raise TestcaseParseError(tests_path, 0, "no testcases")
    return BugInstance(
        id=manifest["id"],
        language=language,
        buggy_source=sources["source"],
        entry_point=entry,
        testcases=tuple(cases),
        reference_patch=sources["reference"],
    )


def read_id_list(path) -> list[str]:
    ids = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            ids.append(line)
    return ids


def load_suite(
    root,
    include: Optional[Iterable[str]] = None,
    exclude: Optional[Iterable[str]] = None,
    skip_broken: bool = False,
) -> list[BugInstance]:
    """Load every bug directory below ``root``, sorted by bug id."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"{root}: corpus root is not a directory")
    bugs = {}
    for child in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            bug = load_bug(child)
        except CorpusError as exc:
            if skip_broken:
                log.warning("skipping %s: %s", child.name, exc)
                continue
            raise CorpusError(f"bug {child.name}: {exc}") from exc
        if bug.id in bugs:
            raise CorpusError(f"duplicate bug id {bug.id!r} in {child}")
        bugs[bug.id] = bug

    selected = sorted(bugs)
    if include is not None:
        wanted = list(dict.fromkeys(include))
        missing = [b for b in wanted if b not in bugs]
        if missing:
            raise CorpusError(f"unknown bug id(s): {', '.join(missing)}")
        selected = sorted(wanted)
    if exclude is not None:
        dropped = set(exclude)
        selected = [b for b in selected if b not in dropped]
    return [bugs[b] for b in selected]


# -- doctor ------------------------------------------------------------------------


@dataclass
class HealthReport:
    bug_id: str
    reference_outcome: object
    buggy_outcome: object
    failing_tests: list = field(default_factory=list)

    @property
    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.reference_outcome, Plausible):
            out.append("reference")
        if isinstance(self.buggy_outcome, Plausible):
            out.append("not-a-bug")
        return out

    @property
    def healthy(self) -> bool:
        return not self.problems

    @property
    def status(self) -> str:
        if self.healthy:
            return "HEALTHY"
        return "UNHEALTHY(" + ",".join(self.problems) + ")"

    def line(self) -> str:
        detail = f"buggy: {self.buggy_outcome.kind}"
        if self.failing_tests:
            detail += " failing " + " ".join(self.failing_tests)
        if not isinstance(self.reference_outcome, Plausible):
            detail += f"; reference: {self.reference_outcome.kind}"
            msg = getattr(self.reference_outcome, "message", None)
            if msg:
                detail += f" ({msg})"
        return f"{self.bug_id}: {self.status} [{detail}]"


def _failing_tests(bug: BugInstance, cfg: RepairConfig) -> list[str]:
    """Which testcases the buggy source fails, each judged in isolation."""
    failing = []
    for case in bug.testcases:
        single = BugInstance(bug.id, bug.language, bug.buggy_source, bug.entry_point, (case,), bug.reference_patch)
        if not isinstance(validate(single, bug.buggy_source, cfg), Plausible):
            failing.append(render_invocation(bug.entry_point, case.inputs))
    return failing


def failing_test(outcome) -> Optional[TestCase]:
    """The testcase an outcome is attributed to, if any."""
    if isinstance(outcome, TestFailure):
        return outcome.first_failing
    if isinstance(outcome, (RuntimeFailure, Timeout)):
        return outcome.test
    return None


def doctor(bug: BugInstance, cfg: RepairConfig, per_test: bool = False) -> HealthReport:
    """Check that the reference passes and the buggy source does not.

    By default only the first failing testcase is reported; ``per_test``
    runs each testcase on its own to list every failure (slow when the
    buggy code hangs).  Never raises for unhealthy bugs.
    """
    reference = validate(bug, bug.reference_patch, cfg)
    buggy = validate(bug, bug.buggy_source, cfg)
    failing: list = []
    if per_test and not isinstance(buggy, Plausible):
        failing = _failing_tests(bug, cfg)
    elif failing_test(buggy) is not None:
        failing = [render_invocation(bug.entry_point, failing_test(buggy).inputs)]
    return HealthReport(bug.id, reference, buggy, failing)


# -- QuixBugs import ---------------------------------------------------------------


@dataclass
class ImportReport:
    imported: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)  # name -> reason


def _quixbugs_testcases(path: Path) -> list[str]:
    lines = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        data = json.loads(raw)
        inputs, expected = data
        if not isinstance(inputs, list):
            inputs = [inputs]
        for value in [*inputs, expected]:
            check_literal(value)
        args = ", ".join(format_literal(v) for v in inputs)
        lines.append(f"{args} -> {format_literal(expected)}")
    return lines


def write_bug(dst: Path, bug_id: str, language: Language, entry: str, buggy: str, fixed: str, tests: list[str]):
    dst.mkdir(parents=True, exist_ok=True)
    (dst / MANIFEST).write_text(
        f"id={bug_id}\nlanguage={language.value}\nentry_point={entry}\nsource=buggy.src\nreference=fixed.src\n",
        encoding="utf-8",
    )
    (dst / "buggy.src").write_text(buggy, encoding="utf-8")
    (dst / "fixed.src").write_text(fixed, encoding="utf-8")
    (dst / "tests.txt").write_text("\n".join(tests) + "\n", encoding="utf-8")


def import_quixbugs(src, dst, language: Language = Language.PYTHON) -> ImportReport:
    """Convert a QuixBugs checkout into the canonical corpus layout.

    Programs whose testcases are not in ``json_testcases/`` (the graph and
    linked-list bugs) or contain values outside the literal grammar are
    skipped and reported.  The exclusion list is copied to
    ``dst/quixbugs_excluded.txt``; apply it with ``load_suite(exclude=...)``.
    """
    src, dst = Path(src), Path(dst)
    language = Language(language)
    if language is Language.PYTHON:
        buggy_dir, fixed_dir, suffix = src / "python_programs", src / "correct_python_programs", ".py"
    else:
        buggy_dir, fixed_dir, suffix = src / "java_programs", src / "correct_java_programs", ".java"
    if not buggy_dir.is_dir():
        raise CorpusError(f"{src}: not a QuixBugs checkout ({buggy_dir.name}/ missing)")
    report = ImportReport()
    dst.mkdir(parents=True, exist_ok=True)
    for path in sorted(buggy_dir.glob("*" + suffix)):
        stem = path.stem
        name = stem.lower()
        if name.endswith("_test") or name in ("node", "weightededge"):
            continue
        fixed = fixed_dir / path.name
        tests_file = src / "json_testcases" / f"{name}.json"
        if not fixed.is_file():
            report.skipped[name] = "no reference program"
            continue
        if not tests_file.is_file():
            report.skipped[name] = "no json testcases"
            continue
        try:
            tests = _quixbugs_testcases(tests_file)
        except (ValueError, LiteralError) as exc:
            report.skipped[name] = f"testcases not representable: {exc}"
            continue
        buggy_src = path.read_text(encoding="utf-8")
        fixed_src = fixed.read_text(encoding="utf-8")
        if not (defines(buggy_src, language, name) and defines(fixed_src, language, name)):
            report.skipped[name] = f"entry point {name!r} not found"
            continue
        write_bug(dst / name, name, language, name, buggy_src, fixed_src, tests)
        report.imported.append(name)
    (dst / "quixbugs_excluded.txt").write_text(
        quixbugs_exclusion_file().read_text(encoding="utf-8"), encoding="utf-8"
    )
    return report
