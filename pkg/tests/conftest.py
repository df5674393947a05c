import os
import shutil
from pathlib import Path

import pytest

from convloop.corpus import fixtures_root, load_bug, scripts_root
from convloop.model import RepairConfig

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden"


@pytest.fixture(scope="session")
def corpus_root() -> Path:
    return fixtures_root()


@pytest.fixture(scope="session")
def sieve(corpus_root):
    return load_bug(corpus_root / "sieve")


@pytest.fixture(scope="session")
def bitcount(corpus_root):
    return load_bug(corpus_root / "bitcount")


@pytest.fixture(scope="session")
def sieve_script() -> Path:
    return scripts_root() / "sieve_figure1.script"


@pytest.fixture
def fast_cfg() -> RepairConfig:
    return RepairConfig(per_test_timeout_ms=1000)


@pytest.fixture
def corpus_copy(tmp_path, corpus_root):
    dst = tmp_path / "corpus"
    shutil.copytree(corpus_root, dst)
    return dst


def read_golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")


def check_golden(name: str, actual: str) -> None:
    """Compare with a pinned file; CONVLOOP_UPDATE_GOLDEN=1 rewrites it."""
    path = GOLDEN / name
    if os.environ.get("CONVLOOP_UPDATE_GOLDEN") == "1":
        path.write_text(actual, encoding="utf-8")
    assert actual == path.read_text(encoding="utf-8"), f"golden mismatch: {name}"


requires_javac = pytest.mark.skipif(shutil.which("javac") is None, reason="no JDK (javac) on PATH")


# acceptance criteria report ------------------------------------------------------

ACCEPTANCE_LINES: list = []


def acceptance(name: str, ok: bool, detail: str = "") -> None:
    """Record one criterion's verdict, then fail the calling test if needed."""
    line = f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
