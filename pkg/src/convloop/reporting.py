"""Metrics, correctness proxies and report files."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

from .model import BugInstance, CandidatePatch, normalize_patch

if TYPE_CHECKING:
    from .model import RepairResult

REPORT_VERSION = 1
CSV_COLUMNS = ("bug_id", "plausible", "correct_exact", "tries", "chains", "wall_ms")


def judge_correct_exact(plausible: CandidatePatch, bug: BugInstance) -> bool:
    """Normalized-text equality with the reference patch."""
    return normalize_patch(plausible.extracted_source, bug.language) == normalize_patch(
        bug.reference_patch, bug.language
    )


def patch_hash(normalized: str) -> str:
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


def load_labels(path) -> dict[str, set]:
    """Read ``labels.txt``: ``<bug_id> <sha256> [<sha256> ...]`` per line.

    Hashes are of normalized patch text and record patches a human judged
    correct.
    """
    labels: dict[str, set] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        parts = raw.split("#", 1)[0].split()
        if len(parts) >= 2:
            labels.setdefault(parts[0], set()).update(p.lower() for p in parts[1:])
    return labels


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


@dataclass(frozen=True)
class BugRow:
    bug_id: str
    plausible: bool
    correct_exact: Optional[bool]
    tries: Optional[int]
    chains: int
    samples_used: int
    validations: int
    wall_ms: int
    failure: Optional[str] = None
    correct_labeled: Optional[bool] = None


@dataclass(frozen=True)
class Summary:
    n_bugs: int
    n_plausible: int
    n_correct_exact: int
    mean_tries_over_plausible: Optional[float]
    per_bug: tuple = field(default_factory=tuple)
    n_correct_labeled: Optional[int] = None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["per_bug"] = [asdict(r) for r in self.per_bug]
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "Summary":
        rows = tuple(BugRow(**r) for r in data["per_bug"])
        return cls(
            n_bugs=data["n_bugs"],
            n_plausible=data["n_plausible"],
            n_correct_exact=data["n_correct_exact"],
            mean_tries_over_plausible=data["mean_tries_over_plausible"],
            per_bug=rows,
            n_correct_labeled=data.get("n_correct_labeled"),
        )


def summarize(results: Sequence["RepairResult"], labels: Optional[Mapping[str, set]] = None) -> Summary:
    rows = []
    for r in results:
        labeled = None
        if labels is not None and r.plausible_patch is not None:
            labeled = patch_hash(r.plausible_patch.normalized) in labels.get(r.bug_id, set())
        rows.append(
            BugRow(
                bug_id=r.bug_id,
                plausible=r.plausible,
                correct_exact=r.correct_exact,
                tries=r.tries,
                chains=len(r.chains),
                samples_used=r.samples_used,
                validations=r.validations,
                wall_ms=r.wall_clock_ms,
                failure=r.failure,
                correct_labeled=labeled,
            )
        )
    tries = [r.tries for r in results if r.tries is not None]
    return Summary(
        n_bugs=len(results),
        n_plausible=sum(r.plausible for r in results),
        n_correct_exact=sum(bool(r.correct_exact) for r in results),
        mean_tries_over_plausible=_sig6(sum(tries) / len(tries)) if tries else None,
        per_bug=tuple(rows),
        n_correct_labeled=None if labels is None else sum(bool(r.correct_labeled) for r in rows),
    )


def report_dict(summary: Summary, results: Sequence["RepairResult"], config: Optional[Mapping] = None) -> dict:
    return {
        "version": REPORT_VERSION,
        "config": dict(config) if config is not None else None,
        "summary": summary.to_dict(),
        "results": [r.to_dict() for r in results],
    }


def dumps_report(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def csv_rows(summary: Summary) -> list[list]:
    out = [list(CSV_COLUMNS)]
    for row in summary.per_bug:
        out.append(
            [
                row.bug_id,
                "yes" if row.plausible else "no",
                "" if row.correct_exact is None else ("yes" if row.correct_exact else "no"),
                "" if row.tries is None else row.tries,
                row.chains,
                row.wall_ms,
            ]
        )
    return out


def emit_report(
    summary: Summary,
    results: Sequence["RepairResult"],
    format: str,
    out_path,
    config: Optional[Mapping] = None,
) -> None:
    """Write a JSON (full, replayable) or CSV (one row per bug) report."""
    path = Path(out_path)
    try:
        if format == "json":
            path.write_text(dumps_report(report_dict(summary, results, config)), encoding="utf-8")
        elif format == "csv":
            with path.open("w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerows(csv_rows(summary))
        else:
            raise ValueError(f"unknown report format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc.strerror or exc}") from exc


TIMING_KEYS = frozenset({"wall_clock_ms", "wall_ms"})


def strip_timing(data):
    """Copy of a report structure with wall-clock fields removed."""
    if isinstance(data, dict):
        return {k: strip_timing(v) for k, v in data.items() if k not in TIMING_KEYS}
    if isinstance(data, list):
        return [strip_timing(v) for v in data]
    return data


def render_transcript(result: "RepairResult") -> str:
    """Human-readable dump of every chain of one repair run."""
    out = [f"# {result.bug_id}"]
    for chain in result.chains:
        out.append(f"\n## chain {chain.chain_index} ({chain.termination.value})")
        for turn in chain.turns:
            p = turn.patch.provenance
            cached = " [cached outcome]" if turn.reused_cached_outcome else ""
            out.append(f"\n### turn {p.turn_index} (sample {p.global_sample_index}): {turn.outcome.kind}{cached}")
            out.append("--- prompt ---")
            out.append(turn.prompt_sent.rstrip("\n"))
            out.append("--- model output ---")
            out.append(turn.patch.raw_model_output.rstrip("\n"))
    return "\n".join(out) + "\n"
