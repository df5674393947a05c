"""Command-line interface: ``convloop run|sweep|doctor|import-quixbugs``."""

from __future__ import annotations

import argparse
import csv
import logging
import shlex
import sys
from pathlib import Path
from typing import Optional, Sequence

from .backends import CommandBackend, HttpBackend, ScriptParseError, load_script
from .corpus import (
    CorpusError,
    doctor,
    fixtures_root,
    import_quixbugs,
    load_suite,
    read_id_list,
    scripts_root,
)
from .model import FeedbackStyle, HarnessError, Language, RepairConfig
from .orchestrator import repair_suite
from .reporting import (
    CSV_COLUMNS,
    REPORT_VERSION,
    csv_rows,
    dumps_report,
    emit_report,
    load_labels,
    render_transcript,
    summarize,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HARNESS = 3

log = logging.getLogger("convloop")


class ConfigError(Exception):
    pass


def _corpus_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", type=Path, default=None, help="corpus root (default: bundled fixtures)")
    p.add_argument("--bug", action="append", dest="bugs", metavar="ID", help="only this bug (repeatable)")
    p.add_argument("--exclude", action="append", default=[], metavar="ID", help="skip this bug (repeatable)")
    p.add_argument("--exclude-file", type=Path, help="file listing bug ids to skip, one per line")
    p.add_argument("--skip-broken", action="store_true", help="warn about unloadable bugs instead of failing")


def _runner_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timeout-ms", type=int, default=5000, help="per-test wall-clock limit")
    p.add_argument("--float-tolerance", type=float, default=1e-6)
    p.add_argument("--python-bin", default="python3")
    p.add_argument("--javac-bin", default="javac")
    p.add_argument("--java-bin", default="java")
    p.add_argument("--keep-workdirs", action="store_true", help="keep validation workspaces for debugging")


def _repair_options(p: argparse.ArgumentParser) -> None:
    _corpus_options(p)
    _runner_options(p)
    p.add_argument("--backend", choices=("http", "cmd", "script"), default="script")
    p.add_argument("--endpoint", help="OpenAI-compatible completions or chat-completions URL")
    p.add_argument("--model", help="model name sent to the HTTP endpoint")
    p.add_argument("--api", choices=("chat", "completion"), help="HTTP dialect (default: inferred from URL)")
    p.add_argument("--command", help="generator command for --backend cmd (prompt on stdin)")
    p.add_argument("--script", type=Path, help="script file, or directory of <bug_id>.script files")
    p.add_argument("--request-timeout", type=float, default=120.0, help="seconds per generation request")
    p.add_argument("--retries", type=int, default=3, help="HTTP retries on network errors")
    p.add_argument("--style", choices=[s.value for s in FeedbackStyle], default="functional")
    p.add_argument("--max-chain-length", type=int, default=3)
    p.add_argument("--budget", type=int, default=50, help="model samples per bug")
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--token-budget", type=int, default=2048, help="prompt size limit in estimated tokens")
    p.add_argument("--max-tokens", type=int, default=512, help="generation length limit")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--labels", type=Path, help="labels.txt with human-approved patch hashes")
    p.add_argument("--report", type=Path, help="write the JSON report here")
    p.add_argument("--csv", type=Path, help="write the per-bug CSV here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convloop", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    run = sub.add_parser("run", help="repair bugs with the conversational loop")
    _repair_options(run)
    run.add_argument("--transcripts", type=Path, help="directory for per-bug conversation transcripts")

    sweep = sub.add_parser("sweep", help="repeat a run for several maximum chain lengths")
    _repair_options(sweep)
    sweep.add_argument("--chain-lengths", default="1,2,3,4,5,6", help="e.g. 1,2,3 or 1..6")

    doc = sub.add_parser("doctor", help="check that every bug is a real, fixable bug")
    _corpus_options(doc)
    _runner_options(doc)
    doc.add_argument("--per-test", action="store_true", help="list every failing testcase (slower)")
    doc.add_argument("--strict", action="store_true", help="exit 1 when any bug is unhealthy")

    imp = sub.add_parser("import-quixbugs", help="convert a QuixBugs checkout into a corpus")
    imp.add_argument("src", type=Path)
    imp.add_argument("dst", type=Path)
    imp.add_argument("--language", choices=[l.value for l in Language], default="python")
    return parser


def parse_chain_lengths(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        values = list(range(int(lo), int(hi) + 1))
    else:
        values = [int(v) for v in text.split(",") if v.strip()]
    if not values or min(values) < 1:
        raise ValueError(f"invalid chain lengths {text!r}")
    return values


def _config(args, max_chain_length: Optional[int] = None) -> RepairConfig:
    return RepairConfig(
        max_chain_length=max_chain_length or args.max_chain_length,
        sample_budget=args.budget,
        feedback_style=FeedbackStyle(args.style),
        top_p=args.top_p,
        temperature=args.temperature,
        per_test_timeout_ms=args.timeout_ms,
        prompt_token_budget=args.token_budget,
        max_generation_tokens=args.max_tokens,
        float_tolerance=args.float_tolerance,
        python_bin=args.python_bin,
        javac_bin=args.javac_bin,
        java_bin=args.java_bin,
        keep_workdirs=args.keep_workdirs,
    )


def _runner_config(args) -> RepairConfig:
    return RepairConfig(
        per_test_timeout_ms=args.timeout_ms,
        float_tolerance=args.float_tolerance,
        python_bin=args.python_bin,
        javac_bin=args.javac_bin,
        java_bin=args.java_bin,
        keep_workdirs=args.keep_workdirs,
    )


def _load_bugs(args):
    exclude = list(args.exclude)
    if args.exclude_file:
        exclude += read_id_list(args.exclude_file)
    root = args.corpus if args.corpus is not None else fixtures_root()
    return load_suite(root, include=args.bugs, exclude=exclude or None, skip_broken=args.skip_broken)


def script_path_for(root: Path, bug_id: str) -> Path:
    if root.is_file():
        return root
    exact = root / f"{bug_id}.script"
    if exact.is_file():
        return exact
    matches = sorted(root.glob(f"{bug_id}_*.script"))
    if len(matches) == 1:
        return matches[0]
    raise ConfigError(f"no script for bug {bug_id!r} in {root}")


def make_backend(args, bugs):
    """Return a backend, or a per-bug backend factory for scripted replay."""
    if args.backend == "script":
        root = args.script if args.script is not None else scripts_root()
        if not root.exists():
            raise ConfigError(f"script path {root} does not exist")
        paths = {b.id: script_path_for(root, b.id) for b in bugs}
        for path in set(paths.values()):
            load_script(path)  # surface parse errors before any repair starts
        return lambda bug: load_script(paths[bug.id])
    if args.backend == "cmd":
        if not args.command:
            raise ConfigError("--backend cmd requires --command")
        return CommandBackend(shlex.split(args.command), timeout_s=args.request_timeout)
    if not args.endpoint or not args.model:
        raise ConfigError("--backend http requires --endpoint and --model")
    return HttpBackend(
        args.endpoint, args.model, api=args.api, timeout_s=args.request_timeout, max_retries=args.retries
    )


def _print_summary(summary, out=None, prefix: str = "") -> None:
    out = out or sys.stdout
    for row in summary.per_bug:
        status = "plausible" if row.plausible else "unfixed"
        if row.failure:
            status = row.failure.split(":", 1)[0]
        tries = "-" if row.tries is None else row.tries
        exact = "" if row.correct_exact is None else (" exact" if row.correct_exact else "")
        print(f"{prefix}{row.bug_id:<24} {status:<14} tries={tries:<4} chains={row.chains}{exact}", file=out)
    mean = "-" if summary.mean_tries_over_plausible is None else f"{summary.mean_tries_over_plausible:g}"
    print(
        f"{prefix}plausible {summary.n_plausible}/{summary.n_bugs}, "
        f"correct(exact) {summary.n_correct_exact}, mean tries {mean}",
        file=out,
    )


def _harness_failed(results) -> bool:
    return any(r.failure and r.failure.startswith("HarnessError") for r in results)


def cmd_run(args) -> int:
    bugs = _load_bugs(args)
    cfg = _config(args)
    backend = make_backend(args, bugs)
    labels = load_labels(args.labels) if args.labels else None
    results = repair_suite(bugs, cfg, backend, parallelism=args.parallelism)
    summary = summarize(results, labels)
    _print_summary(summary)
    if args.report:
        emit_report(summary, results, "json", args.report, config=cfg.to_dict())
    if args.csv:
        emit_report(summary, results, "csv", args.csv)
    if args.transcripts:
        args.transcripts.mkdir(parents=True, exist_ok=True)
        for r in results:
            (args.transcripts / f"{r.bug_id}.txt").write_text(render_transcript(r), encoding="utf-8")
    return EXIT_HARNESS if _harness_failed(results) else EXIT_OK


def cmd_sweep(args) -> int:
    lengths = parse_chain_lengths(args.chain_lengths)
    bugs = _load_bugs(args)
    labels = load_labels(args.labels) if args.labels else None
    settings = []
    harness_failed = False
    for length in lengths:
        cfg = _config(args, max_chain_length=length)
        results = repair_suite(bugs, cfg, make_backend(args, bugs), parallelism=args.parallelism)
        summary = summarize(results, labels)
        harness_failed |= _harness_failed(results)
        mean = "-" if summary.mean_tries_over_plausible is None else f"{summary.mean_tries_over_plausible:g}"
        print(f"max_chain_length={length}: plausible {summary.n_plausible}/{summary.n_bugs}, mean tries {mean}")
        settings.append((length, cfg, summary, results))

    if args.report:
        data = {
            "version": REPORT_VERSION,
            "settings": [
                {
                    "max_chain_length": length,
                    "config": cfg.to_dict(),
                    "summary": summary.to_dict(),
                    "results": [r.to_dict() for r in results],
                }
                for length, cfg, summary, results in settings
            ],
        }
        args.report.write_text(dumps_report(data), encoding="utf-8")
    if args.csv:
        with args.csv.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["max_chain_length", *CSV_COLUMNS])
            for length, _, summary, _ in settings:
                for row in csv_rows(summary)[1:]:
                    writer.writerow([length, *row])
    return EXIT_HARNESS if harness_failed else EXIT_OK


def cmd_doctor(args) -> int:
    bugs = _load_bugs(args)
    cfg = _runner_config(args)
    unhealthy = harness = 0
    for bug in bugs:
        report = doctor(bug, cfg, per_test=args.per_test)
        print(report.line())
        unhealthy += not report.healthy
        harness += isinstance(report.reference_outcome, HarnessError) or isinstance(report.buggy_outcome, HarnessError)
    print(f"{len(bugs) - unhealthy}/{len(bugs)} healthy")
    if harness:
        return EXIT_HARNESS
    return 1 if args.strict and unhealthy else EXIT_OK


def cmd_import(args) -> int:
    report = import_quixbugs(args.src, args.dst, Language(args.language))
    for name, reason in sorted(report.skipped.items()):
        print(f"skipped {name}: {reason}")
    excluded = set(read_id_list(args.dst / "quixbugs_excluded.txt"))
    kept = [b for b in report.imported if b not in excluded]
    print(f"imported {len(report.imported)} bugs into {args.dst}; {len(kept)} after exclusions")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "doctor": cmd_doctor, "import-quixbugs": cmd_import}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.subcommand](args)
    except (ConfigError, CorpusError, ScriptParseError, ValueError) as exc:
        print(f"convloop: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"convloop: error: {exc}", file=sys.stderr)
        return EXIT_HARNESS


if __name__ == "__main__":
    sys.exit(main())
