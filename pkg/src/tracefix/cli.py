"""Command-line entry point: validate, rootcause, compare, report.

Exit codes: 0 success, 1 operational error, 2 policy failure
(``--fail-on-critical`` with at least one Critical violation).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, EngineConfig, load_config
from .engine import (
    EngineError,
    compare_traces,
    diagnose_failed,
    has_critical,
    make_judge,
    rootcause_findings,
    rootcause_raw,
    source_name,
    validate_traces,
)
from .reporting import ReportDocument, ReportInvalid, load_json_report, render_html_dashboard, render_json_report
from .rootcause import BudgetTooSmall
from .trace import TraceError, TraceSet, parse_trace_file

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_POLICY = 2

logger = logging.getLogger("tracefix")


class CliError(Exception):
    pass


def _common(p: argparse.ArgumentParser, *, judge: bool = True):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", help="where to write report.json")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if judge:
        p.add_argument("--judge", choices=("live", "mock", "off"), help="judge backend (default from config: off)")
        p.add_argument("--mock-script", help="JSONL script for --judge mock")
        p.add_argument("--tools", help="comma list of judge tool kinds, 'all' or 'none'")
        p.add_argument("--budget", type=int, help="findings digest budget in characters")
        ingest = p.add_mutually_exclusive_group()
        ingest.add_argument("--strict-ingest", dest="strict_ingest", action="store_const", const=True)
        ingest.add_argument("--lenient-ingest", dest="strict_ingest", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracefix", description="Diagnose multi-agent LLM traces.")
    parser.add_argument("--version", action="version", version=f"tracefix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="run the detectors over a trace file")
    p.add_argument("--traces", required=True)
    p.add_argument("--html", help="also write the dashboard here")
    p.add_argument("--fail-on-critical", action="store_true", help="exit 2 when any Critical violation is found")
    _common(p)

    p = sub.add_parser("rootcause", help="root-cause analysis over raw calls or over a report's findings")
    p.add_argument("--mode", choices=("raw", "findings"), required=True)
    p.add_argument("--traces", help="trace file (mode raw)")
    p.add_argument("--report", help="report.json to read findings from and append to")
    _common(p)

    p = sub.add_parser("compare", help="diagnose failed trajectories, optionally against successful ones")
    p.add_argument("--success", help="trace file with the successful trajectory")
    p.add_argument("--failed", required=True, help="trace file with the failed trajectory")
    p.add_argument("--report", help="report.json to append to (its findings feed single-trace diagnosis)")
    _common(p)

    p = sub.add_parser("report", help="render the HTML dashboard from a report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--html", help="output path (default from config: dashboard.html)")
    _common(p, judge=False)
    return parser


def _config(args) -> EngineConfig:
    overrides = {
        "judge.mode": getattr(args, "judge", None),
        "judge.mock_script": getattr(args, "mock_script", None),
        "tools.enabled": getattr(args, "tools", None),
        "digest.budget": None if getattr(args, "budget", None) is None else str(args.budget),
        "output.report": args.out,
        "output.html": getattr(args, "html", None),
    }
    strict = getattr(args, "strict_ingest", None)
    if strict is not None:
        overrides["ingest.strict"] = "true" if strict else "false"
    return load_config(args.config, overrides={k: v for k, v in overrides.items() if v is not None})


def _read_bytes(path: str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc.strerror}") from None


def _load_traces(path: str, cfg: EngineConfig) -> TraceSet:
    data = _read_bytes(path, "trace file")
    try:
        ts = parse_trace_file(data, strict=cfg["ingest.strict"])
    except TraceError as exc:
        raise CliError(f"{path}: {exc}") from None
    for s in ts.skipped:
        logger.warning("%s: skipped line %d: %s", path, s.line_no, s.reason)
    return ts


def _load_report(path: str) -> ReportDocument:
    try:
        return load_json_report(_read_bytes(path, "report"))
    except ReportInvalid as exc:
        raise CliError(f"{path}: {exc}") from None


def _need_judge(cfg: EngineConfig, what: str):
    judge = make_judge(cfg)
    if judge is None:
        raise CliError(f"{what} needs a judge; pass --judge live or --judge mock")
    return judge


def _write(outputs: list[tuple[str, bytes]]):
    # Single writer, after all work is done.
    for path, data in outputs:
        try:
            Path(path).write_bytes(data)
        except OSError as exc:
            raise CliError(f"cannot write {path}: {exc.strerror}") from None
        logger.info("wrote %s", path)


def cmd_validate(args, cfg: EngineConfig) -> int:
    ts = _load_traces(args.traces, cfg)
    judge = make_judge(cfg)
    doc = validate_traces(ts, cfg, judge, sources=[source_name(args.traces)])
    outputs = [(cfg["output.report"], render_json_report(doc))]
    if args.html:
        outputs.append((args.html, render_html_dashboard(doc, cfg.rank_weights, cfg["bottleneck.min_evaluated"])))
    _write(outputs)
    totals = doc.severity_totals
    breakdown = ", ".join(f"{c.value} {totals[c]}" for c in sorted(totals, reverse=True))
    print(f"{len(ts.calls)} calls, {sum(totals.values())} violations: {breakdown}")
    if args.fail_on_critical and has_critical(doc):
        return EXIT_POLICY
    return EXIT_OK


def _base_doc(args, cfg: EngineConfig) -> ReportDocument:
    if args.report and Path(args.report).exists():
        return _load_report(args.report)
    return ReportDocument()


def _out_path(args, cfg: EngineConfig) -> str:
    if args.out:
        return args.out
    return args.report or cfg["output.report"]


def cmd_rootcause(args, cfg: EngineConfig) -> int:
    if args.mode == "raw":
        if not args.traces:
            raise CliError("rootcause --mode raw needs --traces")
        ts = _load_traces(args.traces, cfg)
        judge = _need_judge(cfg, "rootcause")
        doc = _base_doc(args, cfg)
        reports, events = rootcause_raw(ts, cfg, judge)
    else:
        if not args.report:
            raise CliError("rootcause --mode findings needs --report")
        if not Path(args.report).exists():
            raise CliError(f"report {args.report} does not exist")
        doc = _load_report(args.report)
        judge = _need_judge(cfg, "rootcause")
        reports, events = rootcause_findings(doc.findings, cfg, judge)
    doc = doc.with_additions(root_cause_reports=reports, diagnostics=events)
    _write([(_out_path(args, cfg), render_json_report(doc))])
    for r in reports:
        print(f"[{r.criticality.value}] {r.root_cause or '(no root cause)'}")
    return EXIT_OK


def cmd_compare(args, cfg: EngineConfig) -> int:
    failed = _load_traces(args.failed, cfg)
    if not failed.calls:
        raise CliError(f"{args.failed}: trajectory is empty")
    doc = _base_doc(args, cfg)
    if args.success:
        success = _load_traces(args.success, cfg)
        if not success.calls:
            raise CliError(f"{args.success}: trajectory is empty")
        judge = _need_judge(cfg, "compare")
        reports, events = compare_traces(success, failed, cfg, judge)
    else:
        judge = _need_judge(cfg, "compare")
        findings = doc.findings
        if not findings:
            findings = validate_traces(failed, cfg, None).findings
        reports, events = diagnose_failed(failed, findings, cfg, judge)
    doc = doc.with_additions(diagnosis_reports=reports, diagnostics=events)
    _write([(_out_path(args, cfg), render_json_report(doc))])
    for r in reports:
        loc = r.failure_location
        print(f"{r.task_id}: failure at {loc.agent or '?'} ({loc.call_id or '?'}): {r.root_cause or '(none)'}")
    return EXIT_OK


def cmd_report(args, cfg: EngineConfig) -> int:
    doc = _load_report(args.report)
    html_path = args.html or cfg["output.html"]
    _write([(html_path, render_html_dashboard(doc, cfg.rank_weights, cfg["bottleneck.min_evaluated"]))])
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "rootcause": cmd_rootcause, "compare": cmd_compare, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are operational here.
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (CliError, ConfigError, EngineError, BudgetTooSmall, ReportInvalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except Exception as exc:  # keep the documented exit codes even on bugs
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
