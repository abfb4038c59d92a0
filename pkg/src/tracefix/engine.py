"""Pipelines behind the CLI, usable as a library."""

from __future__ import annotations

from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .config import EngineConfig, api_key_from_env
from .findings import DiagnosticEvent, Finding
from .judge.client import HttpJudge, JudgeBackend, MockJudge, MockScript
from .judge.structured import JudgeUnavailable, UnparseableVerdict
from .judge.tools import run_judge_suite
from .reporting import ReportDocument, ReportMeta, aggregate_findings
from .rootcause import (
    DiagnosisReport,
    RootCauseReport,
    analyze_findings,
    analyze_raw_trace,
    diagnose_compare,
    diagnose_single,
    summarize_findings,
)
from .rules.suite import evaluated_rule_issues, run_rule_suite
from .taxonomy import Criticality, severity_of
from .trace import LLMCall, TraceSet, validate_trace_set


class EngineError(Exception):
    """Operational failure such as an empty trajectory or a missing judge."""


def make_judge(cfg: EngineConfig, mode: str | None = None, mock_script: str | None = None) -> JudgeBackend | None:
    mode = mode or cfg.judge_mode
    if mode == "off":
        return None
    if mode == "mock":
        path = mock_script or cfg["judge.mock_script"]
        if not path:
            raise EngineError("judge mode 'mock' needs a mock script (--mock-script or judge.mock_script)")
        try:
            return MockJudge(MockScript.load(path))
        except OSError as exc:
            raise EngineError(f"cannot read mock script {path}: {exc.strerror}") from None
        except ValueError as exc:
            raise EngineError(str(exc)) from None
    return HttpJudge(
        cfg["judge.endpoint"],
        api_key_from_env(),
        timeout_s=cfg["judge.timeout_s"],
        retries=cfg["judge.retries"],
        max_in_flight=cfg["judge.max_in_flight"],
        backoff_s=cfg["judge.backoff_s"],
    )


def _timestamps(calls: Iterable[LLMCall]) -> tuple[str | None, str | None]:
    stamps = sorted(c.timestamp for c in calls if c.timestamp)
    return (stamps[0], stamps[-1]) if stamps else (None, None)


def _ingest_events(ts: TraceSet) -> list[DiagnosticEvent]:
    events = [DiagnosticEvent("skipped-line", f"line {s.line_no}: {s.reason}") for s in ts.skipped]
    for v in validate_trace_set(ts):
        events.append(DiagnosticEvent(f"trace-{v.level}", str(v), v.ids[0] if v.ids else ""))
    return events


def _validate_call(call: LLMCall, cfg: EngineConfig, judge: JudgeBackend | None):
    rules = cfg.rule_params
    findings = run_rule_suite(call, rules)
    evaluated = list(evaluated_rule_issues(call, rules))
    events: list[DiagnosticEvent] = []
    if judge is not None and cfg.enabled_tools:
        judged, events = run_judge_suite(call, judge, cfg.enabled_tools, cfg.judge_params)
        findings.extend(judged)
        evaluated.extend(f.issue for f in judged)
    return findings, evaluated, events


def validate_traces(
    ts: TraceSet, cfg: EngineConfig, judge: JudgeBackend | None, *, sources: Sequence[str] = ()
) -> ReportDocument:
    """Run the rule suite (and the judge suite when a judge is given) on every call."""
    workers = max(1, min(cfg["workers"], len(ts.calls)))
    if judge is not None:
        # Mock backends serialize anyway; fanning out would only reorder script consumption.
        workers = min(workers, max(1, judge.max_in_flight))
    if workers == 1:
        results = [_validate_call(c, cfg, judge) for c in ts.calls]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _validate_call(c, cfg, judge), ts.calls))

    findings: list[Finding] = []
    evaluated: Counter = Counter()
    events = _ingest_events(ts)
    for call, (found, issues, evs) in zip(ts.calls, results):
        findings.extend(found)
        evaluated.update((call.model_id, call.agent, issue) for issue in issues)
        events.extend(evs)

    first, last = _timestamps(ts.calls)
    meta = ReportMeta(__version__, cfg.config_hash, first, last, tuple(sources))
    return ReportDocument(
        meta=meta,
        findings=tuple(findings),
        frequency=aggregate_findings(findings, evaluated),
        diagnostics=tuple(events),
    )


def has_critical(doc: ReportDocument) -> bool:
    return any(f.violated and severity_of(f.issue) is Criticality.CRITICAL for f in doc.findings)


def _describe(ts: TraceSet, task_id: str, model_id: str) -> str:
    for t in ts.tasks:
        if t.task_id == task_id and t.model_id == model_id and t.description:
            return t.description
    return ""


def _guard(events: list[DiagnosticEvent], what: str, fn):
    try:
        return fn()
    except (JudgeUnavailable, UnparseableVerdict) as exc:
        kind = "judge-unavailable" if isinstance(exc, JudgeUnavailable) else "unparseable-verdict"
        events.append(DiagnosticEvent(kind, f"{what}: {exc}", tool=what))
        return None


def rootcause_raw(ts: TraceSet, cfg: EngineConfig, judge: JudgeBackend) -> tuple[list[RootCauseReport], list[DiagnosticEvent]]:
    reports, events = [], []
    for (task_id, model_id), calls in sorted(ts.trajectories().items()):
        r = _guard(
            events,
            "RootCause:raw",
            lambda: analyze_raw_trace(
                calls, judge, cfg.judge_params, task_description=_describe(ts, task_id, model_id), events=events
            ),
        )
        if r is not None:
            reports.append(r)
    return reports, events


def rootcause_findings(
    findings: Sequence[Finding], cfg: EngineConfig, judge: JudgeBackend
) -> tuple[list[RootCauseReport], list[DiagnosticEvent]]:
    """One findings-level analysis per model, or a single one when no model is present."""
    by_model: dict[str, list[Finding]] = defaultdict(list)
    for f in findings:
        by_model[f.model_id].append(f)
    if not by_model:
        by_model[""] = []
    reports, events = [], []
    for model_id in sorted(by_model):
        digest = summarize_findings(by_model[model_id], cfg["digest.budget"], cfg["digest.k"])
        scope = f"model {model_id}" if model_id else "all findings"
        r = _guard(
            events,
            "RootCause:findings",
            lambda: analyze_findings(digest, judge, cfg.judge_params, scope=scope, model_id=model_id, events=events),
        )
        if r is not None:
            reports.append(r)
    return reports, events


def _failed_trajectories(ts: TraceSet) -> list[tuple[tuple[str, str], list[LLMCall]]]:
    outcome = {(t.task_id, t.model_id): t.succeeded for t in ts.tasks}
    trajs = sorted(ts.trajectories().items())
    # Without outcome labels every trajectory in a "failed" file counts as failed.
    return [(k, v) for k, v in trajs if outcome.get(k) is not True]


def compare_traces(
    success: TraceSet, failed: TraceSet, cfg: EngineConfig, judge: JudgeBackend
) -> tuple[list[DiagnosisReport], list[DiagnosticEvent]]:
    """Diagnose each failed trajectory against a successful run of the same task.

    When each file holds exactly one trajectory they are paired even if the
    task ids differ; matching semantics is the caller's responsibility.
    """
    ok = sorted(success.trajectories().items())
    bad = sorted(failed.trajectories().items())
    if not ok or not bad:
        raise EngineError("both the successful and the failed trace must contain at least one call")
    pairs = []
    if len(ok) == 1 and len(bad) == 1:
        pairs.append((ok[0], bad[0]))
    else:
        ok_by_task = {}
        for key, calls in ok:
            ok_by_task.setdefault(key[0], (key, calls))
        for key, calls in bad:
            if key[0] in ok_by_task:
                pairs.append((ok_by_task[key[0]], (key, calls)))
    if not pairs:
        raise EngineError("no task id appears in both the successful and the failed trace")

    reports, events = [], []
    for (s_key, s_calls), (f_key, f_calls) in pairs:
        desc = _describe(failed, *f_key) or _describe(success, *s_key)
        r = _guard(
            events,
            "Diagnose:compare",
            lambda: diagnose_compare(s_calls, f_calls, judge, cfg.judge_params, task_description=desc, events=events),
        )
        if r is not None:
            reports.append(r)
    return reports, events


def diagnose_failed(
    failed: TraceSet, findings: Sequence[Finding], cfg: EngineConfig, judge: JudgeBackend
) -> tuple[list[DiagnosisReport], list[DiagnosticEvent]]:
    trajs = _failed_trajectories(failed)
    if not trajs:
        raise EngineError("the failed trace contains no failed trajectory")
    reports, events = [], []
    for key, calls in trajs:
        desc = _describe(failed, *key)
        r = _guard(
            events,
            "Diagnose:single",
            lambda: diagnose_single(calls, findings, judge, cfg.judge_params, task_description=desc, events=events),
        )
        if r is not None:
            reports.append(r)
    return reports, events


def source_name(path: str | Path) -> str:
    # Basenames only: absolute paths would make reports differ between checkouts.
    return Path(path).name
