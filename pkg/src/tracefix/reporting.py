"""Frequency tables, outcome diffs, the JSON report and the HTML dashboard."""

from __future__ import annotations

import html
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import jsonschema

from .findings import DiagnosticEvent, Finding
from .rootcause import DiagnosisReport, RootCauseReport
from .taxonomy import ISSUE_ORDER, Criticality, IssueKind, severity_of

REPORT_FORMAT = "tracefix-report/1"

CellKey = tuple[str, str, IssueKind]  # (model_id, agent, issue)


class CountInconsistency(ValueError):
    pass


class ReportInvalid(ValueError):
    pass


# --- frequency table --------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    violations: int
    evaluated: int

    def __post_init__(self):
        if self.violations < 0 or self.evaluated < 0:
            raise CountInconsistency("counts must be non-negative")
        if self.violations > self.evaluated:
            raise CountInconsistency(f"{self.violations} violations exceed {self.evaluated} evaluated")

    @property
    def rate(self) -> float | None:
        return self.violations / self.evaluated if self.evaluated else None

    def __add__(self, other: "Cell") -> "Cell":
        return Cell(self.violations + other.violations, self.evaluated + other.evaluated)


def _cell_order(key: CellKey):
    model, agent, issue = key
    return (model, agent, ISSUE_ORDER[issue])


@dataclass(frozen=True)
class FrequencyTable:
    cells: Mapping[CellKey, Cell] = field(default_factory=dict)

    def __post_init__(self):
        ordered = {k: self.cells[k] for k in sorted(self.cells, key=_cell_order)}
        object.__setattr__(self, "cells", ordered)

    def _marginal(self, project) -> dict:
        out: dict = {}
        for key, cell in self.cells.items():
            k = project(key)
            out[k] = out[k] + cell if k in out else cell
        return out

    def by_issue(self) -> dict[IssueKind, Cell]:
        return self._marginal(lambda k: k[2])

    def by_agent(self) -> dict[str, Cell]:
        return self._marginal(lambda k: k[1])

    def by_agent_issue(self) -> dict[tuple[str, IssueKind], Cell]:
        """Cells pooled over models."""
        return self._marginal(lambda k: (k[1], k[2]))

    def by_model(self) -> dict[str, Cell]:
        return self._marginal(lambda k: k[0])

    def total(self) -> Cell:
        return sum(self.cells.values(), Cell(0, 0))

    def to_list(self) -> list[dict]:
        return [
            {"model_id": m, "agent": a, "issue": i.value, "violations": c.violations, "evaluated": c.evaluated}
            for (m, a, i), c in self.cells.items()
        ]

    @classmethod
    def from_list(cls, rows: Iterable[Mapping[str, Any]]) -> "FrequencyTable":
        cells = {}
        for r in rows:
            key = (r["model_id"], r["agent"], IssueKind(r["issue"]))
            if key in cells:
                raise ReportInvalid(f"duplicate frequency cell {key}")
            cells[key] = Cell(r["violations"], r["evaluated"])
        return cls(cells)


def aggregate_findings(findings: Iterable[Finding], evaluated: Mapping[CellKey, int]) -> FrequencyTable:
    """Count violations per (model, agent, issue) against evaluation counts.

    Every key in ``evaluated`` yields a cell, including those with no
    violations. A violation with no matching evaluation count is an error.
    """
    violations = Counter((f.model_id, f.agent, f.issue) for f in findings if f.violated)
    cells = {}
    for key in set(evaluated) | set(violations):
        n_eval = evaluated.get(key, 0)
        n_viol = violations.get(key, 0)
        if n_viol > n_eval:
            model, agent, issue = key
            raise CountInconsistency(
                f"{n_viol} violations of {IssueKind(issue).value} for agent {agent!r} (model {model!r}) "
                f"but only {n_eval} evaluated"
            )
        cells[(key[0], key[1], IssueKind(key[2]))] = Cell(n_viol, n_eval)
    return FrequencyTable(cells)


def severity_totals(findings: Iterable[Finding]) -> dict[Criticality, int]:
    totals = {c: 0 for c in Criticality}
    for f in findings:
        if f.violated:
            totals[severity_of(f.issue)] += 1
    return totals


# --- outcome diff -----------------------------------------------------------


@dataclass(frozen=True)
class OutcomeDiff:
    preserved: int
    improved: int
    regressed: int
    still_failing: int
    only_before: tuple[str, ...] = ()
    only_after: tuple[str, ...] = ()

    @property
    def common(self) -> int:
        return self.preserved + self.improved + self.regressed + self.still_failing

    def to_dict(self) -> dict:
        return {
            "preserved": self.preserved,
            "improved": self.improved,
            "regressed": self.regressed,
            "still_failing": self.still_failing,
            "uncomparable": {"only_before": list(self.only_before), "only_after": list(self.only_after)},
        }


def outcome_diff(before: Mapping[str, bool], after: Mapping[str, bool]) -> OutcomeDiff:
    buckets = Counter((before[t], after[t]) for t in before.keys() & after.keys())
    return OutcomeDiff(
        preserved=buckets[(True, True)],
        improved=buckets[(False, True)],
        regressed=buckets[(True, False)],
        still_failing=buckets[(False, False)],
        only_before=tuple(sorted(before.keys() - after.keys())),
        only_after=tuple(sorted(after.keys() - before.keys())),
    )


# --- report document ----------------------------------------------------------


@dataclass(frozen=True)
class ReportMeta:
    tool_version: str = ""
    config_hash: str = ""
    # Taken from the analyzed traces, never from the wall clock, so reruns
    # produce the same bytes.
    trace_first_timestamp: str | None = None
    trace_last_timestamp: str | None = None
    sources: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
            "timestamps": {"trace_first": self.trace_first_timestamp, "trace_last": self.trace_last_timestamp},
            "sources": list(self.sources),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReportMeta":
        ts = d.get("timestamps") or {}
        return cls(
            tool_version=d.get("tool_version", ""),
            config_hash=d.get("config_hash", ""),
            trace_first_timestamp=ts.get("trace_first"),
            trace_last_timestamp=ts.get("trace_last"),
            sources=tuple(d.get("sources", ())),
        )


@dataclass(frozen=True)
class ReportDocument:
    meta: ReportMeta = field(default_factory=ReportMeta)
    findings: tuple[Finding, ...] = ()
    frequency: FrequencyTable = field(default_factory=FrequencyTable)
    root_cause_reports: tuple[RootCauseReport, ...] = ()
    diagnosis_reports: tuple[DiagnosisReport, ...] = ()
    diagnostics: tuple[DiagnosticEvent, ...] = ()

    def __post_init__(self):
        for name in ("findings", "root_cause_reports", "diagnosis_reports", "diagnostics"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def severity_totals(self) -> dict[Criticality, int]:
        return severity_totals(self.findings)

    def with_additions(self, **extra) -> "ReportDocument":
        """A copy with tuples extended, e.g. ``root_cause_reports=[...]``."""
        return replace(self, **{name: getattr(self, name) + tuple(items) for name, items in extra.items()})

    def to_dict(self) -> dict:
        return {
            "meta": self.meta.to_dict(),
            "findings": [f.to_dict() for f in self.findings],
            "frequency": self.frequency.to_list(),
            "severity_totals": {c.value: n for c, n in self.severity_totals.items()},
            "root_cause_reports": [r.to_dict() for r in self.root_cause_reports],
            "diagnosis_reports": [r.to_dict() for r in self.diagnosis_reports],
            "diagnostics": [e.to_dict() for e in self.diagnostics],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReportDocument":
        try:
            jsonschema.validate(d, REPORT_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ReportInvalid(f"report does not match schema at {where}: {exc.message}") from None
        try:
            doc = cls(
                meta=ReportMeta.from_dict(d["meta"]),
                findings=tuple(Finding.from_dict(f) for f in d["findings"]),
                frequency=FrequencyTable.from_list(d["frequency"]),
                root_cause_reports=tuple(RootCauseReport.from_dict(r) for r in d["root_cause_reports"]),
                diagnosis_reports=tuple(DiagnosisReport.from_dict(r) for r in d["diagnosis_reports"]),
                diagnostics=tuple(DiagnosticEvent.from_dict(e) for e in d["diagnostics"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ReportInvalid(f"report content is invalid: {exc}") from None
        stored = d["severity_totals"]
        if {c.value: n for c, n in doc.severity_totals.items()} != stored:
            raise ReportInvalid("severity_totals do not match the findings")
        return doc


_STR = {"type": "string"}
_STR_OR_NULL = {"type": ["string", "null"]}
_STR_LIST = {"type": "array", "items": _STR}
_COUNT = {"type": "integer", "minimum": 0}
_ISSUE = {"enum": [i.value for i in IssueKind]}
_CRIT = {"enum": [c.value for c in Criticality]}


def _obj(required: dict, optional: dict | None = None) -> dict:
    props = dict(required)
    props.update(optional or {})
    return {"type": "object", "required": sorted(required), "properties": props, "additionalProperties": False}


REPORT_SCHEMA: dict = _obj(
    {
        "meta": _obj(
            {
                "format": {"const": REPORT_FORMAT},
                "tool_version": _STR,
                "config_hash": _STR,
                "timestamps": _obj({"trace_first": _STR_OR_NULL, "trace_last": _STR_OR_NULL}),
                "sources": _STR_LIST,
            }
        ),
        "findings": {
            "type": "array",
            "items": _obj(
                {
                    "call_id": _STR,
                    "agent": _STR,
                    "model_id": _STR,
                    "tool": _STR,
                    "issue": _ISSUE,
                    "violated": {"type": "boolean"},
                    "severity_score": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "reasoning": _STR_OR_NULL,
                    "recommendations": {**_STR_LIST, "maxItems": 3},
                    "detail": {"type": ["object", "null"]},
                    "evidence": {"type": "object"},
                }
            ),
        },
        "frequency": {
            "type": "array",
            "items": _obj({"model_id": _STR, "agent": _STR, "issue": _ISSUE, "violations": _COUNT, "evaluated": _COUNT}),
        },
        "severity_totals": _obj({c.value: _COUNT for c in Criticality}),
        "root_cause_reports": {
            "type": "array",
            "items": _obj(
                {
                    "analyzer": _STR,
                    "model_id": _STR,
                    "task_id": _STR,
                    "root_cause": _STR,
                    "affected_agents": _STR_LIST,
                    "criticality": _CRIT,
                    "remediation": _STR,
                    "evidence": _STR_LIST,
                }
            ),
        },
        "diagnosis_reports": {
            "type": "array",
            "items": _obj(
                {
                    "mode": {"enum": ["single", "compare"]},
                    "task_id": _STR,
                    "failed_model": _STR,
                    "success_model": _STR,
                    "failure_location": _obj({"agent": _STR, "call_id": _STR}),
                    "root_cause": _STR,
                    "recommendations": _STR_LIST,
                    "differences": {"type": ["array", "null"], "items": _STR},
                }
            ),
        },
        "diagnostics": {
            "type": "array",
            "items": _obj({"kind": _STR, "message": _STR, "call_id": _STR, "tool": _STR}),
        },
    }
)


def render_json_report(doc: ReportDocument) -> bytes:
    text = json.dumps(doc.to_dict(), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


def load_json_report(data: bytes) -> ReportDocument:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise ReportInvalid(f"report is not valid JSON: {exc}") from None
    return ReportDocument.from_dict(obj)


# --- dashboard ---------------------------------------------------------------


@dataclass(frozen=True)
class RankWeights:
    critical: int = 5
    moderate: int = 2
    minor: int = 1

    def __post_init__(self):
        if min(self.critical, self.moderate, self.minor) < 0:
            raise ValueError("rank weights must be non-negative")

    def of(self, level: Criticality) -> int:
        return {Criticality.CRITICAL: self.critical, Criticality.MODERATE: self.moderate, Criticality.MINOR: self.minor}[level]


@dataclass(frozen=True)
class AgentRank:
    agent: str
    score: int
    counts: Mapping[Criticality, int]


def rank_agents(findings: Iterable[Finding], weights: RankWeights = RankWeights()) -> list[AgentRank]:
    counts: dict[str, dict[Criticality, int]] = {}
    for f in findings:
        per = counts.setdefault(f.agent, {c: 0 for c in Criticality})
        if f.violated:
            per[severity_of(f.issue)] += 1
    ranks = [AgentRank(a, sum(weights.of(c) * n for c, n in per.items()), per) for a, per in counts.items()]
    return sorted(ranks, key=lambda r: (-r.score, -r.counts[Criticality.CRITICAL], r.agent))


@dataclass(frozen=True)
class Bottleneck:
    agent: str
    issue: IssueKind
    cell: Cell


def find_bottlenecks(table: FrequencyTable, min_evaluated: int = 5, top_fraction: float = 0.1) -> list[Bottleneck]:
    """Agent x issue cells (pooled over models) in the top decile of violation rate.

    Only cells with at least ``min_evaluated`` evaluations and a non-zero
    rate compete. Cells tied with the cut-off rate are all kept.
    """
    eligible = [
        Bottleneck(agent, issue, cell)
        for (agent, issue), cell in table.by_agent_issue().items()
        if cell.evaluated >= min_evaluated and cell.violations > 0
    ]
    if not eligible:
        return []
    eligible.sort(key=lambda b: (-b.cell.rate, -b.cell.violations, b.agent, ISSUE_ORDER[b.issue]))
    keep = max(1, math.ceil(len(eligible) * top_fraction))
    cutoff = eligible[keep - 1].cell.rate
    return [b for b in eligible if b.cell.rate >= cutoff]


def next_steps(doc: ReportDocument) -> list[tuple[RootCauseReport, str]]:
    seen = set()
    steps = []
    for r in doc.root_cause_reports:
        text = r.remediation.strip()
        if text and text not in seen:
            seen.add(text)
            steps.append((r, text))
    return steps


_CSS = """
body{font-family:system-ui,sans-serif;margin:2rem;color:#1d232a;background:#fafbfc}
h1{font-size:1.5rem}h2{font-size:1.15rem;border-bottom:1px solid #ccd3db;padding-bottom:.25rem}
table{border-collapse:collapse;margin:.5rem 0 1.5rem}
th,td{border:1px solid #ccd3db;padding:.3rem .6rem;text-align:left;vertical-align:top}
th{background:#eef1f4}
.bar{display:inline-block;height:.7rem;background:#c0392b;vertical-align:middle}
.bar.mod{background:#e67e22}.bar.min{background:#7f8c8d}
.empty{color:#6b7680;font-style:italic}
.meta{color:#6b7680;font-size:.85rem}
.crit-Critical{color:#c0392b;font-weight:600}.crit-Moderate{color:#b9770e}.crit-Minor{color:#566573}
"""


def _e(text: Any) -> str:
    return html.escape(str(text), quote=True)


def _section(sid: str, title: str, body: list[str]) -> list[str]:
    return [f'<section id="{sid}">', f"<h2>{_e(title)}</h2>", *body, "</section>"]


def _bottleneck_body(doc: ReportDocument, min_evaluated: int) -> list[str]:
    rows = find_bottlenecks(doc.frequency, min_evaluated)
    if not rows:
        return ['<p class="empty">No bottlenecks: no agent/issue cell with enough evaluations shows violations.</p>']
    out = [
        "<table>",
        "<tr><th>Agent</th><th>Issue</th><th>Severity</th><th>Violations</th><th>Evaluated</th><th>Rate</th></tr>",
    ]
    for b in rows:
        crit = severity_of(b.issue).value
        pct = f"{100 * b.cell.rate:.1f}%"
        width = round(100 * b.cell.rate)
        out.append(
            f"<tr><td>{_e(b.agent)}</td><td>{_e(b.issue.value)}</td><td class=\"crit-{crit}\">{crit}</td>"
            f"<td>{b.cell.violations}</td><td>{b.cell.evaluated}</td>"
            f'<td><span class="bar" style="width:{width}px"></span> {pct}</td></tr>'
        )
    out.append("</table>")
    return out


def _ranking_body(doc: ReportDocument, weights: RankWeights) -> list[str]:
    ranks = rank_agents(doc.findings, weights)
    if not ranks:
        return ['<p class="empty">No findings recorded.</p>']
    out = [
        f'<p class="meta">Score weights: Critical {weights.critical}, Moderate {weights.moderate}, Minor {weights.minor} per violation.</p>',
        "<table>",
        "<tr><th>#</th><th>Agent</th><th>Score</th><th>Critical</th><th>Moderate</th><th>Minor</th><th></th></tr>",
    ]
    for i, r in enumerate(ranks, start=1):
        c = r.counts
        bars = "".join(
            f'<span class="bar{cls}" style="width:{4 * weights.of(level) * c[level]}px"></span>'
            for level, cls in ((Criticality.CRITICAL, ""), (Criticality.MODERATE, " mod"), (Criticality.MINOR, " min"))
        )
        out.append(
            f"<tr><td>{i}</td><td>{_e(r.agent)}</td><td>{r.score}</td><td>{c[Criticality.CRITICAL]}</td>"
            f"<td>{c[Criticality.MODERATE]}</td><td>{c[Criticality.MINOR]}</td><td>{bars}</td></tr>"
        )
    out.append("</table>")
    return out


def _steps_body(doc: ReportDocument) -> list[str]:
    steps = next_steps(doc)
    if not steps:
        return ['<p class="empty">No root-cause remediations available.</p>']
    out = ["<ol>"]
    for r, text in steps:
        crit = r.criticality.value
        agents = ", ".join(r.affected_agents) or "n/a"
        out.append(
            f'<li><span class="crit-{crit}">[{crit}]</span> {_e(text)}'
            f'<br><span class="meta">Affected agents: {_e(agents)}</span></li>'
        )
    out.append("</ol>")
    return out


def render_html_dashboard(
    doc: ReportDocument, weights: RankWeights = RankWeights(), min_evaluated: int = 5
) -> bytes:
    """One self-contained page: bottlenecks, agent ranking, next steps."""
    totals = doc.severity_totals
    summary = ", ".join(f"{c.value} {totals[c]}" for c in sorted(Criticality, reverse=True))
    lines = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '<meta charset="utf-8">',
        "<title>Agent trace diagnostics</title>",
        f"<style>{_CSS.strip()}</style>",
        "</head>",
        "<body>",
        "<h1>Agent trace diagnostics</h1>",
        f'<p class="meta">Violations: {summary}. Findings recorded: {len(doc.findings)}. '
        f"Config {_e(doc.meta.config_hash[:12] or 'n/a')}, version {_e(doc.meta.tool_version or 'n/a')}.</p>",
        *_section("bottlenecks", "Workflow bottlenecks", _bottleneck_body(doc, min_evaluated)),
        *_section("agent-ranking", "Agents ranked by reliability issues", _ranking_body(doc, weights)),
        *_section("next-steps", "Next steps", _steps_body(doc)),
        "</body>",
        "</html>",
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")
