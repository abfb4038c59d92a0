"""Offline diagnostics for multi-agent LLM traces."""

__version__ = "0.1.0"

from .cascade import CascadeExhausted, CascadeReport, FieldSpec, SchemaSpec, Stage, parse_structured, repair_json
from .findings import DiagnosticEvent, Finding, MismatchEntry, MismatchReport, Relation
from .reporting import (
    CountInconsistency,
    FrequencyTable,
    OutcomeDiff,
    ReportDocument,
    aggregate_findings,
    outcome_diff,
    render_html_dashboard,
    render_json_report,
)
from .rootcause import (
    BudgetTooSmall,
    DiagnosisReport,
    FindingsDigest,
    RootCauseReport,
    analyze_findings,
    analyze_raw_trace,
    diagnose_compare,
    diagnose_single,
    pair_success_failure,
    summarize_findings,
)
from .taxonomy import Criticality, IssueKind, severity_of
from .trace import LLMCall, TaskRecord, TraceSet, parse_trace_file, serialize_trace_set, validate_trace_set

__all__ = [
    "BudgetTooSmall",
    "CascadeExhausted",
    "CascadeReport",
    "CountInconsistency",
    "Criticality",
    "DiagnosisReport",
    "DiagnosticEvent",
    "FieldSpec",
    "Finding",
    "FindingsDigest",
    "FrequencyTable",
    "IssueKind",
    "LLMCall",
    "MismatchEntry",
    "MismatchReport",
    "OutcomeDiff",
    "Relation",
    "ReportDocument",
    "RootCauseReport",
    "SchemaSpec",
    "Stage",
    "TaskRecord",
    "TraceSet",
    "aggregate_findings",
    "analyze_findings",
    "analyze_raw_trace",
    "diagnose_compare",
    "diagnose_single",
    "outcome_diff",
    "pair_success_failure",
    "parse_structured",
    "parse_trace_file",
    "render_html_dashboard",
    "render_json_report",
    "repair_json",
    "serialize_trace_set",
    "severity_of",
    "summarize_findings",
    "validate_trace_set",
]
