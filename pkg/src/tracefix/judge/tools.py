"""LLM-as-a-judge detectors over a pluggable backend."""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from ..cascade import FieldSpec, SchemaSpec
from ..findings import DiagnosticEvent, Finding
from ..taxonomy import TOOL_OF_ISSUE, IssueKind
from ..trace import LLMCall
from .client import JudgeBackend, JudgeParams
from .structured import (
    JudgeUnavailable,
    UnparseableVerdict,
    ask_structured,
    fenced,
    fill,
    load_template,
    split_sections,
)

PROMPT = "system_prompt"
INPUT = "user_input"
OUTPUT = "output"

_LABELS = {PROMPT: "SYSTEM PROMPT", INPUT: "USER INPUT", OUTPUT: "LLM OUTPUT"}


class JudgeToolKind(str, Enum):
    INPUT_SCHEMA = "InputSchema"
    INPUT_INSTRUCTIONS = "InputInstructions"
    INPUT_FORMAT = "InputFormat"
    PROMPT_INTERNAL_CONSISTENCY = "PromptInternalConsistency"
    PROMPT_EXAMPLE_ALIGNMENT = "PromptExampleAlignment"
    EDGE_CASE_INSTRUCTION = "EdgeCaseInstruction"
    FEW_SHOT_COVERAGE = "FewShotCoverage"
    OUTPUT_SCHEMA = "OutputSchema"
    OUTPUT_INSTRUCTIONS = "OutputInstructions"
    OUTPUT_FORMAT = "OutputFormat"
    REASONING_ACTION_MISMATCH = "ReasoningActionMismatch"

    @property
    def arity(self) -> tuple[str, ...]:
        return _ARITY[self]

    @property
    def issue(self) -> IssueKind:
        return _ISSUE[self]

    @property
    def template_name(self) -> str:
        return _TEMPLATE[self]


_K = JudgeToolKind
_ARITY = {
    _K.INPUT_SCHEMA: (PROMPT, INPUT),
    _K.INPUT_INSTRUCTIONS: (PROMPT, INPUT),
    _K.INPUT_FORMAT: (PROMPT, INPUT),
    _K.PROMPT_INTERNAL_CONSISTENCY: (PROMPT,),
    _K.PROMPT_EXAMPLE_ALIGNMENT: (PROMPT,),
    _K.EDGE_CASE_INSTRUCTION: (PROMPT,),
    _K.FEW_SHOT_COVERAGE: (PROMPT,),
    _K.OUTPUT_SCHEMA: (PROMPT, OUTPUT),
    _K.OUTPUT_INSTRUCTIONS: (PROMPT, OUTPUT),
    _K.OUTPUT_FORMAT: (PROMPT, OUTPUT),
    _K.REASONING_ACTION_MISMATCH: (OUTPUT,),
}
_ISSUE = {
    _K.INPUT_SCHEMA: IssueKind.INPUT_SCHEMA_NON_COMPLIANCE,
    _K.INPUT_INSTRUCTIONS: IssueKind.INPUT_INSTRUCTIONS_NON_COMPLIANCE,
    _K.INPUT_FORMAT: IssueKind.INPUT_FORMAT_VIOLATION,
    _K.PROMPT_INTERNAL_CONSISTENCY: IssueKind.PROMPT_INTERNAL_CONTRADICTION,
    _K.PROMPT_EXAMPLE_ALIGNMENT: IssueKind.PROMPT_EXAMPLE_MISALIGNMENT,
    _K.EDGE_CASE_INSTRUCTION: IssueKind.MISSING_EDGE_CASE_INSTRUCTIONS,
    _K.FEW_SHOT_COVERAGE: IssueKind.FEW_SHOT_COVERAGE_GAP,
    _K.OUTPUT_SCHEMA: IssueKind.OUTPUT_SCHEMA_NON_COMPLIANCE,
    _K.OUTPUT_INSTRUCTIONS: IssueKind.OUTPUT_INSTRUCTIONS_NON_COMPLIANCE,
    _K.OUTPUT_FORMAT: IssueKind.OUTPUT_FORMAT_VIOLATION,
    _K.REASONING_ACTION_MISMATCH: IssueKind.REASONING_ACTION_MISMATCH,
}
_TEMPLATE = {
    _K.INPUT_SCHEMA: "input_schema",
    _K.INPUT_INSTRUCTIONS: "input_instructions",
    _K.INPUT_FORMAT: "input_format",
    _K.PROMPT_INTERNAL_CONSISTENCY: "prompt_internal_consistency",
    _K.PROMPT_EXAMPLE_ALIGNMENT: "prompt_example_alignment",
    _K.EDGE_CASE_INSTRUCTION: "edge_case_instruction",
    _K.FEW_SHOT_COVERAGE: "few_shot_coverage",
    _K.OUTPUT_SCHEMA: "output_schema",
    _K.OUTPUT_INSTRUCTIONS: "output_instructions",
    _K.OUTPUT_FORMAT: "output_format",
    _K.REASONING_ACTION_MISMATCH: "reasoning_action_mismatch",
}

_BASE_FIELDS = (
    FieldSpec("violated", "boolean"),
    FieldSpec("reasoning", "string"),
    FieldSpec("recommendations", "array-of-string"),
)


def verdict_schema(kind: JudgeToolKind) -> SchemaSpec:
    if kind is JudgeToolKind.REASONING_ACTION_MISMATCH:
        return SchemaSpec(_BASE_FIELDS + (FieldSpec("severity_score", "number"),))
    return SchemaSpec(_BASE_FIELDS)


class MissingArtifact(ValueError):
    def __init__(self, kind: JudgeToolKind, field_name: str):
        super().__init__(f"{kind.value} needs a non-empty {field_name}")
        self.kind = kind
        self.field = field_name


@dataclass(frozen=True)
class PromptBundle:
    kind: JudgeToolKind
    system_text: str
    user_text: str
    expected_schema: SchemaSpec


@dataclass(frozen=True)
class Verdict:
    violated: bool
    reasoning: str
    recommendations: tuple[str, ...]
    severity_score: float | None = None


@functools.lru_cache(maxsize=None)
def _tool_template(kind: JudgeToolKind) -> tuple[str, str]:
    sections = split_sections(load_template(kind.template_name))
    user = sections["user"]
    for placeholder in (PROMPT, INPUT, OUTPUT):
        present = "{" + placeholder + "}" in user
        if present != (placeholder in kind.arity):
            raise RuntimeError(f"template {kind.template_name} does not match arity {kind.arity}")
    return sections["criterion"], user


def build_judge_prompt(kind: JudgeToolKind, call: LLMCall) -> PromptBundle:
    kind = JudgeToolKind(kind)
    for name in kind.arity:
        if not getattr(call, name):
            raise MissingArtifact(kind, name)
    criterion, user_template = _tool_template(kind)
    schema = verdict_schema(kind)
    extra = ""
    if kind is JudgeToolKind.REASONING_ACTION_MISMATCH:
        extra = '- "severity_score" is a number from 0.0 to 1.0 rating how severe the mismatch is.'
    system_text = fill(
        load_template("system"),
        {"tool": kind.value, "criterion": criterion, "schema": schema.describe(), "extra_rules": extra},
    ).rstrip("\n") + "\n"
    artifacts = {name: fenced(_LABELS[name], getattr(call, name)) for name in kind.arity}
    user_text = f"Tool: {kind.value}\nAgent: {call.agent}\n\n" + fill(user_template, artifacts) + "\n"
    return PromptBundle(kind, system_text, user_text, schema)


def _verdict_problem(value: dict) -> str | None:
    score = value.get("severity_score")
    if isinstance(score, float) and not math.isfinite(score):
        return "severity_score is not a finite number"
    if value["violated"]:
        if not value["reasoning"].strip():
            return "violated verdict without reasoning"
        if len(value["recommendations"]) < 3:
            return "violated verdict needs three recommendations"
    return None


def run_judge_tool(
    kind: JudgeToolKind,
    call: LLMCall,
    judge: JudgeBackend,
    params: JudgeParams = JudgeParams(),
    *,
    events: list[DiagnosticEvent] | None = None,
) -> Finding:
    kind = JudgeToolKind(kind)
    bundle = build_judge_prompt(kind, call)
    sink = events if events is not None else []
    value = ask_structured(
        judge,
        bundle.system_text,
        bundle.user_text,
        bundle.expected_schema,
        params,
        check=_verdict_problem,
        events=sink,
        call_id=call.call_id,
        tool=kind.value,
    )

    recs = list(value["recommendations"])
    if len(recs) > 3:
        sink.append(DiagnosticEvent("recommendations-truncated", f"judge returned {len(recs)}; kept 3", call.call_id, kind.value))
        recs = recs[:3]

    severity = None
    if kind is JudgeToolKind.REASONING_ACTION_MISMATCH:
        raw = float(value["severity_score"])
        severity = min(1.0, max(0.0, raw))
        if severity != raw:
            sink.append(DiagnosticEvent("severity-clamped", f"severity {raw} clamped to {severity}", call.call_id, kind.value))

    return Finding(
        call_id=call.call_id,
        agent=call.agent,
        model_id=call.model_id,
        tool=TOOL_OF_ISSUE[kind.issue],
        issue=kind.issue,
        violated=value["violated"],
        severity_score=severity,
        reasoning=value["reasoning"],
        recommendations=tuple(recs),
        evidence={"judge_tool": kind.value},
    )


def _one(kind, call, judge, params) -> tuple[Finding | None, list[DiagnosticEvent]]:
    events: list[DiagnosticEvent] = []
    try:
        return run_judge_tool(kind, call, judge, params, events=events), events
    except MissingArtifact as exc:
        events.append(DiagnosticEvent("missing-artifact", str(exc), call.call_id, kind.value))
    except JudgeUnavailable as exc:
        events.append(DiagnosticEvent("judge-unavailable", str(exc), call.call_id, kind.value))
    except UnparseableVerdict as exc:
        events.append(DiagnosticEvent("unparseable-verdict", str(exc), call.call_id, kind.value))
    return None, events


def run_judge_suite(
    call: LLMCall,
    judge: JudgeBackend,
    enabled: Iterable[JudgeToolKind] | None = None,
    params: JudgeParams = JudgeParams(),
) -> tuple[list[Finding], list[DiagnosticEvent]]:
    """Run each enabled tool once; results come back in canonical kind order."""
    wanted = set(JudgeToolKind) if enabled is None else {JudgeToolKind(k) for k in enabled}
    kinds = [k for k in JudgeToolKind if k in wanted]
    workers = max(1, min(getattr(judge, "max_in_flight", 1), len(kinds)))
    if workers == 1:
        results = [_one(k, call, judge, params) for k in kinds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda k: _one(k, call, judge, params), kinds))

    findings = [f for f, _ in results if f is not None]
    events = [e for _, evs in results for e in evs]
    return findings, events


def verdict_of(finding: Finding) -> Verdict:
    return Verdict(finding.violated, finding.reasoning or "", finding.recommendations, finding.severity_score)
