"""Root-cause analysis and trajectory diagnosis.

Two root-cause analyzers: one reads the raw calls of a task trajectory, the
other reads a digest of detector findings. Two diagnosis tools locate the
failing step of a failed trajectory, alone or side by side with a successful
run of the same task.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .cascade import FieldSpec, SchemaSpec
from .findings import DiagnosticEvent, Finding
from .judge.client import JudgeBackend, JudgeParams
from .judge.structured import ask_structured, fenced, fill, load_template, split_sections
from .taxonomy import ISSUE_ORDER, REPORTING_TOOLS, TOOL_OF_ISSUE, Criticality, IssueKind, severity_of
from .trace import LLMCall, TraceSet

EXCERPT_HEAD = 1500
EXCERPT_TAIL = 300
BUDGET_FLOOR = 4000
DEFAULT_BUDGET = 24000
DEFAULT_EXEMPLARS = 3
_EXEMPLAR_CHARS = 240


class BudgetTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class RootCauseReport:
    root_cause: str
    affected_agents: tuple[str, ...]
    criticality: Criticality
    remediation: str
    evidence: tuple[str, ...] = ()
    analyzer: str = ""  # "raw" or "findings"
    model_id: str = ""
    task_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "affected_agents", tuple(self.affected_agents))
        object.__setattr__(self, "evidence", tuple(self.evidence))
        object.__setattr__(self, "criticality", Criticality(self.criticality))
        if self.root_cause and not self.affected_agents:
            raise ValueError("a root cause must name at least one affected agent")

    def to_dict(self) -> dict:
        return {
            "analyzer": self.analyzer,
            "model_id": self.model_id,
            "task_id": self.task_id,
            "root_cause": self.root_cause,
            "affected_agents": list(self.affected_agents),
            "criticality": self.criticality.value,
            "remediation": self.remediation,
            "evidence": list(self.evidence),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RootCauseReport":
        return cls(
            root_cause=d["root_cause"],
            affected_agents=tuple(d["affected_agents"]),
            criticality=Criticality(d["criticality"]),
            remediation=d["remediation"],
            evidence=tuple(d.get("evidence", ())),
            analyzer=d.get("analyzer", ""),
            model_id=d.get("model_id", ""),
            task_id=d.get("task_id", ""),
        )


@dataclass(frozen=True)
class FailureLocation:
    agent: str
    call_id: str


@dataclass(frozen=True)
class DiagnosisReport:
    failure_location: FailureLocation
    root_cause: str
    recommendations: tuple[str, ...]
    differences: tuple[str, ...] | None = None
    task_id: str = ""
    failed_model: str = ""
    success_model: str = ""

    def __post_init__(self):
        object.__setattr__(self, "recommendations", tuple(self.recommendations))
        if self.differences is not None:
            object.__setattr__(self, "differences", tuple(self.differences))

    @property
    def mode(self) -> str:
        return "single" if self.differences is None else "compare"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "task_id": self.task_id,
            "failed_model": self.failed_model,
            "success_model": self.success_model,
            "failure_location": {"agent": self.failure_location.agent, "call_id": self.failure_location.call_id},
            "root_cause": self.root_cause,
            "recommendations": list(self.recommendations),
            "differences": list(self.differences) if self.differences is not None else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DiagnosisReport":
        loc = d["failure_location"]
        diffs = d.get("differences")
        return cls(
            failure_location=FailureLocation(loc["agent"], loc["call_id"]),
            root_cause=d["root_cause"],
            recommendations=tuple(d["recommendations"]),
            differences=tuple(diffs) if diffs is not None else None,
            task_id=d.get("task_id", ""),
            failed_model=d.get("failed_model", ""),
            success_model=d.get("success_model", ""),
        )


# --- call digests -----------------------------------------------------------


def excerpt(text: str, head: int = EXCERPT_HEAD, tail: int = EXCERPT_TAIL) -> str:
    if len(text) <= head + tail:
        return text
    omitted = len(text) - head - tail
    return f"{text[:head]}\n[... {omitted} characters omitted ...]\n{text[-tail:]}"


def render_calls(calls: Sequence[LLMCall]) -> str:
    blocks = []
    for call in calls:
        blocks.append(
            "\n".join(
                [
                    f"### Step {call.seq} | agent: {call.agent} | call_id: {call.call_id}",
                    fenced("SYSTEM PROMPT", excerpt(call.system_prompt)),
                    fenced("INPUT", excerpt(call.user_input)),
                    fenced("OUTPUT", excerpt(call.output)),
                ]
            )
        )
    return "\n\n".join(blocks)


# --- findings digest --------------------------------------------------------


@dataclass(frozen=True)
class Exemplar:
    call_id: str
    text: str


@dataclass(frozen=True)
class DigestGroup:
    agent: str
    issue: IssueKind
    count: int
    exemplars: tuple[Exemplar, ...] = ()

    @property
    def criticality(self) -> Criticality:
        return severity_of(self.issue)

    @property
    def tool(self) -> str:
        return TOOL_OF_ISSUE[self.issue]


@dataclass(frozen=True)
class FindingsDigest:
    groups: tuple[DigestGroup, ...]
    totals: Mapping[Criticality, int]
    truncated: bool
    budget: int
    call_ids: frozenset[str] = field(default_factory=frozenset)

    @property
    def per_agent(self) -> list[dict]:
        agents: dict[str, dict] = {}
        for g in self.groups:
            entry = agents.setdefault(g.agent, {"agent": g.agent, "counts": {}, "exemplars": []})
            entry["counts"][g.issue] = g.count
            entry["exemplars"].extend(g.exemplars)
        return [agents[a] for a in sorted(agents)]

    @property
    def total(self) -> int:
        return sum(self.totals.values())

    def render(self) -> str:
        return _render_digest(self.groups, self.totals, self.truncated)


def _priority(group: DigestGroup) -> tuple:
    return (-group.criticality.rank, -group.count, group.agent, ISSUE_ORDER[group.issue])


def _group_line(i: int, g: DigestGroup) -> str:
    return f"{i}. [{g.criticality.value}] {g.agent} | {g.tool} / {g.issue.value} | count {g.count}"


def _exemplar_line(e: Exemplar) -> str:
    return f"   - ({e.call_id}) {e.text}"


TRUNCATION_NOTICE = (
    "NOTE: some exemplar excerpts were omitted to fit the size budget. "
    "All counts are complete."
)


def _render_header(groups, totals, truncated: bool) -> list[str]:
    agents = len({g.agent for g in groups})
    total = sum(totals.values())
    lines = [
        f"Findings digest: {total} violations across {agents} agents "
        f"(Critical {totals[Criticality.CRITICAL]}, Moderate {totals[Criticality.MODERATE]}, "
        f"Minor {totals[Criticality.MINOR]})."
    ]
    if truncated:
        lines.append(TRUNCATION_NOTICE)
    by_tool = Counter()
    for g in groups:
        by_tool[g.tool] += g.count
    lines.append("")
    lines.append("Violations per validation tool:")
    for tool in REPORTING_TOOLS:
        lines.append(f"- {tool}: {by_tool[tool]}")
    lines.append("")
    lines.append("Issue groups (severity, then frequency):")
    return lines


def _render_digest(groups, totals, truncated: bool) -> str:
    lines = _render_header(groups, totals, truncated)
    for i, g in enumerate(groups, start=1):
        lines.append(_group_line(i, g))
        lines.extend(_exemplar_line(e) for e in g.exemplars)
    return "\n".join(lines) + "\n"


def _one_line(text: str, limit: int = _EXEMPLAR_CHARS) -> str:
    flat = " ".join(text.split())
    return flat if len(flat) <= limit else flat[: limit - 3] + "..."


def summarize_findings(
    findings: Iterable[Finding], budget: int = DEFAULT_BUDGET, k: int = DEFAULT_EXEMPLARS
) -> FindingsDigest:
    """Group violations by (agent, issue), prioritize, and fit exemplars to a budget.

    Non-violating findings are not issues and are ignored. Counts are never
    dropped; only exemplar excerpts are, greedily in priority order.
    """
    if budget < BUDGET_FLOOR:
        raise BudgetTooSmall(f"budget {budget} is below the floor of {BUDGET_FLOOR} characters")
    if k < 0:
        raise ValueError("k must be >= 0")

    counts: Counter = Counter()
    candidates: dict[tuple[str, IssueKind], list[Exemplar]] = defaultdict(list)
    call_ids = set()
    for f in findings:
        if not f.violated:
            continue
        key = (f.agent, f.issue)
        counts[key] += 1
        call_ids.add(f.call_id)
        pool = candidates[key]
        text = _one_line(f.reasoning or f.issue.value)
        if len(pool) < k and all(e.text != text for e in pool):
            pool.append(Exemplar(f.call_id, text))

    totals = {c: 0 for c in Criticality}
    for (agent, issue), n in counts.items():
        totals[severity_of(issue)] += n

    bare = sorted((DigestGroup(a, i, n) for (a, i), n in counts.items()), key=_priority)
    # Size with the notice included so adding it later cannot overflow.
    used = len(_render_digest(bare, totals, truncated=True))
    truncated = False
    groups = []
    for g in bare:
        kept = []
        for e in candidates[(g.agent, g.issue)]:
            cost = len(_exemplar_line(e)) + 1
            if used + cost <= budget:
                kept.append(e)
                used += cost
            else:
                truncated = True
        groups.append(DigestGroup(g.agent, g.issue, g.count, tuple(kept)))

    return FindingsDigest(tuple(groups), totals, truncated, budget, frozenset(call_ids))


# --- judge-backed analyzers ---------------------------------------------------

_ROOT_CAUSE_SCHEMA = SchemaSpec(
    required=(
        FieldSpec("root_cause", "string"),
        FieldSpec("affected_agents", "array-of-string"),
        FieldSpec("remediation", "string"),
    ),
    optional=(FieldSpec("criticality", "string"), FieldSpec("evidence", "array-of-string")),
)

_DIAGNOSIS_FIELDS = (
    FieldSpec("failure_location", "object"),
    FieldSpec("root_cause", "string"),
    FieldSpec("recommendations", "array-of-string"),
)
_SINGLE_SCHEMA = SchemaSpec(_DIAGNOSIS_FIELDS)
_COMPARE_SCHEMA = SchemaSpec(_DIAGNOSIS_FIELDS + (FieldSpec("differences", "array-of-string"),))


def _root_cause_problem(value: dict) -> str | None:
    crit = value.get("criticality") or ""
    if crit:
        try:
            Criticality.parse(crit)
        except ValueError:
            return f"unknown criticality {crit!r}"
    if value["root_cause"].strip():
        if not crit:
            return "root cause without criticality"
        if not [a for a in value["affected_agents"] if a.strip()]:
            return "root cause without affected agents"
    return None


def _diagnosis_problem(value: dict, compare: bool) -> str | None:
    loc = value["failure_location"]
    if not all(isinstance(loc.get(k, ""), str) for k in ("agent", "call_id")):
        return "failure_location needs string agent and call_id"
    if compare and not value["differences"]:
        return "comparison needs at least one difference"
    return None


def _prompt(template: str, values: Mapping[str, str], schema: SchemaSpec) -> tuple[str, str]:
    sections = split_sections(load_template(template))
    system = fill(sections["system"], {"schema": schema.describe()}) + "\n"
    user = fill(sections["user"], values) + "\n"
    return system, user


def _filter_evidence(ids: Iterable[str], known: set[str] | frozenset[str], events, tool: str) -> tuple[str, ...]:
    kept = []
    for cid in ids:
        if cid in known:
            if cid not in kept:
                kept.append(cid)
        elif events is not None:
            events.append(DiagnosticEvent("unknown-evidence", f"dropped call id {cid!r} not present in the analyzed trace", cid, tool))
    return tuple(kept)


def _to_root_cause(value: dict, known, events, tool: str, **meta) -> RootCauseReport:
    cause = value["root_cause"].strip()
    crit_text = value.get("criticality") or ""
    criticality = Criticality.parse(crit_text) if crit_text else Criticality.MINOR
    agents = tuple(dict.fromkeys(a.strip() for a in value["affected_agents"] if a.strip()))
    return RootCauseReport(
        root_cause=cause,
        affected_agents=agents,
        criticality=criticality,
        remediation=value["remediation"].strip(),
        evidence=_filter_evidence(value.get("evidence") or (), known, events, tool),
        **meta,
    )


def _check_trajectory(calls: Sequence[LLMCall], what: str):
    if not calls:
        raise ValueError(f"{what} trajectory is empty")
    if len({c.task_id for c in calls}) != 1:
        raise ValueError(f"{what} trajectory mixes several task ids")
    seqs = [c.seq for c in calls]
    if seqs != sorted(seqs) or len(set(seqs)) != len(seqs):
        raise ValueError(f"{what} trajectory is not ordered by seq")


def analyze_raw_trace(
    task_calls: Sequence[LLMCall],
    judge: JudgeBackend,
    params: JudgeParams = JudgeParams(),
    *,
    task_description: str = "",
    events: list[DiagnosticEvent] | None = None,
) -> RootCauseReport:
    _check_trajectory(task_calls, "task")
    first = task_calls[0]
    system, user = _prompt(
        "rootcause_raw",
        {
            "task": task_description or first.task_id,
            "count": str(len(task_calls)),
            "calls": render_calls(task_calls),
        },
        _ROOT_CAUSE_SCHEMA,
    )
    value = ask_structured(
        judge, system, user, _ROOT_CAUSE_SCHEMA, params, check=_root_cause_problem, events=events, tool="RootCause:raw"
    )
    known = {c.call_id for c in task_calls}
    return _to_root_cause(value, known, events, "RootCause:raw", analyzer="raw", model_id=first.model_id, task_id=first.task_id)


def analyze_findings(
    digest: FindingsDigest,
    judge: JudgeBackend,
    params: JudgeParams = JudgeParams(),
    *,
    scope: str = "all findings",
    model_id: str = "",
    events: list[DiagnosticEvent] | None = None,
) -> RootCauseReport:
    system, user = _prompt("rootcause_findings", {"scope": scope, "digest": digest.render()}, _ROOT_CAUSE_SCHEMA)
    value = ask_structured(
        judge, system, user, _ROOT_CAUSE_SCHEMA, params, check=_root_cause_problem, events=events, tool="RootCause:findings"
    )
    return _to_root_cause(value, digest.call_ids, events, "RootCause:findings", analyzer="findings", model_id=model_id)


def _to_diagnosis(value: dict, calls: Sequence[LLMCall], events, tool: str, **meta) -> DiagnosisReport:
    loc = value["failure_location"]
    agent = (loc.get("agent") or "").strip()
    call_id = (loc.get("call_id") or "").strip()
    by_id = {c.call_id: c for c in calls}
    if call_id and call_id not in by_id:
        if events is not None:
            events.append(DiagnosticEvent("unknown-evidence", f"failure location {call_id!r} is not in the failed trajectory", call_id, tool))
        call_id = ""
    if call_id and not agent:
        agent = by_id[call_id].agent
    diffs = value.get("differences")
    return DiagnosisReport(
        failure_location=FailureLocation(agent, call_id),
        root_cause=value["root_cause"].strip(),
        recommendations=tuple(r for r in value["recommendations"] if r.strip()),
        differences=tuple(diffs) if diffs is not None else None,
        **meta,
    )


def diagnose_single(
    failed_calls: Sequence[LLMCall],
    findings: Sequence[Finding],
    judge: JudgeBackend,
    params: JudgeParams = JudgeParams(),
    *,
    task_description: str = "",
    events: list[DiagnosticEvent] | None = None,
) -> DiagnosisReport:
    _check_trajectory(failed_calls, "failed")
    ids = {c.call_id for c in failed_calls}
    digest = summarize_findings([f for f in findings if f.call_id in ids])
    first = failed_calls[0]
    system, user = _prompt(
        "diagnose_single",
        {
            "task": task_description or first.task_id,
            "count": str(len(failed_calls)),
            "calls": render_calls(failed_calls),
            "findings": digest.render(),
        },
        _SINGLE_SCHEMA,
    )
    value = ask_structured(
        judge, system, user, _SINGLE_SCHEMA, params, check=lambda v: _diagnosis_problem(v, False), events=events, tool="Diagnose:single"
    )
    value.pop("differences", None)
    return _to_diagnosis(value, failed_calls, events, "Diagnose:single", task_id=first.task_id, failed_model=first.model_id)


def diagnose_compare(
    success_calls: Sequence[LLMCall],
    failed_calls: Sequence[LLMCall],
    judge: JudgeBackend,
    params: JudgeParams = JudgeParams(),
    *,
    task_description: str = "",
    events: list[DiagnosticEvent] | None = None,
) -> DiagnosisReport:
    _check_trajectory(success_calls, "successful")
    _check_trajectory(failed_calls, "failed")
    first = failed_calls[0]
    system, user = _prompt(
        "diagnose_compare",
        {
            "task": task_description or first.task_id,
            "success_count": str(len(success_calls)),
            "success_calls": render_calls(success_calls),
            "failed_count": str(len(failed_calls)),
            "failed_calls": render_calls(failed_calls),
        },
        _COMPARE_SCHEMA,
    )
    value = ask_structured(
        judge, system, user, _COMPARE_SCHEMA, params, check=lambda v: _diagnosis_problem(v, True), events=events, tool="Diagnose:compare"
    )
    return _to_diagnosis(
        value,
        failed_calls,
        events,
        "Diagnose:compare",
        task_id=first.task_id,
        failed_model=first.model_id,
        success_model=success_calls[0].model_id,
    )


@dataclass(frozen=True)
class TrajectoryPair:
    task_id: str
    success_model: str
    failed_model: str


def pair_success_failure(ts: TraceSet) -> list[TrajectoryPair]:
    """Every (succeeded model, failed model) combination per task."""
    by_task: dict[str, dict[bool, set[str]]] = defaultdict(lambda: {True: set(), False: set()})
    for task in ts.tasks:
        if task.succeeded is not None:
            by_task[task.task_id][task.succeeded].add(task.model_id)
    pairs = [
        TrajectoryPair(task_id, s, f)
        for task_id, outcome in by_task.items()
        for s in outcome[True]
        for f in outcome[False]
    ]
    return sorted(pairs, key=lambda p: (p.task_id, p.success_model, p.failed_model))
