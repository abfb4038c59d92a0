"""Detector verdict records shared by the rule and judge suites."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

from .taxonomy import IssueKind


class Relation(str, Enum):
    TRUNCATED = "truncated"
    MODIFIED = "modified"
    HALLUCINATED = "hallucinated"
    MISSING = "missing"


@dataclass(frozen=True)
class MismatchEntry:
    attribute: str
    expected: str
    observed: str
    relation: Relation

    def __post_init__(self):
        rel = Relation(self.relation)
        object.__setattr__(self, "relation", rel)
        if rel in (Relation.MODIFIED, Relation.TRUNCATED) and self.expected == self.observed:
            raise ValueError(f"{rel.value} entry needs expected != observed")
        if rel is Relation.MISSING and self.observed:
            raise ValueError("missing entry must have empty observed value")
        if rel is Relation.HALLUCINATED and self.expected:
            raise ValueError("hallucinated entry must have empty expected value")

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "expected": self.expected,
            "observed": self.observed,
            "relation": self.relation.value,
        }


@dataclass(frozen=True)
class MismatchReport:
    entries: tuple[MismatchEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("a mismatch report needs at least one entry")
        object.__setattr__(self, "entries", tuple(self.entries))

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MismatchReport":
        return cls(tuple(MismatchEntry(**e) for e in data["entries"]))


@dataclass(frozen=True)
class Finding:
    """One detector verdict on one call.

    ``evidence`` carries detector-specific facts (repeated unit and run
    length, syntax error line, offending codepoints) that do not fit the
    attribute-mismatch shape of ``detail``.
    """

    call_id: str
    agent: str
    tool: str
    issue: IssueKind
    violated: bool
    severity_score: float | None = None
    reasoning: str | None = None
    recommendations: tuple[str, ...] = ()
    detail: MismatchReport | None = None
    evidence: Mapping[str, Any] = field(default_factory=dict)
    model_id: str = ""

    def __post_init__(self):
        issue = IssueKind(self.issue)
        object.__setattr__(self, "issue", issue)
        object.__setattr__(self, "recommendations", tuple(self.recommendations))
        if len(self.recommendations) > 3:
            raise ValueError("at most three recommendations")
        if self.severity_score is not None:
            if issue is not IssueKind.REASONING_ACTION_MISMATCH:
                raise ValueError("severity_score is only defined for ReasoningActionMismatch")
            if not 0.0 <= self.severity_score <= 1.0:
                raise ValueError(f"severity_score out of [0, 1]: {self.severity_score}")
        if not self.violated and self.detail is not None:
            raise ValueError("non-violating finding cannot carry a mismatch report")

    def stamped(self, call_id: str, agent: str, model_id: str = "") -> "Finding":
        return replace(self, call_id=call_id, agent=agent, model_id=model_id)

    def to_dict(self) -> dict:
        return {
            "call_id": self.call_id,
            "agent": self.agent,
            "model_id": self.model_id,
            "tool": self.tool,
            "issue": self.issue.value,
            "violated": self.violated,
            "severity_score": self.severity_score,
            "reasoning": self.reasoning,
            "recommendations": list(self.recommendations),
            "detail": self.detail.to_dict() if self.detail else None,
            "evidence": dict(self.evidence),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Finding":
        detail = data.get("detail")
        return cls(
            call_id=data["call_id"],
            agent=data["agent"],
            model_id=data.get("model_id", ""),
            tool=data["tool"],
            issue=IssueKind(data["issue"]),
            violated=data["violated"],
            severity_score=data.get("severity_score"),
            reasoning=data.get("reasoning"),
            recommendations=tuple(data.get("recommendations", ())),
            detail=MismatchReport.from_dict(detail) if detail else None,
            evidence=dict(data.get("evidence") or {}),
        )


@dataclass(frozen=True)
class DiagnosticEvent:
    """A non-finding event: judge outage, unparseable reply, clamped score."""

    kind: str
    message: str
    call_id: str = ""
    tool: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": self.message, "call_id": self.call_id, "tool": self.tool}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DiagnosticEvent":
        return cls(data["kind"], data["message"], data.get("call_id", ""), data.get("tool", ""))
