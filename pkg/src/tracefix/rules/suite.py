from __future__ import annotations

from dataclasses import dataclass, field

from ..findings import Finding
from ..taxonomy import IssueKind
from ..trace import LLMCall
from .consistency import ConsistencyParams, check_information_consistency
from .python_code import SegmentWeights, check_python_syntax, detect_python_segment
from .tokens import RepetitionThresholds, detect_token_repetition, detect_unusual_tokens


@dataclass(frozen=True)
class RuleParams:
    repetition: RepetitionThresholds = field(default_factory=RepetitionThresholds)
    segment: SegmentWeights = field(default_factory=SegmentWeights)
    consistency: ConsistencyParams = field(default_factory=ConsistencyParams)


DEFAULT_RULES = RuleParams()


def evaluated_rule_issues(call: LLMCall, params: RuleParams = DEFAULT_RULES) -> list[IssueKind]:
    """Issue kinds the rule suite actually evaluates on this call."""
    issues = [IssueKind.UNUSUAL_TOKEN, IssueKind.EXCESSIVE_REPETITION]
    if detect_python_segment(call.output, params.segment).is_python:
        issues.append(IssueKind.PYTHON_SYNTAX_ERROR)
    issues.append(IssueKind.INFORMATION_INCONSISTENCY)
    return issues


def run_rule_suite(call: LLMCall, params: RuleParams = DEFAULT_RULES) -> list[Finding]:
    found: list[Finding | None] = [
        detect_unusual_tokens(call.output),
        detect_token_repetition(call.output, params.repetition),
    ]
    if detect_python_segment(call.output, params.segment).is_python:
        found.append(check_python_syntax(call.output, params.segment))
    found.append(check_information_consistency(call.system_prompt, call.user_input, call.output, params.consistency))
    return [f.stamped(call.call_id, call.agent, call.model_id) for f in found if f is not None]
