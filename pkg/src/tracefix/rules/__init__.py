"""Deterministic detectors."""

from .consistency import ConsistencyParams, check_information_consistency, extract_attributes
from .python_code import (
    GateViolation,
    SegmentResult,
    SegmentWeights,
    check_python_syntax,
    detect_python_segment,
    structural_issues,
)
from .suite import DEFAULT_RULES, RuleParams, evaluated_rule_issues, run_rule_suite
from .tokens import RepetitionThresholds, detect_token_repetition, detect_unusual_tokens, find_repetition

__all__ = [
    "ConsistencyParams",
    "DEFAULT_RULES",
    "GateViolation",
    "RepetitionThresholds",
    "RuleParams",
    "SegmentResult",
    "SegmentWeights",
    "check_information_consistency",
    "check_python_syntax",
    "detect_python_segment",
    "detect_token_repetition",
    "detect_unusual_tokens",
    "evaluated_rule_issues",
    "extract_attributes",
    "find_repetition",
    "run_rule_suite",
    "structural_issues",
]
