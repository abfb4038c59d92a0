"""Issue kinds, criticality levels and the tool grouping used in reports."""

from __future__ import annotations

import functools
from enum import Enum


class IssueKind(str, Enum):
    INPUT_SCHEMA_NON_COMPLIANCE = "InputSchemaNonCompliance"
    INPUT_INSTRUCTIONS_NON_COMPLIANCE = "InputInstructionsNonCompliance"
    INPUT_FORMAT_VIOLATION = "InputFormatViolation"
    PROMPT_INTERNAL_CONTRADICTION = "PromptInternalContradiction"
    PROMPT_EXAMPLE_MISALIGNMENT = "PromptExampleMisalignment"
    MISSING_EDGE_CASE_INSTRUCTIONS = "MissingEdgeCaseInstructions"
    FEW_SHOT_COVERAGE_GAP = "FewShotCoverageGap"
    OUTPUT_SCHEMA_NON_COMPLIANCE = "OutputSchemaNonCompliance"
    OUTPUT_INSTRUCTIONS_NON_COMPLIANCE = "OutputInstructionsNonCompliance"
    OUTPUT_FORMAT_VIOLATION = "OutputFormatViolation"
    UNUSUAL_TOKEN = "UnusualToken"
    EXCESSIVE_REPETITION = "ExcessiveRepetition"
    PYTHON_SYNTAX_ERROR = "PythonSyntaxError"
    INFORMATION_INCONSISTENCY = "InformationInconsistency"
    REASONING_ACTION_MISMATCH = "ReasoningActionMismatch"


@functools.total_ordering
class Criticality(str, Enum):
    MINOR = "Minor"
    MODERATE = "Moderate"
    CRITICAL = "Critical"

    @property
    def rank(self) -> int:
        return _RANK[self]

    def __lt__(self, other):
        if not isinstance(other, Criticality):
            return NotImplemented
        return self.rank < other.rank

    @classmethod
    def parse(cls, text: str) -> "Criticality":
        """Case-insensitive lookup by name ("critical", "Critical", ...)."""
        wanted = text.strip().lower()
        for level in cls:
            if level.value.lower() == wanted:
                return level
        raise ValueError(f"unknown criticality: {text!r}")


_RANK = {Criticality.MINOR: 0, Criticality.MODERATE: 1, Criticality.CRITICAL: 2}

_I = IssueKind
_SEVERITY = {
    _I.PYTHON_SYNTAX_ERROR: Criticality.CRITICAL,
    _I.INPUT_SCHEMA_NON_COMPLIANCE: Criticality.CRITICAL,
    _I.OUTPUT_SCHEMA_NON_COMPLIANCE: Criticality.CRITICAL,
    _I.REASONING_ACTION_MISMATCH: Criticality.MODERATE,
    _I.INPUT_FORMAT_VIOLATION: Criticality.MODERATE,
    _I.OUTPUT_FORMAT_VIOLATION: Criticality.MODERATE,
    _I.INFORMATION_INCONSISTENCY: Criticality.MODERATE,
    _I.INPUT_INSTRUCTIONS_NON_COMPLIANCE: Criticality.MINOR,
    _I.OUTPUT_INSTRUCTIONS_NON_COMPLIANCE: Criticality.MINOR,
    _I.FEW_SHOT_COVERAGE_GAP: Criticality.MINOR,
    _I.UNUSUAL_TOKEN: Criticality.MINOR,
    _I.EXCESSIVE_REPETITION: Criticality.MINOR,
    _I.MISSING_EDGE_CASE_INSTRUCTIONS: Criticality.MINOR,
    _I.PROMPT_INTERNAL_CONTRADICTION: Criticality.MINOR,
    _I.PROMPT_EXAMPLE_MISALIGNMENT: Criticality.MINOR,
}


def severity_of(issue: IssueKind) -> Criticality:
    return _SEVERITY[IssueKind(issue)]


# The nine reporting tools. Judge sub-tools fold into their row here, which is
# the grouping the findings-level root-cause analyzer sees.
TOOL_INPUT_VALIDATOR = "LLMInputValidator"
TOOL_OUTPUT_VALIDATOR = "LLMOutputValidator"
TOOL_CONSISTENCY = "InformationConsistencyChecker"
TOOL_EDGE_CASE = "EdgeCaseInstructionChecker"
TOOL_FEW_SHOT = "FewShotCoverageChecker"
TOOL_PROMPT_CONSISTENCY = "PromptConsistencyChecker"
TOOL_REASONING_ACTION = "ReasoningActionMismatchDetector"
TOOL_TOKEN_ANOMALY = "TokenAnomalyDetector"
TOOL_PYTHON_SYNTAX = "PythonCodeSyntaxChecker"

REPORTING_TOOLS = (
    TOOL_INPUT_VALIDATOR,
    TOOL_OUTPUT_VALIDATOR,
    TOOL_CONSISTENCY,
    TOOL_EDGE_CASE,
    TOOL_FEW_SHOT,
    TOOL_PROMPT_CONSISTENCY,
    TOOL_REASONING_ACTION,
    TOOL_TOKEN_ANOMALY,
    TOOL_PYTHON_SYNTAX,
)

TOOL_OF_ISSUE = {
    _I.INPUT_SCHEMA_NON_COMPLIANCE: TOOL_INPUT_VALIDATOR,
    _I.INPUT_INSTRUCTIONS_NON_COMPLIANCE: TOOL_INPUT_VALIDATOR,
    _I.INPUT_FORMAT_VIOLATION: TOOL_INPUT_VALIDATOR,
    _I.OUTPUT_SCHEMA_NON_COMPLIANCE: TOOL_OUTPUT_VALIDATOR,
    _I.OUTPUT_INSTRUCTIONS_NON_COMPLIANCE: TOOL_OUTPUT_VALIDATOR,
    _I.OUTPUT_FORMAT_VIOLATION: TOOL_OUTPUT_VALIDATOR,
    _I.INFORMATION_INCONSISTENCY: TOOL_CONSISTENCY,
    _I.MISSING_EDGE_CASE_INSTRUCTIONS: TOOL_EDGE_CASE,
    _I.FEW_SHOT_COVERAGE_GAP: TOOL_FEW_SHOT,
    _I.PROMPT_INTERNAL_CONTRADICTION: TOOL_PROMPT_CONSISTENCY,
    _I.PROMPT_EXAMPLE_MISALIGNMENT: TOOL_PROMPT_CONSISTENCY,
    _I.REASONING_ACTION_MISMATCH: TOOL_REASONING_ACTION,
    _I.UNUSUAL_TOKEN: TOOL_TOKEN_ANOMALY,
    _I.EXCESSIVE_REPETITION: TOOL_TOKEN_ANOMALY,
    _I.PYTHON_SYNTAX_ERROR: TOOL_PYTHON_SYNTAX,
}

ISSUE_ORDER = {issue: i for i, issue in enumerate(IssueKind)}
