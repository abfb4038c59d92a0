"""Judge backends and the LLM-as-a-judge detectors."""

from .client import (
    API_KEY_ENV,
    HttpJudge,
    HttpStatus,
    JudgeBackend,
    JudgeParams,
    JudgeTransportError,
    MalformedResponse,
    MockJudge,
    MockScript,
    ScriptEntry,
    ScriptExhausted,
    Timeout,
    http_complete,
    mock_complete,
)
from .structured import JudgeUnavailable, UnparseableVerdict, ask_structured
from .tools import (
    JudgeToolKind,
    MissingArtifact,
    PromptBundle,
    Verdict,
    build_judge_prompt,
    run_judge_suite,
    run_judge_tool,
    verdict_schema,
)

__all__ = [
    "API_KEY_ENV",
    "HttpJudge",
    "HttpStatus",
    "JudgeBackend",
    "JudgeParams",
    "JudgeToolKind",
    "JudgeTransportError",
    "JudgeUnavailable",
    "MalformedResponse",
    "MissingArtifact",
    "MockJudge",
    "MockScript",
    "PromptBundle",
    "ScriptEntry",
    "ScriptExhausted",
    "Timeout",
    "UnparseableVerdict",
    "Verdict",
    "ask_structured",
    "build_judge_prompt",
    "http_complete",
    "mock_complete",
    "run_judge_suite",
    "run_judge_tool",
    "verdict_schema",
]
