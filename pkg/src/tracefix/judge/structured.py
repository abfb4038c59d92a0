"""Ask a judge for a structured object and recover it through the cascade."""

from __future__ import annotations

import logging
import re
from importlib import resources
from typing import Any, Callable, Mapping

from ..cascade import CascadeExhausted, CascadeReport, SchemaSpec, Stage, parse_structured
from ..findings import DiagnosticEvent
from .client import JudgeBackend, JudgeParams, JudgeTransportError

logger = logging.getLogger(__name__)

TEMPLATE_VERSION = "v1"
REASK_REMINDER = "\n\nRespond with only the JSON object."
DEFAULT_REASKS = 2


class JudgeUnavailable(Exception):
    pass


class UnparseableVerdict(Exception):
    def __init__(self, message: str, report: CascadeReport | None = None):
        super().__init__(message)
        self.report = report


def load_template(name: str) -> str:
    path = resources.files(__package__).joinpath("templates", TEMPLATE_VERSION, f"{name}.txt")
    return path.read_text(encoding="utf-8")


def split_sections(template: str) -> dict[str, str]:
    """Split a '# section' delimited template into named parts."""
    sections: dict[str, list[str]] = {}
    current = None
    for line in template.splitlines():
        m = re.fullmatch(r"# (\w+)", line)
        if m:
            current = m.group(1)
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return {k: "\n".join(v).strip("\n") for k, v in sections.items()}


def fill(template: str, values: Mapping[str, str]) -> str:
    """Single-pass placeholder substitution; injected text is never re-scanned."""
    pattern = re.compile(r"\{(" + "|".join(map(re.escape, values)) + r")\}")
    return pattern.sub(lambda m: values[m.group(1)], template)


def fenced(label: str, text: str) -> str:
    longest = max((len(run) for run in re.findall(r"`+", text)), default=0)
    fence = "`" * max(3, longest + 1)
    return f"{label}:\n{fence}text\n{text}\n{fence}"


def ask_structured(
    judge: JudgeBackend,
    system_text: str,
    user_text: str,
    schema: SchemaSpec,
    params: JudgeParams,
    *,
    check: Callable[[Any], str | None] = lambda value: None,
    reasks: int = DEFAULT_REASKS,
    events: list[DiagnosticEvent] | None = None,
    call_id: str = "",
    tool: str = "",
) -> Any:
    """Send the prompt, parse the reply, re-ask on unusable replies.

    ``check`` returns a problem description for values that parse but break
    a contract the schema cannot express; such replies are re-asked too.
    """
    prompt = user_text
    last_report = None
    problem = "no reply"
    for attempt in range(reasks + 1):
        try:
            reply = judge.complete(system_text, prompt, params)
        except JudgeTransportError as exc:
            raise JudgeUnavailable(str(exc)) from None
        try:
            value, report = parse_structured(reply, schema)
        except CascadeExhausted as exc:
            last_report = exc.report
            problem = str(exc)
        else:
            last_report = report
            problem = check(value)
            if problem is None:
                if report.stage_used is not Stage.STRICT and events is not None:
                    detail = f"recovered at stage {report.stage_used.value}"
                    if report.repairs:
                        detail += f" with repairs {','.join(report.repairs)}"
                    events.append(DiagnosticEvent("parse-recovered", detail, call_id, tool))
                return value
        logger.debug("judge reply unusable on attempt %d: %s", attempt + 1, problem)
        prompt = user_text + REASK_REMINDER
    raise UnparseableVerdict(f"no usable reply after {reasks + 1} attempts: {problem}", last_report)
