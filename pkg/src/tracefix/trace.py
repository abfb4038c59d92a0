"""Trace data model and JSON-Lines ingestion.

A trace file holds one JSON object per line. Call lines describe a single LLM
invocation made by an agent; task lines describe the task a trajectory tried to
solve and (optionally) whether it succeeded under a given model.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable

logger = logging.getLogger(__name__)

_CALL_FIELDS = ("call_id", "task_id", "seq", "agent", "model_id", "system_prompt", "user_input", "output")
_TASK_FIELDS = ("task_id", "model_id")


class TraceError(Exception):
    pass


class NotUtf8(TraceError):
    pass


class MalformedLine(TraceError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateCallId(TraceError):
    def __init__(self, call_id: str, line_no: int | None = None):
        where = f"line {line_no}: " if line_no else ""
        super().__init__(f"{where}duplicate call_id {call_id!r}")
        self.call_id = call_id
        self.line_no = line_no


class UnknownTaskId(TraceError):
    def __init__(self, task_id: str, line_no: int | None = None):
        where = f"line {line_no}: " if line_no else ""
        super().__init__(f"{where}call references unknown task_id {task_id!r}")
        self.task_id = task_id
        self.line_no = line_no


def check_agent_id(name: Any) -> str:
    if not isinstance(name, str) or not name:
        raise ValueError("agent must be a non-empty string")
    if "\n" in name or "\r" in name:
        raise ValueError("agent must not contain line breaks")
    return name


@dataclass(frozen=True)
class LLMCall:
    call_id: str
    task_id: str
    seq: int
    agent: str
    model_id: str
    system_prompt: str
    user_input: str
    output: str
    timestamp: str | None = None

    def __post_init__(self):
        check_agent_id(self.agent)
        if isinstance(self.seq, bool) or not isinstance(self.seq, int) or self.seq < 0:
            raise ValueError(f"seq must be a non-negative integer, got {self.seq!r}")
        for name in ("call_id", "task_id", "model_id", "system_prompt", "user_input", "output"):
            if not isinstance(getattr(self, name), str):
                raise ValueError(f"{name} must be a string")
        if not self.call_id:
            raise ValueError("call_id must be non-empty")
        if self.timestamp is not None and not isinstance(self.timestamp, str):
            raise ValueError("timestamp must be a string")

    def to_dict(self) -> dict:
        d = {"kind": "call"}
        d.update({name: getattr(self, name) for name in _CALL_FIELDS})
        if self.timestamp is not None:
            d["timestamp"] = self.timestamp
        return d


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    model_id: str
    description: str | None = None
    succeeded: bool | None = None

    def __post_init__(self):
        if not isinstance(self.task_id, str) or not isinstance(self.model_id, str):
            raise ValueError("task_id and model_id must be strings")
        if self.description is not None and not isinstance(self.description, str):
            raise ValueError("description must be a string")
        if self.succeeded is not None and not isinstance(self.succeeded, bool):
            raise ValueError("succeeded must be a boolean")

    def to_dict(self) -> dict:
        d = {"kind": "task", "task_id": self.task_id, "model_id": self.model_id}
        if self.description is not None:
            d["description"] = self.description
        if self.succeeded is not None:
            d["succeeded"] = self.succeeded
        return d


@dataclass(frozen=True)
class SkippedLine:
    line_no: int
    reason: str


@dataclass(frozen=True)
class TraceSet:
    calls: tuple[LLMCall, ...] = ()
    tasks: tuple[TaskRecord, ...] = ()
    # Lenient ingestion only; not part of equality.
    skipped: tuple[SkippedLine, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "calls", tuple(self.calls))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "skipped", tuple(self.skipped))

    def trajectories(self) -> dict[tuple[str, str], list[LLMCall]]:
        """Calls grouped by (task_id, model_id), each ordered by seq."""
        groups: dict[tuple[str, str], list[LLMCall]] = defaultdict(list)
        for call in self.calls:
            groups[(call.task_id, call.model_id)].append(call)
        return {key: sorted(calls, key=lambda c: c.seq) for key, calls in groups.items()}


@dataclass(frozen=True)
class IntegrityViolation:
    code: str
    ids: tuple[str, ...]
    level: str = "error"

    def __str__(self):
        return f"{self.level}: {self.code}({', '.join(self.ids)})"


def _parse_call(obj: dict) -> LLMCall:
    for name in _CALL_FIELDS:
        if name not in obj:
            raise ValueError(f"missing field {name!r}")
    unknown = set(obj) - set(_CALL_FIELDS) - {"kind", "timestamp"}
    if unknown:
        raise ValueError(f"unknown fields {sorted(unknown)}")
    return LLMCall(**{k: v for k, v in obj.items() if k != "kind"})


def _parse_task(obj: dict) -> TaskRecord:
    for name in _TASK_FIELDS:
        if name not in obj:
            raise ValueError(f"missing field {name!r}")
    unknown = set(obj) - {"kind", "task_id", "model_id", "description", "succeeded"}
    if unknown:
        raise ValueError(f"unknown fields {sorted(unknown)}")
    return TaskRecord(**{k: v for k, v in obj.items() if k != "kind"})


def parse_trace_file(data: bytes, *, strict: bool = True) -> TraceSet:
    """Parse a JSON-Lines trace.

    In strict mode the first problem raises. In lenient mode offending lines
    are dropped and listed in ``TraceSet.skipped`` so the result still
    satisfies every trace invariant.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NotUtf8(f"trace is not valid UTF-8 (byte offset {exc.start})") from None

    skipped: list[SkippedLine] = []

    def reject(err: TraceError, line_no: int, reason: str):
        if strict:
            raise err
        logger.warning("skipping line %d: %s", line_no, reason)
        skipped.append(SkippedLine(line_no, reason))

    calls: list[tuple[int, LLMCall]] = []
    tasks: list[TaskRecord] = []
    seen_tasks: set[tuple[str, str]] = set()
    seen_calls: set[str] = set()
    last_seq: dict[tuple[str, str], int] = {}

    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
            kind = obj.get("kind")
            if kind == "call":
                record = _parse_call(obj)
            elif kind == "task":
                record = _parse_task(obj)
            else:
                raise ValueError(f"unknown kind {kind!r}")
        except (ValueError, TypeError) as exc:
            reject(MalformedLine(line_no, str(exc)), line_no, str(exc))
            continue

        if isinstance(record, TaskRecord):
            key = (record.task_id, record.model_id)
            if key in seen_tasks:
                reason = f"duplicate task {record.task_id!r} for model {record.model_id!r}"
                reject(MalformedLine(line_no, reason), line_no, reason)
                continue
            seen_tasks.add(key)
            tasks.append(record)
            continue

        if record.call_id in seen_calls:
            reject(DuplicateCallId(record.call_id, line_no), line_no, f"duplicate call_id {record.call_id!r}")
            continue
        traj = (record.task_id, record.model_id)
        if traj in last_seq and record.seq <= last_seq[traj]:
            reason = f"seq {record.seq} does not increase within task {record.task_id!r}"
            reject(MalformedLine(line_no, reason), line_no, reason)
            continue
        seen_calls.add(record.call_id)
        last_seq[traj] = record.seq
        calls.append((line_no, record))

    # Task lines may follow the calls that reference them.
    known = {t.task_id for t in tasks}
    kept = []
    for line_no, call in calls:
        if call.task_id not in known:
            reject(UnknownTaskId(call.task_id, line_no), line_no, f"unknown task_id {call.task_id!r}")
            continue
        kept.append(call)

    skipped.sort(key=lambda s: s.line_no)
    return TraceSet(tuple(kept), tuple(tasks), tuple(skipped))


def serialize_trace_set(ts: TraceSet) -> bytes:
    """Tasks first, then calls, one compact JSON object per line."""
    lines = [json.dumps(t.to_dict(), ensure_ascii=False) for t in ts.tasks]
    lines += [json.dumps(c.to_dict(), ensure_ascii=False) for c in ts.calls]
    return "".join(line + "\n" for line in lines).encode("utf-8")


def validate_trace_set(ts: TraceSet) -> list[IntegrityViolation]:
    violations: list[IntegrityViolation] = []

    seen: set[str] = set()
    for call in ts.calls:
        if call.call_id in seen:
            violations.append(IntegrityViolation("DuplicateCallId", (call.call_id,)))
        seen.add(call.call_id)

    task_ids = {t.task_id for t in ts.tasks}
    for call in ts.calls:
        if call.task_id not in task_ids:
            violations.append(IntegrityViolation("UnknownTaskId", (call.task_id,)))

    task_keys: set[tuple[str, str]] = set()
    for task in ts.tasks:
        key = (task.task_id, task.model_id)
        if key in task_keys:
            violations.append(IntegrityViolation("DuplicateTask", key))
        task_keys.add(key)

    last: dict[tuple[str, str], LLMCall] = {}
    for call in ts.calls:
        traj = (call.task_id, call.model_id)
        prev = last.get(traj)
        if prev is not None and call.seq <= prev.seq:
            violations.append(IntegrityViolation("NonIncreasingSeq", (prev.call_id, call.call_id)))
        last[traj] = call

    for call in ts.calls:
        empty = [n for n in ("system_prompt", "user_input", "output") if not getattr(call, n)]
        if empty:
            violations.append(IntegrityViolation("EmptyCallText", (call.call_id, *empty), level="warning"))
    return violations


def trace_from_records(records: Iterable[LLMCall | TaskRecord]) -> TraceSet:
    records = list(records)
    calls = [r for r in records if isinstance(r, LLMCall)]
    tasks = [r for r in records if isinstance(r, TaskRecord)]
    return TraceSet(tuple(calls), tuple(tasks))
