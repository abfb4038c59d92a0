"""Recover a schema-valid JSON object from free-form model text.

Strategies run in a fixed order and stop at the first success:

1. Strict     the whole text is a JSON object that validates.
2. Extracted  a fenced block or balanced ``{...}`` span parses and validates.
3. Repaired   a bounded set of rewrite rules turns a candidate into valid JSON.

Repairs never synthesize field values; they only fix syntax around what the
model already wrote.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

MAX_CANDIDATES = 8

FIELD_TYPES = ("boolean", "number", "string", "array-of-string", "object")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    type: str
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.type not in FIELD_TYPES:
            raise ValueError(f"unknown field type {self.type!r}")
        if self.bounds is not None and self.type != "number":
            raise ValueError("bounds are only allowed on number fields")


@dataclass(frozen=True)
class SchemaSpec:
    required: tuple[FieldSpec, ...] = ()
    optional: tuple[FieldSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "required", tuple(self.required))
        object.__setattr__(self, "optional", tuple(self.optional))
        names = [f.name for f in self.required + self.optional]
        if len(names) != len(set(names)):
            raise ValueError("schema field names must be unique")

    @property
    def fields(self) -> tuple[FieldSpec, ...]:
        return self.required + self.optional

    def describe(self) -> str:
        """Compact human-readable rendering for prompts."""
        parts = []
        for f in self.fields:
            opt = "" if f in self.required else "?"
            bounds = f" in [{f.bounds[0]:g}, {f.bounds[1]:g}]" if f.bounds else ""
            parts.append(f'"{f.name}"{opt}: {f.type}{bounds}')
        return "{" + ", ".join(parts) + "}"


@dataclass(frozen=True)
class SchemaViolation:
    code: str  # NotAnObject | MissingField | WrongType | OutOfBounds
    field: str = ""
    message: str = ""


def _type_ok(value: Any, kind: str) -> bool:
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "string":
        return isinstance(value, str)
    if kind == "array-of-string":
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    return isinstance(value, dict)


def validate_against_schema(value: Any, schema: SchemaSpec) -> list[SchemaViolation]:
    if not isinstance(value, dict):
        return [SchemaViolation("NotAnObject", message=f"expected object, got {type(value).__name__}")]
    out = []
    for spec in schema.fields:
        required = spec in schema.required
        if spec.name not in value or (value[spec.name] is None and not required):
            if required:
                out.append(SchemaViolation("MissingField", spec.name, f"missing field {spec.name!r}"))
            continue
        v = value[spec.name]
        if not _type_ok(v, spec.type):
            out.append(SchemaViolation("WrongType", spec.name, f"{spec.name!r} should be {spec.type}"))
        elif spec.bounds is not None and not spec.bounds[0] <= v <= spec.bounds[1]:
            out.append(
                SchemaViolation("OutOfBounds", spec.name, f"{spec.name!r}={v} outside [{spec.bounds[0]}, {spec.bounds[1]}]")
            )
    return out


def schema_warnings(value: Any, schema: SchemaSpec) -> list[str]:
    if not isinstance(value, dict):
        return []
    known = {f.name for f in schema.fields}
    return [f"extra field {k!r}" for k in value if k not in known]


class Stage(str, Enum):
    STRICT = "Strict"
    EXTRACTED = "Extracted"
    REPAIRED = "Repaired"
    FAILED = "Failed"


@dataclass(frozen=True)
class Attempt:
    stage: Stage
    outcome: str  # ok | parse-error | schema-error | unrepairable
    detail: str = ""


@dataclass
class CascadeReport:
    stage_used: Stage = Stage.FAILED
    attempts: list[Attempt] = field(default_factory=list)
    repairs: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stage_used": self.stage_used.value,
            "attempts": [{"stage": a.stage.value, "outcome": a.outcome, "detail": a.detail} for a in self.attempts],
            "repairs": list(self.repairs),
        }


class CascadeExhausted(Exception):
    def __init__(self, report: CascadeReport):
        last = report.attempts[-1].detail if report.attempts else "empty input"
        super().__init__(f"no parsing strategy recovered a valid object ({last})")
        self.report = report


_FENCE = re.compile(r"```[ \t]*[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)```", re.DOTALL)


def _brace_spans(text: str) -> list[str]:
    """Maximal balanced {...} spans, skipping over double-quoted strings."""
    spans = []
    i = 0
    n = len(text)
    while i < n:
        if text[i] != "{":
            i += 1
            continue
        depth = 0
        in_str = escaped = False
        end = None
        for j in range(i, n):
            ch = text[j]
            if in_str:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = j + 1
                    break
        if end is None:
            i += 1
            continue
        spans.append(text[i:end])
        i = end
    return spans


def extract_candidate_blocks(text: str) -> list[str]:
    """Fenced code blocks first, then balanced brace spans; deduplicated."""
    out: list[str] = []
    for m in _FENCE.finditer(text):
        block = m.group(1).strip()
        if block and block not in out:
            out.append(block)
    for span in _brace_spans(text):
        if span not in out:
            out.append(span)
    return out


# --- repair ---------------------------------------------------------------

REPAIR_RULES = (
    "TrailingComma",
    "SingleQuotes",
    "BareKeys",
    "PythonLiterals",
    "UnterminatedString",
    "BalanceBrackets",
)

_PY_LITERALS = {"True": "true", "False": "false", "None": "null"}
_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*\Z")


@dataclass(frozen=True)
class Repair:
    text: str
    rules: tuple[str, ...]


def _tokenize(text: str) -> tuple[list[list[str]], bool]:
    """Split into [kind, text] tokens; kinds: ws, str, punct, word.

    Returns the tokens and whether the final string was left open.
    """
    tokens: list[list[str]] = []
    i = 0
    n = len(text)
    unterminated = False
    while i < n:
        ch = text[i]
        if ch.isspace():
            j = i
            while j < n and text[j].isspace():
                j += 1
            tokens.append(["ws", text[i:j]])
            i = j
        elif ch in "\"'":
            j = i + 1
            while j < n and text[j] != ch:
                j += 2 if text[j] == "\\" else 1
            if j >= n:
                unterminated = True
                tokens.append(["str", text[i:]])
                i = n
            else:
                tokens.append(["str", text[i : j + 1]])
                i = j + 1
        elif ch in "{}[]:,":
            tokens.append(["punct", ch])
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "{}[]:,\"'":
                j += 1
            tokens.append(["word", text[i:j]])
            i = j
    return tokens, unterminated


def _requote(token: str, closed: bool) -> str:
    """Turn a single-quoted literal into a double-quoted JSON string."""
    body = token[1:-1] if closed else token[1:]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            out.append("'" if nxt == "'" else c + nxt)
            i += 2
            continue
        out.append('\\"' if c == '"' else c)
        i += 1
    return '"' + "".join(out) + '"'


def repair_json(text: str) -> Repair | None:
    """Apply the closed rule list; return the result only if it parses."""
    tokens, unterminated = _tokenize(text)
    applied: set[str] = set()

    if unterminated:
        last = tokens[-1]
        if last[1][0] == "'":
            last[1] = _requote(last[1], closed=False)
            applied.add("SingleQuotes")
        else:
            last[1] = last[1] + '"'
        applied.add("UnterminatedString")

    for tok in tokens:
        if tok[0] == "str" and tok[1][0] == "'" and len(tok[1]) >= 2:
            tok[1] = _requote(tok[1], closed=True)
            applied.add("SingleQuotes")

    sig = [t for t in tokens if t[0] != "ws"]
    stack: list[str] = []
    for k, tok in enumerate(sig):
        kind, val = tok
        if kind == "punct":
            if val in "{[":
                stack.append(val)
            elif val in "}]" and stack:
                stack.pop()
            continue
        if kind != "word":
            continue
        prev = sig[k - 1][1] if k else ""
        nxt = sig[k + 1][1] if k + 1 < len(sig) else ""
        if stack and stack[-1] == "{" and prev in ("{", ",") and nxt == ":" and _IDENT.match(val):
            tok[1] = json.dumps(val)
            tok[0] = "str"
            applied.add("BareKeys")
        elif val in _PY_LITERALS:
            tok[1] = _PY_LITERALS[val]
            applied.add("PythonLiterals")

    if stack:
        closers = "".join("}" if b == "{" else "]" for b in reversed(stack))
        tokens.append(["punct", closers])
        applied.add("BalanceBrackets")

    # Trailing commas last, so commas exposed by appended closers go too.
    flat = [t for t in tokens]
    result: list[str] = []
    for idx, (kind, val) in enumerate(flat):
        if kind == "punct" and val == ",":
            rest = next((t for t in flat[idx + 1 :] if t[0] != "ws"), None)
            if rest is not None and rest[0] == "punct" and rest[1][0] in "}]":
                applied.add("TrailingComma")
                continue
        result.append(val)

    repaired = "".join(result)
    try:
        json.loads(repaired)
    except ValueError:
        return None
    return Repair(repaired, tuple(r for r in REPAIR_RULES if r in applied))


# --- cascade --------------------------------------------------------------

Extension = Callable[[str, SchemaSpec], Any]


def _check(candidate: str, schema: SchemaSpec) -> tuple[Any, str, str]:
    """(value or None, outcome, detail)."""
    try:
        value = json.loads(candidate)
    except ValueError as exc:
        return None, "parse-error", str(exc)
    problems = validate_against_schema(value, schema)
    if problems:
        return None, "schema-error", "; ".join(p.message for p in problems)
    return value, "ok", ""


def _repair_candidates(text: str, blocks: list[str]) -> list[str]:
    out = list(blocks)
    first = text.find("{")
    if first >= 0:
        tail = text[first:]
        fence_end = tail.find("```")
        if fence_end >= 0:
            tail = tail[:fence_end]
        out.append(tail.strip())
    out.append(text.strip())
    seen: list[str] = []
    for c in out:
        if c and c not in seen:
            seen.append(c)
    return seen[: MAX_CANDIDATES + 2]


def parse_structured(
    text: str, schema: SchemaSpec, *, extensions: Sequence[Extension] = ()
) -> tuple[Any, CascadeReport]:
    """Run the cascade; raise CascadeExhausted with the full report on failure.

    ``extensions`` are optional last-resort strategies (for instance, feeding
    a failure back to an executor). Each receives the raw text and schema and
    returns a candidate value or None. None are enabled by default.
    """
    report = CascadeReport()

    value, outcome, detail = _check(text, schema)
    report.attempts.append(Attempt(Stage.STRICT, outcome, detail))
    if outcome == "ok":
        report.stage_used = Stage.STRICT
        report.warnings = schema_warnings(value, schema)
        return value, report

    blocks = extract_candidate_blocks(text)[:MAX_CANDIDATES]
    for block in blocks:
        value, outcome, detail = _check(block, schema)
        report.attempts.append(Attempt(Stage.EXTRACTED, outcome, detail))
        if outcome == "ok":
            report.stage_used = Stage.EXTRACTED
            report.warnings = schema_warnings(value, schema)
            return value, report
    if not blocks:
        report.attempts.append(Attempt(Stage.EXTRACTED, "no-candidates"))

    for candidate in _repair_candidates(text, blocks):
        fixed = repair_json(candidate)
        if fixed is None:
            report.attempts.append(Attempt(Stage.REPAIRED, "unrepairable", candidate[:60]))
            continue
        value, outcome, detail = _check(fixed.text, schema)
        report.attempts.append(Attempt(Stage.REPAIRED, outcome, detail or ",".join(fixed.rules)))
        if outcome == "ok":
            report.stage_used = Stage.REPAIRED
            report.repairs = list(fixed.rules)
            report.warnings = schema_warnings(value, schema)
            return value, report

    for ext in extensions:
        name = getattr(ext, "__name__", "extension")
        candidate = ext(text, schema)
        if candidate is None or validate_against_schema(candidate, schema):
            report.attempts.append(Attempt(Stage.REPAIRED, "extension-failed", name))
            continue
        report.attempts.append(Attempt(Stage.REPAIRED, "ok", name))
        report.stage_used = Stage.REPAIRED
        report.repairs = [f"Extension:{name}"]
        return candidate, report

    raise CascadeExhausted(report)
