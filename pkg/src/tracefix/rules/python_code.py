"""Python code segment detection and syntax validation.

The segment detector is deliberately conservative: it scores lines with a
small weight table, penalizes JSON and prose, and only reports Python when
the score clears a threshold across at least two independent pattern
categories. The syntax checker refuses to run on text the detector rejected.
"""

from __future__ import annotations

import ast
import json
import re
import textwrap
import warnings
from dataclasses import dataclass

from ..findings import Finding
from ..taxonomy import TOOL_PYTHON_SYNTAX, IssueKind


class GateViolation(RuntimeError):
    """check_python_syntax was called on text that is not gated as Python."""


@dataclass(frozen=True)
class SegmentWeights:
    definition: int = 3
    block: int = 2
    assignment_call: int = 1
    json_line: int = -2
    prose_line: int = -1
    threshold: int = 5
    min_categories: int = 2


DEFAULT_WEIGHTS = SegmentWeights()


@dataclass(frozen=True)
class SegmentResult:
    is_python: bool
    spans: tuple[tuple[int, int], ...]
    score: float
    categories: frozenset[str] = frozenset()


_DEFINITION = re.compile(
    r"""^\s*(?:
        (?:async\s+)?def\s+[A-Za-z_]\w*\s*\(
      | class\s+[A-Za-z_]\w*\s*[(:]
      | import\s+[A-Za-z_][\w.]*(?:\s+as\s+\w+)?(?:\s*,\s*[A-Za-z_][\w.]*)*\s*$
      | from\s+\.*[A-Za-z_][\w.]*\s+import\s+
      | return(?:\s|$)
      | @[A-Za-z_][\w.]*(?:\(.*\))?\s*$
    )""",
    re.VERBOSE,
)
_BLOCK_HEADER = re.compile(
    r"^\s*(?:if|elif|else|for|while|try|except|finally|with|def|class|async|match|case)\b.*:\s*(?:#.*)?$"
)
_ASSIGN_CALL = re.compile(r"^\s*[A-Za-z_][\w.]*(?:\s*,\s*[A-Za-z_][\w.]*)*\s*=\s*[A-Za-z_][\w.]*\s*\(")
# Statement shapes that keep a span going without scoring on their own.
_STATEMENT = re.compile(
    r"""^\s*(?:
        (?:if|elif|while|for|with|except|assert|raise|del|global|nonlocal|yield|await|print)\b
      | (?:else|try|finally|pass|break|continue)\b
      | [A-Za-z_][\w.\[\]'"]*\s*(?:[-+*/%&|^]|//|\*\*|>>|<<)?=(?!=)
      | [A-Za-z_][\w.]*\s*\(
      | [)\]}]
      | \#
    )""",
    re.VERBOSE,
)
_CODE_TOKEN = re.compile(r"[()\[\]{}=]|^\s*#|\b(?:def|class|import|return|lambda|self)\b|[A-Za-z_]\w*\.[A-Za-z_]\w*\(")
_SENTENCE_END = re.compile(r"[.!?][\"')\]]*\s*$")
_FENCE = re.compile(r"^```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)^```[ \t]*$", re.MULTILINE | re.DOTALL)
_PY_FENCE_LANGS = {"", "python", "py", "python3"}


def _json_spans(text: str) -> list[tuple[int, int]]:
    """Top-level {...} / [...] spans that parse as JSON."""
    spans = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in "{[":
            end = _match_bracket(text, i)
            if end is not None:
                try:
                    json.loads(text[i:end])
                except ValueError:
                    pass
                else:
                    spans.append((i, end))
                    i = end
                    continue
        i += 1
    return spans


def _match_bracket(text: str, start: int) -> int | None:
    depth = 0
    in_str = False
    escaped = False
    for j in range(start, len(text)):
        ch = text[j]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                return j + 1
    return None


def _lines_with_offsets(text: str, base: int = 0) -> list[tuple[int, str]]:
    out = []
    pos = 0
    for line in text.splitlines(keepends=True):
        out.append((base + pos, line.rstrip("\r\n")))
        pos += len(line)
    return out


def _indent(line: str) -> int:
    return len(line) - len(line.lstrip(" \t"))


def _score_region(
    text: str, base: int, weights: SegmentWeights, json_spans: list[tuple[int, int]]
) -> tuple[float, set[str], list[tuple[int, int]]]:
    lines = _lines_with_offsets(text, base)
    score = 0.0
    categories: set[str] = set()
    codeish = [False] * len(lines)

    def in_json(offset: int, line: str) -> bool:
        start = offset + _indent(line)
        end = offset + len(line.rstrip())
        return any(s <= start and end <= e for s, e in json_spans)

    for idx, (offset, line) in enumerate(lines):
        if not line.strip():
            continue
        if in_json(offset, line):
            score += weights.json_line
            continue
        if _DEFINITION.match(line):
            score += weights.definition
            categories.add("definition")
            codeish[idx] = True
        if _BLOCK_HEADER.match(line):
            nxt = next((l for _, l in lines[idx + 1:] if l.strip()), None)
            if nxt is not None and _indent(nxt) > _indent(line):
                score += weights.block
                categories.add("block")
            codeish[idx] = True
        if _ASSIGN_CALL.match(line):
            score += weights.assignment_call
            categories.add("assignment")
            codeish[idx] = True
        if not codeish[idx] and _STATEMENT.match(line):
            codeish[idx] = True
        if not codeish[idx] and _SENTENCE_END.search(line) and not _CODE_TOKEN.search(line):
            score += weights.prose_line

    # Indented lines under a code line belong to it.
    for idx, (_, line) in enumerate(lines):
        if codeish[idx] or not line.strip():
            continue
        prev = next((j for j in range(idx - 1, -1, -1) if lines[j][1].strip()), None)
        if prev is not None and codeish[prev] and _indent(line) > 0:
            codeish[idx] = True

    spans = []
    start = end = None
    for idx, (offset, line) in enumerate(lines):
        if codeish[idx]:
            if start is None:
                start = offset
            end = offset + len(line)
        elif line.strip() and start is not None:
            spans.append((start, end))
            start = None
    if start is not None:
        spans.append((start, end))
    return score, categories, spans


def detect_python_segment(text: str, weights: SegmentWeights = DEFAULT_WEIGHTS) -> SegmentResult:
    fences = [m for m in _FENCE.finditer(text) if m.group(1).lower() in _PY_FENCE_LANGS]
    if fences:
        regions = [(m.start(2), m.group(2)) for m in fences]
    else:
        regions = [(0, text)]

    json_spans = _json_spans(text)
    score = 0.0
    categories: set[str] = set()
    spans: list[tuple[int, int]] = []
    for base, region in regions:
        s, cats, sp = _score_region(region, base, weights, json_spans)
        score += s
        categories |= cats
        spans.extend(sp)

    is_python = score >= weights.threshold and len(categories) >= weights.min_categories and bool(spans)
    return SegmentResult(is_python, tuple(spans) if is_python else (), score, frozenset(categories))


_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {v: k for k, v in _OPENERS.items()}
_STR_PREFIX = re.compile(r"(?i)(?:rb|br|fr|rf|r|b|f|u)?$")


def structural_issues(code: str) -> list[tuple[int, str]]:
    """Bracket balance and string termination, independent of the parser.

    Returns (line, message) pairs, 1-based lines relative to ``code``.
    """
    issues: list[tuple[int, str]] = []
    stack: list[tuple[str, int]] = []
    i = 0
    line = 1
    n = len(code)
    while i < n:
        ch = code[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch == "#":
            while i < n and code[i] != "\n":
                i += 1
        elif ch == "\\" and i + 1 < n and code[i + 1] == "\n":
            i += 2
            line += 1
        elif ch in "'\"":
            start_line = line
            quote = code[i:i + 3] if code[i:i + 3] in ("'''", '"""') else ch
            i += len(quote)
            raw = bool(re.search(r"(?i)r[bf]?$|[bf]r$", _prefix_before(code, i - len(quote))))
            closed = False
            while i < n:
                c = code[i]
                if c == "\\" and not raw:
                    if i + 1 < n and code[i + 1] == "\n":
                        line += 1
                    i += 2
                    continue
                if c == "\\" and raw:
                    i += 2 if i + 1 < n and code[i + 1] in (quote[0], "\\") else 1
                    continue
                if code.startswith(quote, i):
                    i += len(quote)
                    closed = True
                    break
                if c == "\n":
                    if len(quote) == 1:
                        break
                    line += 1
                i += 1
            if not closed:
                issues.append((start_line, f"unterminated string starting with {quote}"))
        elif ch in _OPENERS:
            stack.append((ch, line))
            i += 1
        elif ch in _CLOSERS:
            if stack and stack[-1][0] == _CLOSERS[ch]:
                stack.pop()
            elif stack:
                opener, at = stack.pop()
                issues.append((line, f"mismatched {ch!r} closes {opener!r} from line {at}"))
            else:
                issues.append((line, f"unbalanced {ch!r}"))
            i += 1
        else:
            i += 1
    for opener, at in stack:
        issues.append((at, f"unbalanced {opener!r}"))
    issues.sort(key=lambda x: x[0])
    return issues


def _prefix_before(code: str, quote_at: int) -> str:
    j = quote_at
    while j > 0 and code[j - 1].isalpha() and quote_at - j < 2:
        j -= 1
    prefix = code[j:quote_at]
    if j > 0 and (code[j - 1].isalnum() or code[j - 1] == "_"):
        return ""
    return prefix if _STR_PREFIX.match(prefix) else ""


def _parse_error(code: str) -> tuple[int, str] | None:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            ast.parse(code)
        except SyntaxError as exc:
            return exc.lineno or 1, exc.msg
        except ValueError as exc:  # e.g. NUL bytes
            return 1, str(exc)
    return None


def check_python_syntax(text: str, weights: SegmentWeights = DEFAULT_WEIGHTS) -> Finding | None:
    seg = detect_python_segment(text, weights)
    if not seg.is_python:
        raise GateViolation("syntax check requested on text not detected as Python")

    # Line-based spans can split a multi-line string; accept if the whole region parses.
    whole = textwrap.dedent(text[seg.spans[0][0]:seg.spans[-1][1]])
    if len(seg.spans) > 1 and _parse_error(whole) is None and not structural_issues(whole):
        return None

    problems = []
    for start, end in seg.spans:
        first_line = text.count("\n", 0, start) + 1
        code = textwrap.dedent(text[start:end])
        parse = _parse_error(code)
        structural = structural_issues(code)
        if parse is None and not structural:
            continue
        # Structural messages are more specific than the parser's; prefer them on ties.
        candidates = structural[:1] + ([parse] if parse else [])
        line, reason = min(candidates, key=lambda c: c[0])
        problems.append(
            {
                "line": first_line + line - 1,
                "reason": reason,
                "parser": parse[1] if parse else None,
                "structural": [msg for _, msg in structural],
                "span": [start, end],
            }
        )

    if not problems:
        return None
    first = problems[0]
    return Finding(
        call_id="",
        agent="",
        tool=TOOL_PYTHON_SYNTAX,
        issue=IssueKind.PYTHON_SYNTAX_ERROR,
        violated=True,
        reasoning=f"Python syntax error at line {first['line']}: {first['reason']}",
        evidence={"line": first["line"], "reason": first["reason"], "errors": problems},
    )
