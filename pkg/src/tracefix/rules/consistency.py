"""Cross-stage information consistency between a call's input and output."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..findings import Finding, MismatchEntry, MismatchReport, Relation
from ..taxonomy import TOOL_CONSISTENCY, IssueKind
from .fuzzy import normalize, similarity


@dataclass(frozen=True)
class ConsistencyParams:
    tau: float = 0.85
    max_value_len: int = 80

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.max_value_len < 1:
            raise ValueError("max_value_len must be positive")


DEFAULT_CONSISTENCY = ConsistencyParams()


@dataclass(frozen=True)
class Attribute:
    key: str
    value: str
    quoted: bool  # came from a "key": value JSON-style pair


_KEY = r"[A-Za-z_][A-Za-z0-9_]*"
_JSON_STRING = re.compile(rf'"({_KEY})"\s*:\s*"((?:[^"\\\n]|\\.)*)"')
_JSON_SCALAR = re.compile(rf'"({_KEY})"\s*:\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?|true|false|null)(?![\w.])')
_BARE = re.compile(rf"(?:^|(?<=[\s{{,;(]))({_KEY})[ \t]*(?::(?![:=/])|=(?!=))[ \t]*", re.MULTILINE)
_VALUE_CUT = re.compile(r"[,;\n]")


def _unescape(raw: str) -> str:
    try:
        return json.loads(f'"{raw}"')
    except ValueError:
        return raw


def extract_attributes(text: str, max_value_len: int = 80) -> list[Attribute]:
    """key/value pairs in order of appearance, duplicates removed."""
    found: list[tuple[int, Attribute]] = []
    for m in _JSON_STRING.finditer(text):
        found.append((m.start(), Attribute(m.group(1), _unescape(m.group(2)), True)))
    for m in _JSON_SCALAR.finditer(text):
        found.append((m.start(), Attribute(m.group(1), m.group(2), True)))

    bare = list(_BARE.finditer(text))
    for i, m in enumerate(bare):
        stop = bare[i + 1].start() if i + 1 < len(bare) else len(text)
        raw = text[m.end():stop]
        cut = _VALUE_CUT.search(raw)
        if cut:
            raw = raw[: cut.start()]
        value = raw.strip().rstrip(".").strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        if not value or value.startswith(("//", "{", "[")):
            continue
        found.append((m.start(), Attribute(m.group(1), value, False)))

    found.sort(key=lambda p: p[0])
    seen = set()
    out = []
    for _, attr in found:
        if len(attr.value) > max_value_len:
            continue
        key = (attr.key.lower(), attr.value)
        if key in seen:
            continue
        seen.add(key)
        out.append(attr)
    return out


def _mentions(text: str, word: str) -> bool:
    return re.search(rf"(?<![A-Za-z0-9_]){re.escape(word)}(?![A-Za-z0-9_])", text, re.IGNORECASE) is not None


def _classify(
    expected: str, observed: list[str], output: str, tau: float, structured: bool
) -> tuple[Relation, str] | None:
    norm_exp = normalize(expected)
    if any(normalize(o) == norm_exp for o in observed):
        return None
    if norm_exp and _mentions(normalize(output), norm_exp):
        return None
    if not observed:
        # Free prose or code need not echo input keys; only a structured
        # output that drops one is reported.
        return (Relation.MISSING, "") if structured else None
    best = max(observed, key=lambda o: similarity(expected, o))
    norm_obs = normalize(best)
    if norm_obs and len(norm_obs) < len(norm_exp) and similarity(norm_obs, norm_exp[: len(norm_obs)]) >= tau:
        return Relation.TRUNCATED, best
    return Relation.MODIFIED, best


def check_information_consistency(
    system_prompt: str, user_input: str, output: str, params: ConsistencyParams = DEFAULT_CONSISTENCY
) -> Finding | None:
    inputs = extract_attributes(user_input, params.max_value_len)
    outputs = extract_attributes(output, params.max_value_len)
    by_key: dict[str, list[str]] = {}
    for attr in outputs:
        by_key.setdefault(attr.key.lower(), []).append(attr.value)

    structured = any(a.quoted for a in outputs)
    entries: list[MismatchEntry] = []
    for attr in inputs:
        verdict = _classify(attr.value, by_key.get(attr.key.lower(), []), output, params.tau, structured)
        if verdict is not None:
            relation, observed = verdict
            entries.append(MismatchEntry(attr.key, attr.value, observed, relation))

    input_keys = {a.key.lower() for a in inputs}
    reported = set()
    for attr in outputs:
        low = attr.key.lower()
        if not attr.quoted or low in input_keys or low in reported:
            continue
        if _mentions(system_prompt, attr.key) or _mentions(user_input, attr.key):
            continue
        reported.add(low)
        entries.append(MismatchEntry(attr.key, "", attr.value, Relation.HALLUCINATED))

    if not entries:
        return None
    summary = "; ".join(f"{e.attribute}: {e.relation.value}" for e in entries[:8])
    return Finding(
        call_id="",
        agent="",
        tool=TOOL_CONSISTENCY,
        issue=IssueKind.INFORMATION_INCONSISTENCY,
        violated=True,
        reasoning=f"Output diverges from provided information ({summary})",
        detail=MismatchReport(tuple(entries)),
    )
