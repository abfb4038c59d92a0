"""Token-level anomaly detectors: odd codepoints and runaway repetition."""

from __future__ import annotations

import functools
import re
import unicodedata
from dataclasses import dataclass

from ..findings import Finding
from ..taxonomy import TOOL_TOKEN_ANOMALY, IssueKind

_ALLOWED_CONTROLS = {"\t", "\n", "\r"}
_ZERO_WIDTH = {"\u200b", "\u200c", "\u200d", "\ufeff"}
_ZERO_WIDTH_TOLERANCE = 2


def _is_anomalous(ch: str) -> bool:
    if ch in _ALLOWED_CONTROLS:
        return False
    if ch == "\ufffd":
        return True
    # Cc covers C0, DEL and C1; Cs lone surrogates; Co private use; Cn unassigned.
    return unicodedata.category(ch) in ("Cc", "Cs", "Co", "Cn")


def unusual_codepoints(text: str) -> list[str]:
    """Distinct anomalous codepoints in order of first appearance, as U+XXXX."""
    found: dict[str, None] = {}
    zero_width = 0
    for ch in text:
        if ch.isascii() and (ch.isprintable() or ch in _ALLOWED_CONTROLS):
            continue
        if ch in _ZERO_WIDTH:
            zero_width += 1
            continue
        if _is_anomalous(ch):
            found.setdefault(f"U+{ord(ch):04X}", None)
    if zero_width > _ZERO_WIDTH_TOLERANCE:
        for ch in text:
            if ch in _ZERO_WIDTH:
                found.setdefault(f"U+{ord(ch):04X}", None)
    return list(found)


def detect_unusual_tokens(text: str) -> Finding | None:
    codepoints = unusual_codepoints(text)
    if not codepoints:
        return None
    return Finding(
        call_id="",
        agent="",
        tool=TOOL_TOKEN_ANOMALY,
        issue=IssueKind.UNUSUAL_TOKEN,
        violated=True,
        reasoning="Output contains non-standard characters: " + ", ".join(codepoints[:10]),
        evidence={"codepoints": codepoints},
    )


@dataclass(frozen=True)
class RepetitionThresholds:
    """Minimum consecutive copies for a unit of length 1, 2-4 and 5-16."""

    single: int = 30
    short: int = 10
    long: int = 5
    max_unit: int = 16

    def __post_init__(self):
        for name in ("single", "short", "long"):
            if getattr(self, name) < 2:
                raise ValueError(f"repetition threshold {name} must be >= 2")
        if not 1 <= self.max_unit <= 64:
            raise ValueError("max_unit must be in [1, 64]")

    def copies_needed(self, unit_len: int) -> int:
        if unit_len == 1:
            return self.single
        if unit_len <= 4:
            return self.short
        return self.long


DEFAULT_REPETITION = RepetitionThresholds()


@functools.lru_cache(maxsize=32)
def _any_run_pattern(t: RepetitionThresholds) -> re.Pattern:
    parts = []
    for i, (lo, hi) in enumerate(((1, 1), (2, 4), (5, t.max_unit)), start=1):
        hi = min(hi, t.max_unit)
        if lo > hi:
            continue
        parts.append(f"(?P<u{i}>.{{{lo},{hi}}})(?P=u{i}){{{t.copies_needed(lo) - 1},}}")
    return re.compile("|".join(parts), re.DOTALL)


@functools.lru_cache(maxsize=1024)
def _unit_pattern(unit_len: int, copies: int) -> re.Pattern:
    return re.compile(f"(.{{{unit_len}}})\\1{{{copies - 1},}}", re.DOTALL)


def find_repetition(text: str, thresholds: RepetitionThresholds = DEFAULT_REPETITION) -> tuple[str, int] | None:
    """Shortest unit (then leftmost run) repeating at least its threshold.

    Returns (unit, consecutive copies) or None.
    """
    if _any_run_pattern(thresholds).search(text) is None:
        return None
    for unit_len in range(1, thresholds.max_unit + 1):
        m = _unit_pattern(unit_len, thresholds.copies_needed(unit_len)).search(text)
        if m:
            return m.group(1), len(m.group(0)) // unit_len
    raise AssertionError("combined and per-length patterns disagree")


def detect_token_repetition(text: str, thresholds: RepetitionThresholds = DEFAULT_REPETITION) -> Finding | None:
    hit = find_repetition(text, thresholds)
    if hit is None:
        return None
    unit, run = hit
    return Finding(
        call_id="",
        agent="",
        tool=TOOL_TOKEN_ANOMALY,
        issue=IssueKind.EXCESSIVE_REPETITION,
        violated=True,
        reasoning=f"Unit {unit!r} repeats {run} times consecutively",
        evidence={"unit": unit, "run": run},
    )
