"""Edit distance and normalized similarity."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalize(text: str) -> str:
    """Case-fold and collapse whitespace runs to a single space."""
    return _WS.sub(" ", text).strip().casefold()


def similarity(a: str, b: str) -> float:
    """1 - distance / max length over normalized strings; 1.0 for two empties."""
    a, b = normalize(a), normalize(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest
