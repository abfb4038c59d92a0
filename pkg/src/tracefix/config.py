"""Engine configuration: flat key=value files, env overrides, CLI overrides.

Precedence is CLI > environment > file > default. Environment overrides use
the key upper-cased with dots replaced by underscores and a ``TRACEFIX_``
prefix, e.g. ``TRACEFIX_JUDGE_MODEL``. The judge secret is never a config key;
it is read from ``JUDGE_API_KEY`` only.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .judge.client import API_KEY_ENV, JudgeParams
from .judge.tools import JudgeToolKind
from .reporting import RankWeights
from .rootcause import BUDGET_FLOOR, DEFAULT_BUDGET, DEFAULT_EXEMPLARS
from .rules.consistency import ConsistencyParams
from .rules.python_code import SegmentWeights
from .rules.suite import RuleParams
from .rules.tokens import RepetitionThresholds

ENV_PREFIX = "TRACEFIX_"
JUDGE_MODES = ("live", "mock", "off")


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_in(lo: int | None = None, hi: int | None = None) -> Callable[[str], int]:
    def conv(text: str) -> int:
        v = int(text.strip())
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ValueError(f"{v} is outside [{lo if lo is not None else '-inf'}, {hi if hi is not None else 'inf'}]")
        return v

    return conv


def _float_in(lo: float, hi: float | None = None, *, open_lo: bool = False) -> Callable[[str], float]:
    def conv(text: str) -> float:
        v = float(text.strip())
        bad_lo = v <= lo if open_lo else v < lo
        if bad_lo or (hi is not None and v > hi) or v != v:
            raise ValueError(f"{v} is outside the allowed range")
        return v

    return conv


def _mode(text: str) -> str:
    v = text.strip()
    if v not in JUDGE_MODES:
        raise ValueError(f"judge mode must be one of {', '.join(JUDGE_MODES)}")
    return v


def _tools(text: str) -> tuple[JudgeToolKind, ...]:
    v = text.strip()
    if v in ("", "all"):
        return tuple(JudgeToolKind)
    if v == "none":
        return ()
    wanted = []
    for name in v.split(","):
        name = name.strip()
        try:
            wanted.append(JudgeToolKind(name))
        except ValueError:
            raise ValueError(f"unknown judge tool {name!r}") from None
    return tuple(k for k in JudgeToolKind if k in wanted)


def _text(text: str) -> str:
    return text.strip()


# key -> (converter, default). Defaults are kept as text so the file, env and
# CLI paths all go through the same converter.
_KEYS: dict[str, tuple[Callable[[str], Any], str]] = {
    "judge.mode": (_mode, "off"),
    "judge.endpoint": (_text, "https://api.openai.com/v1/chat/completions"),
    "judge.model": (_text, "gpt-4o"),
    "judge.temperature": (_float_in(0.0, 2.0), "0.0"),
    "judge.max_tokens": (_int_in(1, 1_000_000), "1024"),
    "judge.timeout_s": (_float_in(0.0, 3600.0, open_lo=True), "60"),
    "judge.retries": (_int_in(0, 10), "2"),
    "judge.max_in_flight": (_int_in(1, 256), "4"),
    "judge.backoff_s": (_float_in(0.0, 60.0), "1.0"),
    "judge.mock_script": (_text, ""),
    "tools.enabled": (_tools, "all"),
    "rules.repetition.single": (_int_in(2), "30"),
    "rules.repetition.short": (_int_in(2), "10"),
    "rules.repetition.long": (_int_in(2), "5"),
    "rules.repetition.max_unit": (_int_in(1, 64), "16"),
    "rules.segment.definition": (_int_in(), "3"),
    "rules.segment.block": (_int_in(), "2"),
    "rules.segment.assignment_call": (_int_in(), "1"),
    "rules.segment.json_line": (_int_in(), "-2"),
    "rules.segment.prose_line": (_int_in(), "-1"),
    "rules.segment.threshold": (_int_in(1), "5"),
    "rules.segment.min_categories": (_int_in(1, 3), "2"),
    "rules.consistency.tau": (_float_in(0.0, 1.0, open_lo=True), "0.85"),
    "rules.consistency.max_value_len": (_int_in(1), "80"),
    "digest.budget": (_int_in(BUDGET_FLOOR), str(DEFAULT_BUDGET)),
    "digest.k": (_int_in(0, 50), str(DEFAULT_EXEMPLARS)),
    "rank.critical": (_int_in(0), "5"),
    "rank.moderate": (_int_in(0), "2"),
    "rank.minor": (_int_in(0), "1"),
    "bottleneck.min_evaluated": (_int_in(1), "5"),
    "ingest.strict": (_bool, "true"),
    "workers": (_int_in(1, 256), "4"),
    "output.report": (_text, "report.json"),
    "output.html": (_text, "dashboard.html"),
}

# Output locations do not change what is computed, so they stay out of the hash.
_UNHASHED = {"output.report", "output.html"}

KNOWN_KEYS = tuple(_KEYS)


def env_name(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "_")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse a flat ``key=value`` file. ``#`` starts a comment line."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


@dataclass(frozen=True)
class EngineConfig:
    values: Mapping[str, Any]
    origins: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def judge_mode(self) -> str:
        return self.values["judge.mode"]

    @property
    def judge_params(self) -> JudgeParams:
        v = self.values
        return JudgeParams(model=v["judge.model"], temperature=v["judge.temperature"], max_tokens=v["judge.max_tokens"])

    @property
    def enabled_tools(self) -> tuple[JudgeToolKind, ...]:
        return self.values["tools.enabled"]

    @property
    def rule_params(self) -> RuleParams:
        v = self.values
        return RuleParams(
            repetition=RepetitionThresholds(
                single=v["rules.repetition.single"],
                short=v["rules.repetition.short"],
                long=v["rules.repetition.long"],
                max_unit=v["rules.repetition.max_unit"],
            ),
            segment=SegmentWeights(
                definition=v["rules.segment.definition"],
                block=v["rules.segment.block"],
                assignment_call=v["rules.segment.assignment_call"],
                json_line=v["rules.segment.json_line"],
                prose_line=v["rules.segment.prose_line"],
                threshold=v["rules.segment.threshold"],
                min_categories=v["rules.segment.min_categories"],
            ),
            consistency=ConsistencyParams(tau=v["rules.consistency.tau"], max_value_len=v["rules.consistency.max_value_len"]),
        )

    @property
    def rank_weights(self) -> RankWeights:
        v = self.values
        return RankWeights(critical=v["rank.critical"], moderate=v["rank.moderate"], minor=v["rank.minor"])

    def canonical_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            if key in _UNHASHED:
                continue
            value = self.values[key]
            if key == "tools.enabled":
                value = ",".join(k.value for k in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


def load_config(
    path: str | Path | None = None,
    *,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, str] | None = None,
) -> EngineConfig:
    env = os.environ if env is None else env
    layers: list[tuple[str, Mapping[str, str]]] = [("default", {k: d for k, (_, d) in _KEYS.items()})]
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        except UnicodeDecodeError:
            raise ConfigError(f"config file {path} is not UTF-8") from None
        layers.append((f"file {path}", parse_config_text(text, str(path))))
    layers.append(("env", {k: env[env_name(k)] for k in _KEYS if env_name(k) in env}))
    for key in overrides or {}:
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
    layers.append(("cli", {k: v for k, v in (overrides or {}).items() if v is not None}))

    raw: dict[str, str] = {}
    origins: dict[str, str] = {}
    for origin, layer in layers:
        for k, v in layer.items():
            raw[k] = v
            origins[k] = origin

    values = {}
    for key, text in raw.items():
        conv = _KEYS[key][0]
        try:
            values[key] = conv(str(text))
        except ValueError as exc:
            where = origins[key] if origins[key] != "env" else f"env {env_name(key)}"
            raise ConfigError(f"{key} ({where}): {exc}") from None
    cfg = EngineConfig(values, origins)
    # Cross-field checks surface as ConfigError too.
    try:
        cfg.rule_params
        cfg.judge_params
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def api_key_from_env(env: Mapping[str, str] | None = None) -> str | None:
    env = os.environ if env is None else env
    return env.get(API_KEY_ENV) or None
