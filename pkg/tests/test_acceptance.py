"""Acceptance criteria 1-11. Each test records one PASS/FAIL line, printed at the end of the run."""

from __future__ import annotations

import contextlib
import json
import random
import time

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import ACCEPTANCE_LINES, CANARY_SECRET, EMITTED, chat_reply, run_cli
from factories import (
    VERDICT_SCHEMA,
    brute_force_pairs,
    cascade_corpus,
    matrix_trace,
    planted_corpus,
    random_findings,
    success_matrix,
)
from oracles import all_strings, decode, outcome_oracle, repetition_oracle
from tracefix.cascade import CascadeExhausted, Stage, parse_structured, repair_json
from tracefix.reporting import load_json_report, outcome_diff
from tracefix.rootcause import BUDGET_FLOOR, pair_success_failure, summarize_findings
from tracefix.rules import RepetitionThresholds, detect_python_segment, detect_token_repetition, run_rule_suite
from tracefix.taxonomy import Criticality, IssueKind, severity_of
from tracefix.trace import LLMCall


@contextlib.contextmanager
def criterion(n: int, title: str):
    detail: dict = {}
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE_LINES.append(f"criterion {n:2d} FAIL  {title}: {type(exc).__name__}: {str(exc)[:160]}")
        raise
    extra = f" ({detail['note']})" if detail.get("note") else ""
    ACCEPTANCE_LINES.append(f"criterion {n:2d} PASS  {title}{extra}")


# 1 -------------------------------------------------------------------------------


def test_c01_repetition_oracle_equivalence():
    with criterion(1, "token repetition agrees with exhaustive run-length oracle") as d:
        alphabet = "ab\n"
        started = time.perf_counter()
        cases = 0
        for thresholds in (RepetitionThresholds(), RepetitionThresholds(single=3, short=2, long=2)):
            for length in range(13):
                codes = all_strings(alphabet, length)
                flagged, unit_len, start, copies = repetition_oracle(codes, thresholds)
                for k in range(len(codes)):
                    text = decode(codes[k], alphabet)
                    got = detect_token_repetition(text, thresholds)
                    assert (got is not None) == bool(flagged[k]), repr(text)
                    if got is not None:
                        s, L = int(start[k]), int(unit_len[k])
                        assert got.evidence == {"unit": text[s : s + L], "run": int(copies[k])}, repr(text)
                    cases += 1
        elapsed = time.perf_counter() - started
        assert cases == 2 * sum(3**n for n in range(13))
        assert elapsed < 60, f"took {elapsed:.1f}s"
        d["note"] = f"{cases} cases over default and lowered thresholds in {elapsed:.1f}s"


# 2 -------------------------------------------------------------------------------


def test_c02_fault_injection_recall_and_precision():
    with criterion(2, "planted faults: 100% recall, 0 false positives on clean twins") as d:
        corpus = planted_corpus()
        assert len(corpus) == 200
        per_kind = {}
        missed, false_pos = [], []
        for kind, faulty, clean in corpus:
            per_kind[kind] = per_kind.get(kind, 0) + 1
            if kind not in {f.issue for f in run_rule_suite(faulty)}:
                missed.append(faulty.call_id)
            found = run_rule_suite(clean)
            if found:
                false_pos.append((clean.call_id, [f.issue.value for f in found]))
        assert set(per_kind.values()) == {50} and len(per_kind) == 4
        assert not missed, f"missed {missed[:5]}"
        assert not false_pos, f"false positives {false_pos[:5]}"
        d["note"] = "200/200 detected, 0/200 twins flagged"


# 3 -------------------------------------------------------------------------------


_json_scalar = st.one_of(st.booleans(), st.integers(-10**6, 10**6), st.text(max_size=20),
                         st.floats(allow_nan=False, allow_infinity=False))
verdict_objects = st.fixed_dictionaries(
    {"violated": st.booleans(), "reasoning": st.text(max_size=80), "recommendations": st.lists(st.text(max_size=30), max_size=3)},
    optional={"extra": st.recursive(_json_scalar, lambda inner: st.lists(inner, max_size=3), max_leaves=5)},
)


def test_c03_cascade_recovery():
    with criterion(3, "cascade recovers exactly the 40 recoverable samples; Strict idempotent; repairs parse") as d:
        recovered = 0
        for category, text, expected in cascade_corpus():
            try:
                value, report = parse_structured(text, VERDICT_SCHEMA)
            except CascadeExhausted:
                assert category == "unrepairable", f"{category} sample not recovered: {text[:80]!r}"
                continue
            assert category != "unrepairable", f"unrepairable sample recovered: {text[:80]!r}"
            assert value == expected
            assert report.stage_used is (Stage.EXTRACTED if category == "fenced" else Stage.REPAIRED)
            recovered += 1
        assert recovered == 40

        @settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
        @given(verdict_objects, st.sampled_from([None, 2]))
        def strict_idempotent(obj, indent):
            text = json.dumps(obj, indent=indent)
            value, report = parse_structured(text, VERDICT_SCHEMA)
            assert report.stage_used is Stage.STRICT
            assert value == obj

        @settings(max_examples=1000, deadline=None)
        @given(st.text(alphabet=st.sampled_from(list("{}[]\"':,.-0123456789 truefalsnNoeTF_xyz\n\\")), max_size=60))
        def repair_output_parses(text):
            fixed = repair_json(text)
            if fixed is not None:
                json.loads(fixed.text)

        strict_idempotent()
        repair_output_parses()
        d["note"] = "40/60 recovered, 1000 Strict round-trips, 1000 repair fuzz cases"


# 4 -------------------------------------------------------------------------------


_CODEISH = ["def f(x):", "    return x", "class A:", "import os", "x = g(1)", "if x:", "for i in y:",
            '{"a": 1}', "[1, 2]", "print(x", "@dec", "The end.", "```python", "```", "  ", "'unterminated",
            "lambda: (", "}", "pass", "return", "#", "Hello world.", "):"]


def _fuzz_texts(n: int, seed: int = 4):
    rng = random.Random(seed)
    for _ in range(n):
        mode = rng.random()
        if mode < 0.6:
            lines = [rng.choice(_CODEISH) for _ in range(rng.randint(0, 14))]
            # Occasionally corrupt a line.
            if lines and rng.random() < 0.5:
                i = rng.randrange(len(lines))
                cut = rng.randint(0, len(lines[i]))
                lines[i] = lines[i][:cut]
            yield "\n".join(lines)
        else:
            yield "".join(rng.choice("def():[]{}'\"\n =#abcx,.") for _ in range(rng.randint(0, 120)))


def test_c04_gating_invariant():
    with criterion(4, "no PythonSyntaxError when the segment detector is negative") as d:
        texts = 0
        gated_positive = 0
        syntax_errors = 0
        for text in _fuzz_texts(10_000):
            call = LLMCall("c", "t", 0, "A", "m", "sp", "ui", text)
            found = run_rule_suite(call)
            positive = detect_python_segment(text).is_python
            gated_positive += positive
            has_syntax = any(f.issue is IssueKind.PYTHON_SYNTAX_ERROR for f in found)
            syntax_errors += has_syntax
            assert not (has_syntax and not positive), repr(text)
            texts += 1

        @settings(max_examples=500, deadline=None)
        @given(st.text(max_size=200))
        def arbitrary(text):
            found = run_rule_suite(LLMCall("c", "t", 0, "A", "m", "", "", text))
            if any(f.issue is IssueKind.PYTHON_SYNTAX_ERROR for f in found):
                assert detect_python_segment(text).is_python

        arbitrary()
        assert texts >= 10_000 and gated_positive > 0 and syntax_errors > 0
        d["note"] = f"{texts} fuzz texts + 500 hypothesis texts; {gated_positive} gated, {syntax_errors} syntax findings"


# 5 -------------------------------------------------------------------------------

SEVERITY_TABLE = {
    "PythonSyntaxError": "Critical",
    "InputSchemaNonCompliance": "Critical",
    "OutputSchemaNonCompliance": "Critical",
    "ReasoningActionMismatch": "Moderate",
    "InputFormatViolation": "Moderate",
    "OutputFormatViolation": "Moderate",
    "InformationInconsistency": "Moderate",
    "InputInstructionsNonCompliance": "Minor",
    "OutputInstructionsNonCompliance": "Minor",
    "FewShotCoverageGap": "Minor",
    "UnusualToken": "Minor",
    "ExcessiveRepetition": "Minor",
    "MissingEdgeCaseInstructions": "Minor",
    "PromptInternalContradiction": "Minor",
    "PromptExampleMisalignment": "Minor",
}


def test_c05_severity_taxonomy():
    with criterion(5, "severity mapping reproduced for all 15 issue kinds"):
        assert len(IssueKind) == 15 == len(SEVERITY_TABLE)
        assert {k.value for k in IssueKind} == set(SEVERITY_TABLE)
        for name, level in SEVERITY_TABLE.items():
            assert severity_of(IssueKind(name)) is Criticality(level), name
        assert Criticality.MINOR < Criticality.MODERATE < Criticality.CRITICAL


# 6 -------------------------------------------------------------------------------


def test_c06_digest_conservation():
    with criterion(6, "digest keeps exact per-(agent, issue) counts and priority order") as d:
        rng = random.Random(6)
        budgets = (BUDGET_FLOOR, 8_000, 24_000, 10**6)
        sizes = [0, 1, 2000] + [min(2000, int(rng.paretovariate(0.8)) - 1) for _ in range(997)]
        truncations = 0
        for size in sizes:
            findings = random_findings(rng, size)
            expected: dict = {}
            for f in findings:
                if f.violated:
                    expected[(f.agent, f.issue)] = expected.get((f.agent, f.issue), 0) + 1
            for budget in budgets:
                digest = summarize_findings(findings, budget)
                got = {(g.agent, g.issue): g.count for g in digest.groups}
                assert got == expected
                assert sum(digest.totals.values()) == sum(expected.values())
                keys = [(-g.criticality.rank, -g.count, g.agent) for g in digest.groups]
                assert keys == sorted(keys)
                assert all(len(g.exemplars) <= 3 for g in digest.groups)
                assert len(digest.render()) <= budget or not any(g.exemplars for g in digest.groups)
                truncations += digest.truncated
        assert max(sizes) == 2000 and len(sizes) == 1000
        assert truncations > 0
        d["note"] = f"1000 multisets x 4 budgets, {truncations} truncated digests"


# 7 -------------------------------------------------------------------------------


def test_c07_outcome_diff_identities():
    with criterion(7, "outcome-diff identities; 204-task fixture gives {93, 10, 1}") as d:
        rng = random.Random(7)
        for _ in range(1000):
            ids = [f"t{i}" for i in range(rng.randint(0, 60))]
            before = {t: rng.random() < 0.5 for t in ids if rng.random() < 0.9}
            after = {t: rng.random() < 0.5 for t in ids if rng.random() < 0.9}
            diff = outcome_diff(before, after)
            common = before.keys() & after.keys()
            assert diff.preserved + diff.regressed == sum(before[t] for t in common)
            assert diff.improved + diff.still_failing == sum(not before[t] for t in common)
            assert {k: getattr(diff, k) for k in ("preserved", "improved", "regressed", "still_failing")} == outcome_oracle(before, after)
            assert set(diff.only_before) == before.keys() - after.keys()

        shape = [(True, True)] * 93 + [(False, True)] * 10 + [(True, False)] * 1
        shape += [(False, False)] * (204 - len(shape))
        random.Random(204).shuffle(shape)
        before = {f"task-{i:03d}": b for i, (b, _) in enumerate(shape)}
        after = {f"task-{i:03d}": a for i, (_, a) in enumerate(shape)}
        diff = outcome_diff(before, after)
        assert (diff.preserved, diff.improved, diff.regressed) == (93, 10, 1)
        assert diff.still_failing == 100
        d["note"] = "1000 random map pairs; fixture still_failing = 100"


# 8 -------------------------------------------------------------------------------


def test_c08_end_to_end_determinism(tmp_path, data_dir):
    with criterion(8, "validate (mock judge) and report are byte-identical across runs") as d:
        reports, pages = [], []
        for i in range(3):
            run_dir = tmp_path / f"run{i}"
            run_dir.mkdir()
            res = run_cli(
                ["validate", "--traces", data_dir / "golden_trace.jsonl", "--judge", "mock",
                 "--mock-script", data_dir / "golden_mock.jsonl", "--out", "report.json"],
                run_dir,
            )
            assert res.code == 0, res.stderr
            reports.append(res.files["report.json"])
            res = run_cli(["report", "--report", "report.json", "--html", "dashboard.html"], run_dir)
            assert res.code == 0, res.stderr
            pages.append(res.files["dashboard.html"])
        assert reports[0] == reports[1] == reports[2]
        assert pages[0] == pages[1] == pages[2]
        assert reports[0] == (data_dir / "golden_report.json").read_bytes()
        assert pages[0] == (data_dir / "golden_dashboard.html").read_bytes()
        d["note"] = f"report {len(reports[0])} bytes, dashboard {len(pages[0])} bytes, both match golden files"


# 9 -------------------------------------------------------------------------------


def test_c09_vignette_reproduction(tmp_path, data_dir):
    with criterion(9, "scripted judges reproduce the T-RC and comparison verdicts through to the report"):
        mock = lambda name: ["--judge", "mock", "--mock-script", data_dir / name]
        res = run_cli(["validate", "--traces", data_dir / "golden_trace.jsonl", *mock("golden_mock.jsonl"),
                       "--out", "report.json"], tmp_path)
        assert res.code == 0, res.stderr

        res = run_cli(["rootcause", "--mode", "findings", "--report", "report.json", *mock("rootcause_findings_mock.jsonl")], tmp_path)
        assert res.code == 0, res.stderr
        res = run_cli(["compare", "--success", data_dir / "tshirt_success.jsonl", "--failed", data_dir / "tshirt_failed.jsonl",
                       "--report", "report.json", *mock("compare_mock.jsonl")], tmp_path)
        assert res.code == 0, res.stderr
        res = run_cli(["compare", "--success", data_dir / "spotify_success.jsonl", "--failed", data_dir / "spotify_failed.jsonl",
                       "--report", "report.json", *mock("compare_mock.jsonl")], tmp_path)
        assert res.code == 0, res.stderr
        res = run_cli(["report", "--report", "report.json", "--html", "dashboard.html"], tmp_path)
        assert res.code == 0, res.stderr

        doc = load_json_report((tmp_path / "report.json").read_bytes())
        (trc,) = doc.root_cause_reports
        assert "'applications' instead of 'available_apps'" in trc.root_cause
        assert trc.criticality is Criticality.CRITICAL
        assert trc.affected_agents == ("APIPlannerAgent",)
        assert trc.evidence == ("c1",)  # the unknown id was dropped
        assert any(e.kind == "unknown-evidence" and e.call_id == "c999" for e in doc.diagnostics)
        # The digest the judge saw was led by the schema violation on the planner.
        schema_findings = [f for f in doc.findings if f.violated and f.issue is IssueKind.INPUT_SCHEMA_NON_COMPLIANCE]
        assert [f.agent for f in schema_findings] == ["APIPlannerAgent"]
        assert severity_of(schema_findings[0].issue) is Criticality.CRITICAL

        tshirt, spotify = doc.diagnosis_reports
        assert tshirt.failure_location.agent == "APIPlannerAgent"
        assert "incorrectly identified the task as checking product reviews" in tshirt.root_cause
        assert tshirt.differences and tshirt.failed_model == "mistral-medium-2505"
        assert spotify.failure_location.agent == "CodeAgent"
        assert "incorrect rounding logic" in spotify.root_cause
        assert spotify.failed_model == "llama-4-mav-17b-128e-instruct" and spotify.success_model == "gpt-4o"

        page = (tmp_path / "dashboard.html").read_text()
        assert '<span class="crit-Critical">[Critical]</span> Rename the &#x27;applications&#x27; field' in page
        ranking = page[page.index('id="agent-ranking"'):page.index('id="next-steps"')]
        assert ranking.index("APIPlannerAgent") < ranking.index("FinalAnswerAgent")


# 10 ------------------------------------------------------------------------------


def test_c10_pairing_enumeration():
    with criterion(10, "24x3 success matrix yields exactly 26 success/failure pairs") as d:
        matrix = success_matrix()
        assert len(matrix) == 24
        per_model = {m: sum(row[m] for row in matrix.values()) for m in next(iter(matrix.values()))}
        assert sorted(per_model.values(), reverse=True) == [14, 10, 8]
        mixed = sum(1 for row in matrix.values() if any(row.values()) and not all(row.values()))
        assert mixed == 13
        pairs = pair_success_failure(matrix_trace(matrix))
        got = [(p.task_id, p.success_model, p.failed_model) for p in pairs]
        assert got == brute_force_pairs(matrix)
        assert len(got) == 26
        d["note"] = f"13 mixed tasks, successes {per_model}"


# 11 ------------------------------------------------------------------------------


def test_c11_secret_hygiene(tmp_path, data_dir, stub_server):
    with criterion(11, "no emitted byte contains the JUDGE_API_KEY value") as d:
        clean = json.dumps({"violated": False, "reasoning": "ok", "recommendations": [], "severity_score": 0.0})
        ok = stub_server([(200, chat_reply(clean))])
        failing = stub_server([(500, {"error": "boom"})])
        garbled = stub_server([(200, {"unexpected": True})])
        env = lambda s: {"TRACEFIX_JUDGE_ENDPOINT": s.url, "TRACEFIX_JUDGE_BACKOFF_S": "0",
                         "TRACEFIX_JUDGE_MAX_IN_FLIGHT": "2"}
        trace = data_dir / "golden_trace.jsonl"
        runs = [
            (["validate", "--traces", trace, "--judge", "live", "--out", "live.json", "--html", "live.html", "-v"], env(ok)),
            (["validate", "--traces", trace, "--judge", "live", "--out", "down.json", "-v"], env(failing)),
            (["validate", "--traces", trace, "--judge", "live", "--out", "bad.json", "-v", "--tools", "OutputFormat"], env(garbled)),
            (["rootcause", "--mode", "raw", "--traces", trace, "--judge", "live", "--out", "rc.json", "-v"], env(failing)),
            (["rootcause", "--mode", "findings", "--report", "live.json", "--judge", "live", "-v"], env(ok)),
            (["compare", "--success", data_dir / "tshirt_success.jsonl", "--failed", data_dir / "tshirt_failed.jsonl",
              "--judge", "live", "--out", "cmp.json", "-v"], env(garbled)),
            (["validate", "--traces", trace, "--judge", "mock", "--mock-script", data_dir / "golden_mock.jsonl",
              "--out", "mock.json", "--fail-on-critical"], {}),
            (["report", "--report", "mock.json", "--html", "mock.html"], {}),
            (["report", "--report", "missing.json"], {}),
            (["validate", "--traces", "missing.jsonl"], {}),
            (["validate", "--traces", trace, "--judge", "live", "--config", "nope.cfg"], {}),
            (["validate", "--bogus-flag"], {}),
        ]
        codes = []
        for argv, extra in runs:
            res = run_cli(argv, tmp_path, extra)
            codes.append(res.code)
        # The secret really was in play: the live server saw it as a bearer token.
        assert ok.headers and all(h.get("Authorization") == f"Bearer {CANARY_SECRET}" for h in ok.headers)
        assert codes[:8] == [0, 0, 0, 0, 0, 0, 2, 0] and set(codes[8:]) == {1}
        scanned = sum(len(data) for _, data in EMITTED)
        assert all(CANARY_SECRET.encode() not in data for _, data in EMITTED)
        d["note"] = f"{len(EMITTED)} emitted streams/files, {scanned} bytes scanned across the session so far"
