import json
import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import DATA, random_findings
from oracles import outcome_oracle
from tracefix.findings import DiagnosticEvent, Finding
from tracefix.reporting import (
    Cell,
    CountInconsistency,
    FrequencyTable,
    RankWeights,
    ReportDocument,
    ReportInvalid,
    ReportMeta,
    aggregate_findings,
    find_bottlenecks,
    load_json_report,
    outcome_diff,
    rank_agents,
    render_html_dashboard,
    render_json_report,
)
from tracefix.rootcause import DiagnosisReport, FailureLocation, RootCauseReport
from tracefix.taxonomy import TOOL_OF_ISSUE, Criticality, IssueKind, severity_of

EMPTY_GOLDEN = """{
  "diagnosis_reports": [],
  "diagnostics": [],
  "findings": [],
  "frequency": [],
  "meta": {
    "config_hash": "",
    "format": "tracefix-report/1",
    "sources": [],
    "timestamps": {
      "trace_first": null,
      "trace_last": null
    },
    "tool_version": ""
  },
  "root_cause_reports": [],
  "severity_totals": {
    "Critical": 0,
    "Minor": 0,
    "Moderate": 0
  }
}
"""


def finding(agent, issue, violated=True, model="m", call_id="c1"):
    return Finding(call_id, agent, TOOL_OF_ISSUE[issue], issue, violated, model_id=model)


def evaluated_for(findings):
    counts = {}
    for f in findings:
        key = (f.model_id, f.agent, f.issue)
        counts[key] = counts.get(key, 0) + 1
    return counts


# --- severity ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "issue,level",
    [(IssueKind.PYTHON_SYNTAX_ERROR, Criticality.CRITICAL), (IssueKind.INFORMATION_INCONSISTENCY, Criticality.MODERATE),
     (IssueKind.FEW_SHOT_COVERAGE_GAP, Criticality.MINOR)],
)
def test_severity_examples(issue, level):
    assert severity_of(issue) is level


# --- frequency ----------------------------------------------------------------------------

def test_zero_findings_all_rates_zero():
    evaluated = {("m", a, i): 10 for a in "AB" for i in IssueKind}
    table = aggregate_findings([], evaluated)
    assert {c.rate for c in table.cells.values()} == {0.0}


def test_rate_arithmetic():
    assert Cell(7, 10).rate == 0.7 and Cell(0, 0).rate is None
    with pytest.raises(ValueError):
        Cell(3, 2)


def test_count_inconsistency():
    with pytest.raises(CountInconsistency):
        aggregate_findings([finding("A", IssueKind.UNUSUAL_TOKEN)], {})


def test_pooled_rate_in_detection_band():
    # Hand count: 3 models x 25 evaluations of one planner issue, 18 + 17 + 21 violations = 56/75.
    findings, evaluated = [], {}
    for model, hits in (("m1", 18), ("m2", 17), ("m3", 21)):
        evaluated[(model, "Planner", IssueKind.INPUT_SCHEMA_NON_COMPLIANCE)] = 25
        findings += [finding("Planner", IssueKind.INPUT_SCHEMA_NON_COMPLIANCE, model=model)] * hits
    pooled = aggregate_findings(findings, evaluated).by_issue()[IssueKind.INPUT_SCHEMA_NON_COMPLIANCE]
    assert (pooled.violations, pooled.evaluated) == (56, 75)
    assert 0.64 <= pooled.rate <= 0.88


@settings(max_examples=100)
@given(st.integers(0, 300), st.integers(0, 2**16))
def test_marginals_sum_to_total(n, seed):
    findings = random_findings(random.Random(seed), n)
    table = aggregate_findings(findings, evaluated_for(findings))
    total = table.total()
    for marginal in (table.by_issue(), table.by_agent(), table.by_model(), table.by_agent_issue()):
        assert sum(c.violations for c in marginal.values()) == total.violations
        assert sum(c.evaluated for c in marginal.values()) == total.evaluated
    assert total.violations == sum(f.violated for f in findings)
    assert FrequencyTable.from_list(table.to_list()) == table


# --- outcome diff ---------------------------------------------------------------------------

def test_outcome_examples():
    same = {f"t{i}": i % 3 == 0 for i in range(12)}
    d = outcome_diff(same, same)
    assert (d.preserved, d.improved, d.regressed) == (4, 0, 0)
    d = outcome_diff({"a": False, "b": False}, {"a": True, "b": True})
    assert d.improved == 2
    d = outcome_diff({"a": True, "x": True}, {"a": True, "y": False})
    assert d.only_before == ("x",) and d.only_after == ("y",) and d.common == 1


@settings(max_examples=200)
@given(st.dictionaries(st.text("abcde", min_size=1, max_size=3), st.booleans()),
       st.dictionaries(st.text("abcde", min_size=1, max_size=3), st.booleans()))
def test_outcome_matches_oracle(before, after):
    d = outcome_diff(before, after)
    assert {k: getattr(d, k) for k in ("preserved", "improved", "regressed", "still_failing")} == outcome_oracle(before, after)
    succ_after = sum(after[t] for t in before.keys() & after.keys())
    assert d.preserved + d.improved == succ_after


# --- json report ----------------------------------------------------------------------------

def test_empty_doc_golden():
    assert render_json_report(ReportDocument()).decode() == EMPTY_GOLDEN


def test_one_finding_golden():
    f = Finding("c1", "CodeAgent", "PythonCodeSyntaxChecker", IssueKind.PYTHON_SYNTAX_ERROR, True,
                reasoning="Python syntax error at line 3: unbalanced '('",
                evidence={"line": 3, "reason": "unbalanced '('"}, model_id="gpt-4o")
    table = aggregate_findings([f], {("gpt-4o", "CodeAgent", IssueKind.PYTHON_SYNTAX_ERROR): 1})
    doc = ReportDocument(ReportMeta("0.1.0", "abc", None, None, ("t.jsonl",)), (f,), table)
    assert render_json_report(doc) == (DATA / "one_finding_report.json").read_bytes()
    assert render_json_report(doc) == render_json_report(doc)


def _full_doc(seed=0):
    findings = random_findings(random.Random(seed), 40)
    return ReportDocument(
        ReportMeta("0.1.0", "h" * 64, "2025-01-01T00:00:00Z", "2025-01-01T00:05:00Z", ("a.jsonl",)),
        tuple(findings),
        aggregate_findings(findings, evaluated_for(findings)),
        (RootCauseReport("cause", ("A",), Criticality.CRITICAL, "Fix <it> & ship", ("c1",), "findings", "m"),),
        (DiagnosisReport(FailureLocation("A", "c1"), "why", ("r1",), ("d1",), "t", "bad", "good"),),
        (DiagnosticEvent("judge-unavailable", "HTTP 500", "c1", "OutputFormat"),),
    )


@pytest.mark.parametrize("seed", range(5))
def test_schema_round_trip(seed):
    doc = _full_doc(seed)
    data = render_json_report(doc)
    again = load_json_report(data)
    assert again == doc and render_json_report(again) == data


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("findings"),
        lambda d: d.update(extra=1),
        lambda d: d["meta"].update(format="other/1"),
        lambda d: d["severity_totals"].update(Critical=99),
        lambda d: d["findings"][0].update(issue="NotAnIssue"),
        lambda d: d["frequency"][0].update(violations=-1),
    ],
)
def test_corrupted_reports_are_rejected(mutate):
    obj = json.loads(render_json_report(_full_doc()))
    mutate(obj)
    with pytest.raises(ReportInvalid):
        load_json_report(json.dumps(obj).encode())


def test_not_json_is_rejected():
    with pytest.raises(ReportInvalid):
        load_json_report(b"{not json")


# --- dashboard --------------------------------------------------------------------------------

def _sections(page: str) -> dict[str, str]:
    return dict(re.findall(r'<section id="([\w-]+)">(.*?)</section>', page, re.DOTALL))


def test_empty_dashboard():
    page = render_html_dashboard(ReportDocument()).decode()
    secs = _sections(page)
    assert list(secs) == ["bottlenecks", "agent-ranking", "next-steps"]
    assert all('class="empty"' in body for body in secs.values())
    assert page.startswith("<!DOCTYPE html>")


def test_ranking_order_follows_weighted_count():
    findings = [finding("B", IssueKind.PYTHON_SYNTAX_ERROR)] * 2 + [finding("A", IssueKind.OUTPUT_SCHEMA_NON_COMPLIANCE)] * 5
    doc = ReportDocument(findings=findings, frequency=aggregate_findings(findings, evaluated_for(findings)))
    ranking = _sections(render_html_dashboard(doc).decode())["agent-ranking"]
    assert ranking.index(">A<") < ranking.index(">B<")


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from("ABCDE"), st.sampled_from(list(IssueKind))), max_size=40))
def test_rank_matches_oracle(pairs):
    findings = [finding(a, i) for a, i in pairs]
    weights = RankWeights()
    score = {}
    for a, i in pairs:
        score[a] = score.get(a, 0) + weights.of(severity_of(i))
    got = rank_agents(findings, weights)
    assert [r.score for r in got] == sorted(score.values(), reverse=True)
    assert {r.agent: r.score for r in got} == score


@pytest.mark.parametrize("seed", range(5))
def test_dashboard_is_self_contained(seed):
    page = render_html_dashboard(_full_doc(seed)).decode()
    assert not re.search(r"(?i)\b(?:src|href)\s*=|@import|url\(|<script|https?://", page)
    assert "Fix &lt;it&gt; &amp; ship" in page


def test_bottlenecks_keep_ties_and_require_evidence():
    cells = {
        ("m", "A", IssueKind.UNUSUAL_TOKEN): Cell(5, 5),
        ("m", "B", IssueKind.UNUSUAL_TOKEN): Cell(5, 5),
        ("m", "C", IssueKind.UNUSUAL_TOKEN): Cell(1, 10),
        ("m", "D", IssueKind.UNUSUAL_TOKEN): Cell(4, 4),
    }
    got = find_bottlenecks(FrequencyTable(cells))
    assert [b.agent for b in got] == ["A", "B"]


def test_bottlenecks_pool_over_models():
    cells = {("m1", "A", IssueKind.UNUSUAL_TOKEN): Cell(2, 3), ("m2", "A", IssueKind.UNUSUAL_TOKEN): Cell(2, 3)}
    (b,) = find_bottlenecks(FrequencyTable(cells))
    assert (b.cell.violations, b.cell.evaluated) == (4, 6)


def test_golden_dashboard_matches_golden_report():
    doc = load_json_report((DATA / "golden_report.json").read_bytes())
    assert render_html_dashboard(doc) == (DATA / "golden_dashboard.html").read_bytes()
