# tests/test_analysis_agent.py
from pathlib import Path

import pytest

from src.agents.analysis_agent import (
    MAYBE_SAT, UNSAT_AFFINE, UNSAT_WITH_PROPERTIES, AnalysisAgent, PropertyConfig,
)
from src.agents.complexity_agent import ComplexityAgent, render
from src.model.parser import parse_constraints, parse_problem, parse_problem_text
from src.model.relation import normalize

CORPUS = Path(__file__).resolve().parents[1] / "corpus"

TOY = """
symbolic n >= 1 : size, nnz >= 1 : nnz;
uf rowptr : 1, col : 1;
assert strict_monotone(rowptr);
kernel "toy";

relation "aff" { [i] -> [ip] : i = ip && i < ip && 0 <= i < n && 0 <= ip < n }
relation "mono" { [i] -> [ip] : i < ip && rowptr(i) = rowptr(ip) && 0 <= i < n && 0 <= ip < n }
relation "same_row" { [i, k] -> [ip, kp] : i <= ip && ip <= i && 0 <= i < n && 0 <= ip < n
    && rowptr(i) <= k < rowptr(i + 1) && rowptr(ip) <= kp < rowptr(ip + 1) }
relation "mono_copy" { [a] -> [b] : rowptr(a) = rowptr(b) && a < b && 0 <= a < n && 0 <= b < n }
"""


@pytest.fixture
def problem():
    return parse_problem_text(TOY)


@pytest.fixture
def agent():
    return AnalysisAgent({"threads": 2})


def _by_name(problem):
    return {r.name: r for r in problem.relations}


def test_property_config_parse():
    assert str(PropertyConfig.parse("all")) == "all"
    assert str(PropertyConfig.parse("none")) == "none"
    assert str(PropertyConfig.parse("single:triangular")) == "single:triangular"
    assert str(PropertyConfig.parse("only:strict_monotone(rowptr)")) == "only:strict_monotone(rowptr)"
    with pytest.raises(ValueError):
        PropertyConfig.parse("single:sortedness")
    with pytest.raises(ValueError):
        PropertyConfig.parse("some")


def test_property_config_selects_assertions(problem):
    assertions = problem.assertions
    assert PropertyConfig.parse("none").enabled(assertions) == []
    assert len(PropertyConfig.parse("all").enabled(assertions)) == 2
    assert len(PropertyConfig.parse("single:monotonicity").enabled(assertions)) == 2
    assert PropertyConfig.parse("single:triangular").enabled(assertions) == []
    only = PropertyConfig.parse("only:strict_monotone(rowptr)").enabled(assertions)
    assert [a.name for a in only] == ["strict_monotone(rowptr)", "strict_monotone(rowptr)#converse"]


def test_affine_contradiction(agent, problem):
    v = agent.analyze(_by_name(problem)["aff"], problem.assertions)
    assert v.status == UNSAT_AFFINE
    assert v.properties_used == ()
    assert v.clauses[0].certificate


def test_monotonicity_needed(agent, problem):
    r = _by_name(problem)["mono"]
    assert agent.analyze(r, problem.assertions, PropertyConfig.parse("none")).status == MAYBE_SAT
    v = agent.analyze(r, problem.assertions, PropertyConfig.parse("all"))
    assert v.status == UNSAT_WITH_PROPERTIES
    assert v.properties_used == ("strict_monotone(rowptr)",)
    assert agent.replay_verdict(v, r, problem.assertions)


def test_maybe_relation_reports_equality(agent, problem):
    v = agent.analyze(_by_name(problem)["same_row"], problem.assertions)
    assert v.status == MAYBE_SAT
    assert v.maybe_clauses == [0]
    assert "i = ip" in v.equalities


def test_verdict_record_is_plain_data(agent, problem):
    rec = agent.analyze(_by_name(problem)["mono"], problem.assertions).to_record()
    assert rec["status"] == UNSAT_WITH_PROPERTIES
    assert rec["config"] == "all"
    assert rec["clauses"][0]["fired"]
    assert rec["capped"] is False


def test_corpus_dedup_and_summary(agent, problem):
    result = agent.analyze_corpus([problem])
    s = result.summary()
    assert (s["relations"], s["unique"], s["duplicates"]) == (4, 3, 1)
    assert (s["unsat_affine"], s["unsat_properties"], s["maybe"]) == (1, 1, 1)
    assert s["baseline"] == 2
    assert s["per_kernel"]["toy"]["unique"] == 3
    assert [v.relation for v in result.verdicts] == ["aff", "mono", "same_row"]


def test_forward_solve_csr_affine_pass(agent):
    problems = agent.load_corpus([CORPUS / "kernels" / "fs_csr.deps"])
    s = agent.analyze_corpus(problems, PropertyConfig.parse("none")).summary()
    assert (s["relations"], s["unique"], s["unsat_affine"], s["unsat_properties"]) == (8, 5, 2, 0)


def test_same_relation_in_two_kernels_is_counted_per_kernel(agent, problem):
    other = parse_problem_text(TOY.replace('kernel "toy";', 'kernel "toy_copy";'))
    s = agent.analyze_corpus([problem, other]).summary()
    assert (s["relations"], s["unique"], s["duplicates"]) == (8, 6, 2)
    assert s["per_kernel"]["toy"]["unique"] == s["per_kernel"]["toy_copy"]["unique"] == 3


def test_row_start_conflict_needs_monotonicity(agent):
    text = TOY.split("relation")[0] + (
        'relation "conflict" { [i, k] -> [ip, mp] : ip < i && k = mp && 0 <= i < n && 0 <= ip < n\n'
        '    && rowptr(i) <= k < rowptr(i + 1) && rowptr(ip - 1) <= mp < rowptr(ip) }\n')
    p = parse_problem_text(text)
    r = p.relations[0]
    assert agent.analyze(r, p.assertions, PropertyConfig.parse("none")).status == MAYBE_SAT
    v = agent.analyze(r, p.assertions)
    assert v.status == UNSAT_WITH_PROPERTIES
    assert "strict_monotone(rowptr)[ip, i]" in v.clauses[0].fired
    assert agent.replay_verdict(v, r, p.assertions)


def test_left_cholesky_column_equals_prune_entry(agent):
    p = parse_problem(CORPUS / "kernels" / "left_cholesky.deps")
    r = {x.name: x for x in p.relations}["lc_m1"]
    v = agent.analyze(r, p.assertions)
    assert v.status == MAYBE_SAT
    want = normalize(parse_constraints("colNo = pruneSet(i')", r)[0]).core
    assert want in {e.core for e in v.clauses[0].equalities}
    complexity = ComplexityAgent()
    assert render(complexity.estimate_relation(r, [0])) == "(n x nnz)"
    assert render(complexity.estimate_relation(r, [0], {0: v.clauses[0].equalities})) == "(nnz)"


def test_single_property_sets_never_beat_all(agent):
    problems = agent.load_corpus([CORPUS / "kernels" / f"{k}.deps" for k in ("fs_csc", "ilu0", "left_cholesky")])

    def unsat(cfg):
        return {v.relation for v in agent.analyze_corpus(problems, PropertyConfig.parse(cfg)).verdicts if v.unsat}

    full = unsat("all")
    for cfg in ("none", "single:monotonicity", "single:correlated_monotonicity", "single:triangular"):
        assert unsat(cfg) <= full, cfg
    assert unsat("none") < full
