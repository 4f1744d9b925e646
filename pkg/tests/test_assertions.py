# tests/test_assertions.py
from pathlib import Path

import pytest

from src.agents.analysis_agent import PropertyConfig
from src.core.assertions import (
    CAT_CORRELATED, CAT_MONOTONICITY, CAT_TRIANGULAR, FORM1, FORM2, FORM3,
    InstanceBudget, apply_two_phase, builtin, instantiate, instantiate_all, replay,
)
from src.core.uf_encoding import ackermannize, ground_terms
from src.model.parser import parse_problem, parse_relation
from src.model.relation import UFSymbol
from src.utils.errors import AssertionSpecError

CORPUS = Path(__file__).resolve().parents[1] / "corpus"

UFS = {"rowptr": UFSymbol("rowptr"), "col": UFSymbol("col"), "lrow": UFSymbol("lrow", 2)}


def test_strict_monotone_has_a_converse():
    base, conv = builtin("strict_monotone", "rowptr", ufs=UFS)
    assert (base.form, base.category, base.converse) == (FORM1, CAT_MONOTONICITY, False)
    assert conv.converse and conv.name.endswith("#converse")
    assert base.symbols() == frozenset({"rowptr"})


def test_builtin_categories():
    assert builtin("triangular", "rowptr", "col", ufs=UFS)[0].form == FORM3
    assert builtin("triangular", "rowptr", "col", "column", ufs=UFS)[0].category == CAT_TRIANGULAR
    assert builtin("strict_antitone_pair", "rowptr", "col", ufs=UFS)[0].form == FORM2
    assert all(a.category == CAT_CORRELATED for a in builtin("correlated_bound", "rowptr", "col", ufs=UFS))


@pytest.mark.parametrize("args", [
    ("sorted", "rowptr"),
    ("strict_monotone", "rowptr", "col"),
    ("strict_monotone", "nope"),
    ("strict_monotone", "lrow"),
    ("triangular", "rowptr", "col", "row"),
])
def test_bad_builtin_declarations(args):
    with pytest.raises(AssertionSpecError):
        builtin(*args, ufs=UFS)


def test_instantiation_is_lexicographic_and_budgeted():
    r = parse_relation("{ [i] -> [ip] : rowptr(i) < rowptr(i + 1) && col(ip) = 0 }")
    E = ground_terms(r)
    base = builtin("strict_monotone", "rowptr")[0]
    full = instantiate(base, E)
    assert len(full) == 9
    assert full.instances[0].label == "strict_monotone(rowptr)[i, i]"
    cut = instantiate(base, E, InstanceBudget(max_instances=4))
    assert len(cut) == 4 and cut.truncated


def test_instantiate_all_shares_the_budget():
    r = parse_relation("{ [i] -> [ip] : rowptr(i) < rowptr(ip) }")
    E = ground_terms(r)
    assertions = builtin("strict_monotone", "rowptr")
    assert len(instantiate_all(assertions, E)) == 8
    capped = instantiate_all(assertions, E, InstanceBudget(max_instances=5))
    assert len(capped) == 5 and capped.truncated


def test_monotonicity_refutes_equal_row_starts():
    clause = parse_relation("{ [i] -> [ip] : i < ip && rowptr(i) = rowptr(ip) }").clauses[0]
    E = ground_terms(clause)
    enc = ackermannize(clause)
    res = apply_two_phase(enc, instantiate_all(builtin("strict_monotone", "rowptr"), E))
    assert res.unsat
    assert res.fired == ("strict_monotone(rowptr)[i, ip]",)
    assert replay(clause, builtin("strict_monotone", "rowptr"), res.fired, E)


def test_unrelated_property_does_not_fire():
    clause = parse_relation("{ [i] -> [ip] : i < ip && rowptr(i) = rowptr(ip) }").clauses[0]
    E = ground_terms(clause)
    res = apply_two_phase(ackermannize(clause), instantiate_all(builtin("strict_monotone", "col"), E))
    assert not res.unsat
    assert res.fired == ()


def test_replay_needs_the_named_instances():
    clause = parse_relation("{ [i] -> [ip] : i < ip && rowptr(i) = rowptr(ip) }").clauses[0]
    E = ground_terms(clause)
    assert not replay(clause, builtin("strict_monotone", "rowptr"), [], E)


def test_neighbouring_row_is_closed_by_consistency_and_firing():
    # k in row i, kp in row ip, i < ip, k = kp: rowptr(ip) < rowptr(i + 1) forces ip = i + 1
    clause = parse_relation(
        "{ [i, k] -> [ip, kp] : i < ip && k = kp && rowptr(i) <= k < rowptr(i + 1) "
        "&& rowptr(ip) <= kp < rowptr(ip + 1) }").clauses[0]
    E = ground_terms(clause)
    res = apply_two_phase(ackermannize(clause), instantiate_all(builtin("strict_monotone", "rowptr"), E))
    assert res.unsat
    phase1_only = apply_two_phase(ackermannize(clause), instantiate_all(builtin("strict_monotone", "rowptr"), E),
                                  InstanceBudget(max_disjunctive=0))
    assert phase1_only.unsat
    events = {t["event"] for t in res.trace}
    assert {"consistency_contrapositive", "fired"} <= events


def test_phase1_contrapositive_pins_equal_rows():
    # rowptr(i) >= rowptr(ip) refutes the monotone consequent, so i < ip must fail: i = ip,
    # and then equal row starts contradict the last constraint
    clause = parse_relation(
        "{ [i] -> [ip] : i <= ip && rowptr(ip) <= rowptr(i) && rowptr(i) - rowptr(ip) + ip - i >= 1 }").clauses[0]
    E = ground_terms(clause)
    enc = ackermannize(clause)
    assert not [t for t in enc.trace if t["event"].startswith("consistency_")]
    base = builtin("strict_monotone", "rowptr")[:1]
    res = apply_two_phase(enc, instantiate_all(base, E), InstanceBudget(max_disjunctive=0))
    assert res.unsat
    assert res.fired == ("strict_monotone(rowptr)[i, ip]",)
    events = [t["event"] for t in res.trace]
    assert "contrapositive" in events and "fired" not in events
    assert events.index("contrapositive") < events.index("consistency_equal")


@pytest.mark.parametrize("kernel", ["fs_csc", "ilu0", "left_cholesky"])
def test_phase1_verdicts_survive_case_splitting(kernel):
    problem = parse_problem(CORPUS / "kernels" / f"{kernel}.deps")
    assertions = PropertyConfig.parse("all").enabled(problem.assertions)
    phase1_hits = 0
    for r in problem.relations:
        for clause in r.clauses:
            E = ground_terms(clause)
            insts = instantiate_all(assertions, E)
            phase1 = apply_two_phase(ackermannize(clause), insts, InstanceBudget(max_disjunctive=0))
            full = apply_two_phase(ackermannize(clause), insts)
            if phase1.unsat:
                phase1_hits += 1
                assert full.unsat, r.name
    assert phase1_hits
