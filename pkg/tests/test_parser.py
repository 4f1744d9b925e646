# tests/test_parser.py
from pathlib import Path

import pytest

from src.core.assertions import CAT_MONOTONICITY, CAT_OTHER, CAT_TRIANGULAR, FORM1, FORM3, GENERAL
from src.model.parser import parse_constraints, parse_problem, parse_problem_text, parse_relation
from src.model.relation import EQ, GEQ, MAY, ROLE_NNZ, ROLE_SIZE
from src.utils.errors import NonlinearError, ParseError, SymbolError

CORPUS = Path(__file__).resolve().parents[1] / "corpus"

HEADER = """
symbolic n >= 1 : size, nnz >= 1 : nnz;
uf rowptr : 1, col : 1;
assert strict_monotone(rowptr);
kernel "toy";
"""


def test_declarations_and_relation():
    p = parse_problem_text(HEADER + 'relation "r1" stmt="S1->S2" { [i] -> [ip] : i < ip && 0 <= i < n }')
    assert [s.name for s in p.symbols] == ["n", "nnz"]
    assert {s.name: s.role for s in p.symbols} == {"n": ROLE_SIZE, "nnz": ROLE_NNZ}
    assert [u.name for u in p.ufs] == ["col", "rowptr"]
    r = p.relations[0]
    assert r.kernel == "toy"
    assert r.meta("stmt") == "S1->S2"
    # i < ip, 0 <= i, i < n
    assert len(r.clauses[0]) == 3


def test_builtin_assertion_is_recorded_on_the_index_array():
    p = parse_problem_text(HEADER)
    names = [a.name for a in p.assertions]
    assert names == ["strict_monotone(rowptr)", "strict_monotone(rowptr)#converse"]
    rowptr = next(u for u in p.ufs if u.name == "rowptr")
    assert "strict_monotone(rowptr)" in rowptr.declared_properties


def test_chained_comparisons_and_may_guard():
    r = parse_relation("{ [i, k] -> [ip] : rowptr(i) <= k < rowptr(i + 1) && may(col(k) = ip) }")
    kinds = sorted(c.kind for c in r.clauses[0])
    assert kinds == [EQ, GEQ, GEQ]
    tagged = [c for c in r.clauses[0] if c.tag == MAY]
    assert len(tagged) == 1 and tagged[0].kind == EQ


def test_disjunction_gives_one_clause_per_branch():
    r = parse_relation("{ [i] -> [ip] : i < ip || ip < i }")
    assert len(r.clauses) == 2


def test_primed_identifiers():
    r = parse_relation("{ [i] -> [i'] : i < i' }")
    assert r.out_tuple == ("i'",)


def test_nonlinear_product_is_rejected_with_position():
    with pytest.raises(NonlinearError) as err:
        parse_relation("{ [i] -> [ip] :\n  i * ip = 3 }")
    assert err.value.line == 2


def test_constant_products_are_linear():
    r = parse_relation("{ [i] -> [ip] : 2 * i = ip * 4 }")
    assert len(r.clauses[0]) == 1


def test_strict_mode_rejects_undeclared_symbol():
    with pytest.raises(SymbolError):
        parse_problem_text('relation "r" { [i] -> [ip] : i < m }')


def test_arity_mismatch():
    with pytest.raises(SymbolError):
        parse_problem_text(HEADER + 'relation "r" { [i] -> [ip] : rowptr(i, ip) = 0 }')


def test_iterator_names_must_be_distinct():
    with pytest.raises(SymbolError):
        parse_relation("{ [i] -> [i] : i >= 0 }")


def test_empty_constraint_list():
    with pytest.raises(ParseError):
        parse_relation("{ [i] -> [ip] : }")


def test_unknown_builtin_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_problem_text("uf f : 1;\nassert sorted(f);")


def test_forall_assertions_are_classified():
    p = parse_problem_text("""
        uf f : 1, g : 1;
        assert "mono" forall x1, x2 : x1 < x2 -> f(x1) < f(x2);
        assert "tri" forall x1, x2 : x1 < f(x2) -> g(x1) < x2;
        assert "odd" forall x1, x2 : x1 = x2 -> f(x1) = g(x2) + 1;
    """)
    by_name = {a.name: a for a in p.assertions}
    assert (by_name["mono"].form, by_name["mono"].category) == (FORM1, CAT_MONOTONICITY)
    assert (by_name["tri"].form, by_name["tri"].category) == (FORM3, CAT_TRIANGULAR)
    assert (by_name["odd"].form, by_name["odd"].category) == (GENERAL, CAT_OTHER)


def test_unquantified_variable_in_assertion():
    with pytest.raises(ParseError):
        parse_problem_text("uf f : 1;\nassert forall x1 : x1 < y -> f(x1) < f(y);")


def test_parse_constraints_over_relation_iterators():
    r = parse_relation("{ [i] -> [ip] : i < ip }")
    cs = parse_constraints("ip = i + 1", r)
    assert len(cs) == 1 and cs[0].kind == EQ


def test_include_pulls_in_header_once():
    p = parse_problem(CORPUS / "kernels" / "fs_csr.deps")
    assert len(p.relations) == 8
    assert {r.kernel for r in p.relations} == {"fs_csr"}
    names = [a.name for a in p.assertions]
    assert len(names) == len(set(names))
    assert any(a.category == CAT_TRIANGULAR for a in p.assertions)


def test_problem_printer_round_trips():
    p = parse_problem(CORPUS / "kernels" / "fs_csr.deps")
    again = parse_problem_text(str(p))
    assert [r.name for r in again.relations] == [r.name for r in p.relations]
    assert [str(c) for r in again.relations for c in r.clauses] == [str(c) for r in p.relations for c in r.clauses]
