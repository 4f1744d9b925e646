# tests/test_complexity_agent.py
import pytest

from src.agents.complexity_agent import (
    DERIVED, DIMENSION, PROJECTED, UF_RANGE,
    ComplexityAgent, ComplexityExpr, parse_complexity, render,
)
from src.model.parser import parse_constraints, parse_relation
from src.utils.errors import UnboundedIteratorError

FS_CSR_3 = parse_relation(
    'relation "fs_csr_3" { [i] -> [ip, kp] : i = col(kp) && i < ip && 0 <= i < n && 0 <= ip < n '
    '&& rowptr(ip) <= kp < rowptr(ip + 1) }')
ROWS = parse_relation('relation "rows" { [i] -> [ip] : i < ip && 0 <= i < n && 0 <= ip < n }')


@pytest.fixture
def agent():
    return ComplexityAgent()


@pytest.mark.parametrize("text", [
    "2(nnz) + (n)",
    "8(n x nnz) + 4(n^2)",
    "K(nnz x (nnz/n)^2)",
    "2(nnz x (nnz/n)^4) + 2(nnz x (nnz/n)^2)",
    "0",
])
def test_render_inverts_parse(text):
    assert render(parse_complexity(text)) == text


def test_parse_accepts_published_spellings():
    assert render(parse_complexity("(n)+2(nnz)")) == "2(nnz) + (n)"
    assert render(parse_complexity("8(n×nnz)+4(n²)")) == "8(n x nnz) + 4(n^2)"


def test_n_times_density_is_nnz():
    assert render(ComplexityExpr.monomial(1, 0, 1)) == "(nnz)"


def test_ordering_under_density():
    n, nnz = ComplexityExpr.monomial(1, 0, 0), ComplexityExpr.monomial(0, 1, 0)
    assert n.compare(nnz) == -1
    assert nnz.le(ComplexityExpr.monomial(0, 1, 2))
    assert not ComplexityExpr.monomial(0, 2, 0).le(ComplexityExpr.monomial(0, 1, 2))
    assert ComplexityExpr.zero().le(n)


def test_sum_merges_equal_monomials():
    total = parse_complexity("(nnz)") + parse_complexity("(nnz) + (n)")
    assert render(total) == "2(nnz) + (n)"
    assert total.structurally_equal(parse_complexity("(n) + 2(nnz)"))


def test_two_independent_rows(agent):
    assert render(agent.estimate_relation(ROWS)) == "(n^2)"


def test_equality_derives_the_second_row(agent):
    eqs = parse_constraints("ip = i + 1", ROWS)
    model = agent.model_loops(ROWS, ROWS.clauses[0], eqs)
    assert [l.kind for l in model.loops] == [DIMENSION, DERIVED]
    assert render(agent.estimate(model)) == "(n)"


def test_row_loop_becomes_nnz_under_its_entries(agent):
    model = agent.model_loops(FS_CSR_3, FS_CSR_3.clauses[0])
    kinds = {l.iterator: l.kind for l in model.loops}
    assert kinds == {"ip": DIMENSION, "kp": UF_RANGE, "i": DERIVED}
    assert render(agent.estimate(model)) == "(nnz)"


def test_unused_iterators_are_projected(agent):
    r = parse_relation('relation "p" { [i, k] -> [ip] : i < ip && 0 <= i < n && 0 <= ip < n && 0 <= k < n }')
    model = agent.model_loops(r, r.clauses[0])
    assert {l.iterator: l.kind for l in model.loops}["k"] == PROJECTED
    assert render(agent.estimate(model)) == "(n^2)"


def test_unbounded_iterator(agent):
    r = parse_relation('relation "u" { [i] -> [ip] : i < ip }')
    with pytest.raises(UnboundedIteratorError):
        agent.model_loops(r, r.clauses[0])


def test_compare_against_kernel(agent):
    out = agent.compare(parse_complexity("(n^2)"), parse_complexity("(nnz)"), parse_complexity("k(nnz)"))
    assert out["order"] == 1
    assert out["c1_le_kernel"] is False and out["c2_le_kernel"] is True
