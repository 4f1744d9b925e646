# tests/test_uf_encoding.py
from src.core.presburger import check, entails
from src.core.uf_encoding import ackermannize, evaluate_bindings, ground_terms
from src.model.parser import parse_relation
from src.model.relation import AffineExpr, geq


def _clause(text):
    return parse_relation(text).clauses[0]


def test_equal_arguments_force_equal_results():
    enc = ackermannize(_clause("{ [i] -> [ip] : i = ip && col(i) < col(ip) }"))
    assert check(enc.system).unsat
    assert any(t["event"] == "consistency_equal" for t in enc.trace)


def test_distinct_arguments_leave_results_free():
    enc = ackermannize(_clause("{ [i] -> [ip] : i < ip && col(i) = col(ip) }"))
    assert not check(enc.system).unsat
    assert any(t["event"] == "consistency_discharged" for t in enc.trace)


def test_different_results_separate_the_arguments():
    enc = ackermannize(_clause("{ [i] -> [ip] : i <= ip && col(i) < col(ip) }"))
    # col(i) != col(ip) gives i != ip, and with i <= ip that is i < ip
    assert entails(enc.system, geq(AffineExpr.var("ip") - AffineExpr.var("i") - 1))
    assert any(t["event"] == "consistency_contrapositive" for t in enc.trace)


def test_bindings_are_shared_and_nested_terms_bound_first():
    enc = ackermannize(_clause("{ [i, m] -> [ip] : col(row(m)) <= ip < col(row(m) + 1) && row(m) = i }"))
    names = [b.symbol for b in enc.bindings]
    assert names.index("row") < names.index("col")
    assert names.count("row") == 1
    assert names.count("col") == 2


def test_decode_restores_index_array_terms():
    enc = ackermannize(_clause("{ [i, k] -> [ip] : rowptr(i) <= k < rowptr(i + 1) }"))
    back = enc.table.reverse()
    assert {str(t) for t in back.values()} == {"rowptr(i)", "rowptr(i + 1)"}
    v = next(v for v, t in back.items() if str(t) == "rowptr(i)")
    assert str(enc.table.decode(AffineExpr.of(v) + 1)) == "rowptr(i) + 1"


def test_ground_terms_collect_arguments_of_every_call():
    r = parse_relation("{ [i, k] -> [ip, kp] : rowptr(i) <= k < rowptr(i + 1) && col(kp) = i || i < ip }")
    E = ground_terms(r)
    assert sorted(str(e) for e in E) == ["i", "i + 1", "kp"]


def test_evaluate_bindings_on_concrete_arrays():
    enc = ackermannize(_clause("{ [i, k] -> [ip] : rowptr(i) <= k < rowptr(i + 1) }"))
    rowptr = [0, 2, 5]
    values = evaluate_bindings(enc.table, {"i": 1, "k": 3, "ip": 0}, lambda name, args: rowptr[args[0]])
    assert sorted(values.values()) == [2, 5]
