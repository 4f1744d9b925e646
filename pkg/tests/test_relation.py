# tests/test_relation.py
from src.model.parser import parse_relation
from src.model.relation import (
    EQ, GEQ, MAY,
    AffineExpr, Conjunction, Constraint, Sym, UFTerm, Var,
    eq, format_constraint, geq, normalize, relation_key,
)

I, IP = AffineExpr.var("i"), AffineExpr.var("ip")


def test_normalize_tightens_inequality_by_gcd():
    # 2i - 2ip - 1 >= 0 over the integers is i - ip - 1 >= 0
    c = normalize(Constraint(GEQ, I.scale(2) - IP.scale(2) - 1))
    assert c == Constraint(GEQ, I - IP - 1)


def test_normalize_equality_without_integer_solution_is_false():
    c = normalize(Constraint(EQ, I.scale(2) - IP.scale(2) + 1))
    assert c.is_false()


def test_normalize_is_idempotent():
    c = normalize(Constraint(GEQ, IP.scale(3) - I.scale(6) + 4))
    assert normalize(c) == c


def test_conjunction_drops_duplicates_and_trivia():
    conj = Conjunction.of([geq(IP - I - 1), geq(IP, I + 1), geq(AffineExpr.constant(3))])
    assert len(conj) == 1


def test_conjunction_keeps_exact_over_may_copy():
    c = geq(IP - I - 1)
    conj = Conjunction.of([c.with_tag(MAY), c])
    assert conj.constraints[0].tag != MAY


def test_format_constraint_reads_naturally():
    assert format_constraint(geq(IP - I - 1)) == "ip >= i + 1"
    assert format_constraint(eq(I, IP)) == "i = ip"


def test_uf_term_depth_and_substitution():
    inner = AffineExpr.of(UFTerm("pruneSet", (IP,)))
    outer = UFTerm("lcolptr", (inner + 1,))
    assert outer.depth == 2
    moved = outer.substitute({Var("ip"): I})
    assert str(moved) == "lcolptr(pruneSet(i) + 1)"


def test_evaluate_with_index_array():
    e = AffineExpr.of(UFTerm("rowptr", (I + 1,))) - AffineExpr.of(Sym("n"))
    rowptr = [0, 2, 5]
    value = e.evaluate({"i": 1, "n": 3}, lambda name, args: rowptr[args[0]])
    assert value == 2


def test_relation_key_ignores_iterator_names_and_order():
    a = parse_relation('relation "a" { [i, k] -> [ip, kp] : i < ip && k = kp && rowptr(i) <= k < rowptr(i + 1) }')
    b = parse_relation('relation "b" { [x, y] -> [xp, yp] : rowptr(x) <= y < rowptr(x + 1) && y = yp && x < xp }')
    assert relation_key(a) == relation_key(b)


def test_relation_key_separates_different_relations():
    a = parse_relation('relation "a" { [i] -> [ip] : i < ip }')
    b = parse_relation('relation "b" { [i] -> [ip] : ip < i }')
    assert relation_key(a) != relation_key(b)


def test_relation_printer_round_trips():
    r = parse_relation('relation "r" kernel="fs" { [i] -> [ip, kp] : exists(j) : i = col(kp) && j = i '
                       '&& may(col(j) = ip) && rowptr(ip) <= kp < rowptr(ip + 1) || i < 0 }')
    again = parse_relation(str(r))
    assert relation_key(again) == relation_key(r)
    assert again.kernel == "fs"
    assert any(c.tag == MAY for c in again.clauses[0])


def test_relation_key_is_per_kernel():
    body = "{ [i] -> [ip] : i < ip && rowptr(i) = rowptr(ip) }"
    a = parse_relation(f'relation "a" kernel="gs" {body}')
    b = parse_relation(f'relation "b" kernel="gs" {body}')
    c = parse_relation(f'relation "a" kernel="ilu0" {body}')
    assert relation_key(a) == relation_key(b)
    assert relation_key(a) != relation_key(c)
    assert relation_key(c).startswith("ilu0|")
