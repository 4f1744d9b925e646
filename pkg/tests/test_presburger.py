# tests/test_presburger.py
import itertools

import numpy as np

from src.core.presburger import (
    Caps, LinearSystem, SatStatus,
    bounds_of, check, constant_bounds, entails, implied_equalities, project, satisfies,
)
from src.model.relation import EQ, GEQ, AffineExpr, Constraint, Sym, Var, eq, geq, normalize

I, IP, K = AffineExpr.var("i"), AffineExpr.var("ip"), AffineExpr.var("k")
X, Y = AffineExpr.var("x"), AffineExpr.var("y")
N = AffineExpr.of(Sym("n"))

def test_contradictory_order_is_unsat_with_certificate():
    res = check(LinearSystem.of([geq(IP - I - 1), geq(I - IP - 1)]))
    assert res.status == SatStatus.INTEGER_UNSAT
    assert res.certificate
    assert all("step" in s for s in res.certificate)

def test_integer_tightening_refutes_odd_interval():
    # 1 <= 2x <= 1 has a rational point but no integer one
    res = check(LinearSystem.of([geq(X.scale(2) - 1), geq(1 - X.scale(2))]))
    assert res.unsat

def test_equality_gcd_test():
    res = check(LinearSystem.of([eq(X.scale(4) + Y.scale(6), 3)]))
    assert res.unsat

def test_witness_satisfies_system():
    ls = LinearSystem.of([geq(IP - I - 1), geq(I), geq(N - IP - 1), geq(K - I), geq(IP - K)])
    res = check(ls)
    assert res.status == SatStatus.INTEGER_SAT_WITNESS
    assert all(satisfies(res.witness, c) for c in ls.constraints())

def test_entails_and_its_failure():
    ls = LinearSystem.of([geq(IP - I - 1), geq(I)])
    assert entails(ls, geq(IP - 1))
    assert not entails(ls, geq(IP - 2))

def test_implied_equality_from_opposite_inequalities():
    ls = LinearSystem.of([geq(IP - I), geq(I - IP), geq(I), geq(N - I - 1), geq(IP), geq(N - IP - 1)])
    found = implied_equalities(ls)
    assert eq(I, IP) in found

def test_explicit_equalities_are_not_reported_again():
    ls = LinearSystem.of([eq(I, IP), geq(I), geq(N - I - 1)])
    assert eq(I, IP) not in implied_equalities(ls)

def test_projection_keeps_the_shadow():
    ls = LinearSystem.of([geq(K), geq(N - K - 1)])
    proj = project(ls, [Var("k")])
    assert proj.exact
    assert proj.system.contains(geq(N - 1))
    assert Var("k") not in proj.system.vars

def test_bounds_of_reads_loop_bounds():
    ls = LinearSystem.of([geq(K - I), geq(IP - K - 1)])
    lower, upper, equal = bounds_of(ls, Var("k"), [Var("i"), Var("ip")])
    assert [str(e) for e in lower] == ["i"]
    assert [str(e) for e in upper] == ["ip - 1"]
    assert equal == []

def test_constant_bounds():
    ls = LinearSystem.of([geq(X - 2), geq(7 - X)])
    assert constant_bounds(ls, X) == (2, 7)
    assert constant_bounds(ls, X.scale(2) + 1) == (5, 15)

def test_derived_constraint_cap_reports_unknown():
    cs = []
    names = [AffineExpr.var(f"v{k}") for k in range(8)]
    for a, b in itertools.permutations(names, 2):
        cs.append(geq(a.scale(3) - b.scale(2) + 1))
    res = check(LinearSystem.of(cs), Caps(max_derived=5))
    assert res.status == SatStatus.UNKNOWN
    assert "cap" in res.diagnostic

def _random_system(rng, n_vars, n_cons):
    vs = [AffineExpr.var(f"v{k}") for k in range(n_vars)]
    cs = []
    for _ in range(n_cons):
        coeffs = rng.integers(-3, 4, size=n_vars)
        e = AffineExpr.constant(int(rng.integers(-6, 7)))
        for v, c in zip(vs, coeffs):
            e = e + v.scale(int(c))
        kind = EQ if rng.random() < 0.2 else GEQ
        cs.append(normalize(Constraint(kind, e)))
    # keep every variable inside the enumeration box
    for v in vs:
        cs.append(geq(v + 8))
        cs.append(geq(8 - v))
    return vs, cs

def _enumerate(cs, n_vars):
    grid = np.array(list(itertools.product(range(-8, 9), repeat=n_vars)))
    ok = np.ones(len(grid), dtype=bool)
    for c in cs:
        coeffs = np.array([c.expr.coeff(Var(f"v{k}")) for k in range(n_vars)])
        values = grid @ coeffs + c.expr.const
        ok &= (values == 0) if c.kind == EQ else (values >= 0)
    return grid[ok]

def test_random_systems_agree_with_enumeration():
    rng = np.random.default_rng(20240611)
    for _ in range(10_000):
        n_vars = int(rng.integers(1, 4))
        vs, cs = _random_system(rng, n_vars, int(rng.integers(1, 5)))
        ls = LinearSystem.of(cs, [Var(f"v{k}") for k in range(n_vars)])
        res = check(ls)
        if res.unsat:
            points = _enumerate(cs, n_vars)
            assert len(points) == 0, f"false UNSAT for {ls} at {points[0]}"
        elif res.status == SatStatus.INTEGER_SAT_WITNESS:
            assert all(satisfies(res.witness, c) for c in cs)

def test_normalization_idempotent_on_random_constraints():
    rng = np.random.default_rng(7)
    vs = [AffineExpr.var(f"v{k}") for k in range(3)]
    for _ in range(200):
        e = AffineExpr.constant(int(rng.integers(-20, 21)))
        for v in vs:
            e = e + v.scale(int(rng.integers(-6, 7)))
        kind = EQ if rng.random() < 0.5 else GEQ
        once = normalize(Constraint(kind, e))
        assert normalize(once) == once
