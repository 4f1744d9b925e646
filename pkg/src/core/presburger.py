# src/core/presburger.py
"""
Integer linear constraint core.

Conjunctions of integer equalities and inequalities are decided with
equality substitution, Fourier-Motzkin elimination and gcd tightening of
every derived inequality. INTEGER_UNSAT is only reported with a refutation
trace. A rationally feasible system is upgraded to INTEGER_SAT_WITNESS when
back-substitution through the elimination stack finds an integer point.

Every atom of the system is treated as an integer variable, so callers may
hand in opaque atoms (Sym, encoded UF variables, even UFTerm atoms when only
projection is wanted).
"""

from __future__ import annotations

import enum
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from src.model.relation import EQ, GEQ, AffineExpr, Atom, Constraint, format_constraint, normalize
from src.utils.errors import CapExceeded

Row = Tuple[Dict[int, int], int]


class SatStatus(str, enum.Enum):
    INTEGER_UNSAT = "INTEGER_UNSAT"
    RATIONAL_SAT_UNKNOWN_INTEGER = "RATIONAL_SAT_UNKNOWN_INTEGER"
    INTEGER_SAT_WITNESS = "INTEGER_SAT_WITNESS"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class Caps:
    max_derived: int = 1_000_000
    max_coeff_bits: int = 4096
    witness_max_nodes: int = 2000
    witness_candidates: int = 6

    @staticmethod
    def from_config(cfg: Optional[Mapping]) -> "Caps":
        cfg = cfg or {}
        return Caps(
            max_derived=int(cfg.get("max_derived", 1_000_000)),
            max_coeff_bits=int(cfg.get("max_coeff_bits", 4096)),
            witness_max_nodes=int(cfg.get("witness_max_nodes", 2000)),
            witness_candidates=int(cfg.get("witness_candidates", 6)),
        )


DEFAULT_CAPS = Caps()


@dataclass(frozen=True)
class LinearSystem:
    """eqs are expr = 0, ineqs are expr >= 0; all normalized, sorted, deduplicated."""
    vars: Tuple[Atom, ...] = ()
    eqs: Tuple[AffineExpr, ...] = ()
    ineqs: Tuple[AffineExpr, ...] = ()

    @staticmethod
    def of(constraints: Iterable[Constraint], extra_vars: Iterable[Atom] = ()) -> "LinearSystem":
        eqs: Dict[AffineExpr, None] = {}
        ineqs: Dict[AffineExpr, None] = {}
        atoms = set(extra_vars)
        for c in constraints:
            n = normalize(c)
            if n.is_trivial():
                continue
            (eqs if n.kind == EQ else ineqs)[n.expr] = None
            atoms.update(n.expr.atoms())
        key = lambda e: e.sort_key()
        return LinearSystem(
            vars=tuple(sorted(atoms, key=lambda a: a.sort_key())),
            eqs=tuple(sorted(eqs, key=key)),
            ineqs=tuple(sorted(ineqs, key=key)),
        )

    def constraints(self) -> List[Constraint]:
        return [Constraint(EQ, e) for e in self.eqs] + [Constraint(GEQ, e) for e in self.ineqs]

    def add(self, constraints: Iterable[Constraint]) -> "LinearSystem":
        return LinearSystem.of(itertools.chain(self.constraints(), constraints), self.vars)

    def contains(self, c: Constraint) -> bool:
        n = normalize(c)
        if n.is_trivial():
            return True
        return n.expr in (self.eqs if n.kind == EQ else self.ineqs)

    def __len__(self) -> int:
        return len(self.eqs) + len(self.ineqs)

    def __str__(self) -> str:
        return " && ".join(format_constraint(c) for c in self.constraints()) or "true"


@dataclass(frozen=True)
class CheckResult:
    status: SatStatus
    witness: Optional[Dict[Atom, int]] = None
    certificate: Tuple[dict, ...] = ()
    diagnostic: str = ""

    @property
    def unsat(self) -> bool:
        return self.status == SatStatus.INTEGER_UNSAT


@dataclass(frozen=True)
class Projection:
    system: LinearSystem
    exact: bool


# ----------------------------------------------------------------------
# Elimination engine
# ----------------------------------------------------------------------
class _Contradiction(Exception):
    def __init__(self, step: dict):
        super().__init__(step.get("constraint", "contradiction"))
        self.step = step


class _Budget(Exception):
    pass


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _gcd(values: Iterable[int]) -> int:
    return reduce(math.gcd, (abs(v) for v in values), 0)


class _Eliminator:
    def __init__(self, ls: LinearSystem, caps: Caps):
        self.atoms: List[Atom] = list(ls.vars)
        self.index: Dict[Atom, int] = {a: i for i, a in enumerate(self.atoms)}
        self.caps = caps
        self.trace: List[dict] = []
        self.stack: List[tuple] = []
        self.derived = 0

    # -- rows ---------------------------------------------------------
    def row(self, e: AffineExpr) -> Row:
        co = {}
        for a, k in e.terms:
            if a not in self.index:
                self.index[a] = len(self.atoms)
                self.atoms.append(a)
            co[self.index[a]] = k
        return co, e.const

    def expr(self, co: Mapping[int, int], c: int) -> AffineExpr:
        return AffineExpr.build(c, {self.atoms[v]: k for v, k in co.items()})

    def fmt(self, co: Mapping[int, int], c: int, kind: str = GEQ) -> str:
        return format_constraint(Constraint(kind, self.expr(co, c)))

    def norm_ineq(self, co: Dict[int, int], c: int) -> Optional[Row]:
        if not co:
            if c >= 0:
                return None
            raise _Contradiction({"step": "contradiction", "constraint": f"0 >= {-c}"})
        g = _gcd(co.values())
        if g > 1:
            tightened = c // g
            if tightened * g != c:
                self.trace.append({"step": "gcd", "constraint": self.fmt(co, c), "divisor": g})
            co = {v: k // g for v, k in co.items()}
            c = tightened
        return co, c

    def norm_eq(self, co: Dict[int, int], c: int) -> Optional[Row]:
        if not co:
            if c == 0:
                return None
            raise _Contradiction({"step": "contradiction", "constraint": f"{c} = 0"})
        g = _gcd(co.values())
        if c % g:
            raise _Contradiction({"step": "gcd", "constraint": self.fmt(co, c, EQ), "divisor": g})
        if g > 1:
            co = {v: k // g for v, k in co.items()}
            c //= g
        return co, c

    @staticmethod
    def subst(r: Row, v: int, e_co: Mapping[int, int], e_c: int) -> Row:
        co, c = r
        k = co.get(v, 0)
        if not k:
            return r
        out = {u: ku for u, ku in co.items() if u != v}
        for u, ku in e_co.items():
            val = out.get(u, 0) + k * ku
            if val:
                out[u] = val
            else:
                out.pop(u, None)
        return out, c + k * e_c

    # -- phases -------------------------------------------------------
    def substitute_equalities(self, eqs: List[Row], ineqs: List[Row]) -> Tuple[List[Row], List[Row]]:
        eqs = [r for r in (self.norm_eq(*e) for e in eqs) if r]
        ineqs = [r for r in (self.norm_ineq(*i) for i in ineqs) if r]
        while True:
            pick = None
            for idx, (co, _) in enumerate(eqs):
                units = sorted(v for v, k in co.items() if abs(k) == 1)
                if units:
                    pick = (idx, units[0])
                    break
            if pick is None:
                break
            idx, v = pick
            co, c = eqs.pop(idx)
            a = co[v]
            e_co = {u: -a * k for u, k in co.items() if u != v}
            e_c = -a * c
            self.stack.append(("subst", v, e_co, e_c))
            self.trace.append({"step": "substitute", "var": str(self.atoms[v]),
                               "by": str(self.expr(e_co, e_c))})
            eqs = [r for r in (self.norm_eq(*self.subst(e, v, e_co, e_c)) for e in eqs) if r]
            ineqs = [r for r in (self.norm_ineq(*self.subst(i, v, e_co, e_c)) for i in ineqs) if r]
        for co, c in eqs:
            for r in (self.norm_ineq(dict(co), c), self.norm_ineq({v: -k for v, k in co.items()}, -c)):
                if r:
                    ineqs.append(r)
        return eqs, ineqs

    def fourier_motzkin(self, ineqs: List[Row], keep: Iterable[int] = ()) -> Dict[tuple, Row]:
        """Eliminate every variable not in `keep`; returns the remaining rows."""
        keep = set(keep)
        rows: Dict[tuple, Row] = {}

        def put(co: Dict[int, int], c: int) -> None:
            key = tuple(sorted(co.items()))
            old = rows.get(key)
            if old is None or c < old[1]:
                rows[key] = (co, c)
            opp = rows.get(tuple((v, -k) for v, k in key))
            if opp is not None and opp[1] + rows[key][1] < 0:
                raise _Contradiction({"step": "contradiction",
                                      "constraint": f"{self.fmt(co, c)} against {self.fmt(*opp)}"})

        for r in ineqs:
            put(*r)
        while True:
            pos: Dict[int, List[tuple]] = defaultdict(list)
            neg: Dict[int, List[tuple]] = defaultdict(list)
            for key, (co, _) in rows.items():
                for v, k in co.items():
                    if v in keep:
                        continue
                    (pos if k > 0 else neg)[v].append(key)
            candidates = sorted(set(pos) | set(neg))
            if not candidates:
                return rows
            one_sided = [v for v in candidates if not pos.get(v) or not neg.get(v)]
            if one_sided:
                v = one_sided[0]
                keys = pos.get(v, []) + neg.get(v, [])
                self.stack.append(("bound", v, [rows[k] for k in keys]))
                self.trace.append({"step": "drop", "var": str(self.atoms[v]), "rows": len(keys)})
                for k in keys:
                    rows.pop(k, None)
                continue
            v = min(candidates, key=lambda u: (len(pos[u]) * len(neg[u]), u))
            lower = [rows[k] for k in pos[v]]
            upper = [rows[k] for k in neg[v]]
            self.stack.append(("bound", v, lower + upper))
            for k in pos[v] + neg[v]:
                del rows[k]
            made = 0
            for cp, kp in lower:
                a = cp[v]
                for cn, kn in upper:
                    b = -cn[v]
                    co = {u: b * k for u, k in cp.items() if u != v}
                    for u, k in cn.items():
                        if u == v:
                            continue
                        val = co.get(u, 0) + a * k
                        if val:
                            co[u] = val
                        else:
                            co.pop(u, None)
                    c = b * kp + a * kn
                    self.derived += 1
                    made += 1
                    if self.derived > self.caps.max_derived:
                        raise CapExceeded(f"derived inequality cap {self.caps.max_derived} exceeded")
                    if co and max(abs(x) for x in co.values()).bit_length() > self.caps.max_coeff_bits:
                        raise CapExceeded(f"coefficient size cap {self.caps.max_coeff_bits} bits exceeded")
                    r = self.norm_ineq(co, c)
                    if r:
                        put(*r)
            self.trace.append({"step": "eliminate", "var": str(self.atoms[v]),
                               "lower": len(lower), "upper": len(upper), "derived": made})

    # -- witness ------------------------------------------------------
    def witness(self, strategy: str) -> Optional[Dict[int, int]]:
        entries = [e for e in reversed(self.stack) if e[0] == "bound"]
        values: Dict[int, int] = {i: 0 for i in range(len(self.atoms))}
        nodes = [0]
        caps = self.caps

        def rec(i: int) -> bool:
            if i == len(entries):
                return True
            _, v, rows = entries[i]
            lo: Optional[int] = None
            hi: Optional[int] = None
            for co, c in rows:
                a = co[v]
                rest = c + sum(k * values[u] for u, k in co.items() if u != v)
                if a > 0:
                    b = _ceil_div(-rest, a)
                    lo = b if lo is None else max(lo, b)
                else:
                    b = rest // (-a)
                    hi = b if hi is None else min(hi, b)
            if lo is not None and hi is not None and lo > hi:
                return False
            for cand in _candidates(lo, hi, strategy, caps.witness_candidates):
                nodes[0] += 1
                if nodes[0] > caps.witness_max_nodes:
                    raise _Budget()
                values[v] = cand
                if rec(i + 1):
                    return True
            values[v] = 0
            return False

        try:
            if not rec(0):
                return None
        except _Budget:
            return None
        for entry in reversed(self.stack):
            if entry[0] == "subst":
                _, v, e_co, e_c = entry
                values[v] = e_c + sum(k * values[u] for u, k in e_co.items())
        return values


_OFFSETS = {"low": 0, "high": 5, "mid": 2}


def _candidates(lo: Optional[int], hi: Optional[int], strategy: str, limit: int) -> Iterator[int]:
    off = _OFFSETS.get(strategy, 0)
    if lo is not None and hi is not None:
        base = {"low": lo, "high": hi}.get(strategy, (lo + hi) // 2)
    elif lo is not None:
        base = lo + off
    elif hi is not None:
        base = hi - off
    else:
        base = off
    emitted = 0
    d = 0
    while emitted < limit:
        progressed = False
        for cand in ((base,) if d == 0 else (base + d, base - d)):
            if (lo is None or cand >= lo) and (hi is None or cand <= hi):
                progressed = True
                emitted += 1
                yield cand
                if emitted >= limit:
                    return
        if not progressed and lo is not None and hi is not None and base - d < lo and base + d > hi:
            return
        d += 1


def _holds(ls: LinearSystem, point: Mapping[Atom, int]) -> bool:
    for e in ls.eqs:
        if e.const + sum(k * point.get(a, 0) for a, k in e.terms) != 0:
            return False
    for e in ls.ineqs:
        if e.const + sum(k * point.get(a, 0) for a, k in e.terms) < 0:
            return False
    return True


def _run(ls: LinearSystem, caps: Caps) -> Tuple[_Eliminator, Optional[CheckResult]]:
    el = _Eliminator(ls, caps)
    try:
        _, ineqs = el.substitute_equalities([el.row(e) for e in ls.eqs], [el.row(e) for e in ls.ineqs])
        el.fourier_motzkin(ineqs)
    except _Contradiction as c:
        el.trace.append(c.step)
        return el, CheckResult(SatStatus.INTEGER_UNSAT, None, tuple(el.trace))
    except CapExceeded as e:
        return el, CheckResult(SatStatus.UNKNOWN, None, tuple(el.trace), diagnostic=str(e))
    return el, None


# ----------- Public API -----------
def check(ls: LinearSystem, caps: Caps = DEFAULT_CAPS, want_witness: bool = True,
          strategy: str = "low") -> CheckResult:
    el, verdict = _run(ls, caps)
    if verdict is not None:
        return verdict
    if want_witness:
        values = el.witness(strategy)
        if values is not None:
            point = {el.atoms[i]: v for i, v in values.items()}
            if _holds(ls, point):
                point = {a: point[a] for a in ls.vars}
                return CheckResult(SatStatus.INTEGER_SAT_WITNESS, point, tuple(el.trace))
    return CheckResult(SatStatus.RATIONAL_SAT_UNKNOWN_INTEGER, None, tuple(el.trace))


def witnesses(ls: LinearSystem, caps: Caps = DEFAULT_CAPS,
              strategies: Sequence[str] = ("low", "high", "mid")) -> List[Dict[Atom, int]]:
    """Integer points of `ls` found by back-substitution; empty when unsat or none found."""
    el, verdict = _run(ls, caps)
    if verdict is not None:
        return []
    out: List[Dict[Atom, int]] = []
    for s in strategies:
        values = el.witness(s)
        if values is None:
            continue
        point = {el.atoms[i]: v for i, v in values.items()}
        if _holds(ls, point):
            point = {a: point[a] for a in ls.vars}
            if point not in out:
                out.append(point)
    return out


def satisfies(point: Mapping[Atom, int], c: Constraint) -> bool:
    v = c.expr.const + sum(k * point.get(a, 0) for a, k in c.expr.terms)
    return v == 0 if c.kind == EQ else v >= 0


def entails(ls: LinearSystem, c: Constraint, caps: Caps = DEFAULT_CAPS,
            samples: Sequence[Mapping[Atom, int]] = ()) -> bool:
    """True only if every integer point of ls satisfies c (sound, possibly incomplete)."""
    n = normalize(c)
    if n.is_trivial() or ls.contains(n):
        return True
    for p in samples:
        if not satisfies(p, n):
            return False
    if n.kind == EQ:
        return (entails(ls, Constraint(GEQ, n.expr), caps)
                and entails(ls, Constraint(GEQ, -n.expr), caps))
    negated = Constraint(GEQ, -n.expr - 1)
    return check(ls.add([negated]), caps, want_witness=False).unsat


def refutes(ls: LinearSystem, cs: Iterable[Constraint], caps: Caps = DEFAULT_CAPS,
            samples: Sequence[Mapping[Atom, int]] = ()) -> bool:
    """True if ls together with all of cs has no integer solution."""
    cs = [normalize(c) for c in cs]
    if any(c.is_false() for c in cs):
        return True
    for p in samples:
        if all(satisfies(p, c) for c in cs):
            return False
    return check(ls.add(cs), caps, want_witness=False).unsat


def implied_equalities(ls: LinearSystem, exhaustive: bool = False, caps: Caps = DEFAULT_CAPS,
                       samples: Optional[Sequence[Mapping[Atom, int]]] = None) -> List[Constraint]:
    """
    Equalities over single variables and variable pairs entailed by ls but
    not already implied by its explicit equalities. Each returned equality
    has passed `entails` in both directions.
    """
    pts = list(samples) if samples is not None else witnesses(ls, caps)
    if not pts and check(ls, caps, want_witness=False).unsat:
        return []

    hull: List[AffineExpr] = list(ls.eqs)
    for e in ls.ineqs:
        if pts and any(satisfies(p, Constraint(GEQ, -e)) is False for p in pts):
            continue
        if entails(ls, Constraint(GEQ, -e), caps):
            hull.append(e)
    pool = sorted({a for e in hull for a in e.atoms()}, key=lambda a: a.sort_key())
    if not pool:
        return []

    together = set()
    for e in list(ls.eqs) + list(ls.ineqs):
        atoms = [a for a in e.atoms() if a in pool]
        for u, v in itertools.combinations(atoms, 2):
            together.add((u, v))
            together.add((v, u))

    candidates: List[AffineExpr] = []
    for a in pool:
        candidates.append(AffineExpr.of(a))
    for u, v in itertools.combinations(pool, 2):
        if exhaustive or (u, v) in together:
            candidates.append(AffineExpr.of(u) - AffineExpr.of(v))

    known = LinearSystem.of([Constraint(EQ, e) for e in ls.eqs])
    found: List[Constraint] = []
    for diff in candidates:
        if pts:
            vals = {diff.const + sum(k * p.get(a, 0) for a, k in diff.terms) for p in pts}
            if len(vals) != 1:
                continue
            d = vals.pop()
        else:
            lo, hi = constant_bounds(ls, diff, caps)
            if lo is None or lo != hi:
                continue
            d = lo
        cand = normalize(Constraint(EQ, diff - d))
        if cand.is_trivial() or entails(known, cand, caps):
            continue
        if entails(ls, cand, caps):
            found.append(cand)
            known = known.add([cand])
    return found


def _project_rows(ls: LinearSystem, drop: Iterable[Atom], caps: Caps) -> Tuple[_Eliminator, Dict[tuple, Row], bool]:
    el = _Eliminator(ls, caps)
    drop_idx = {el.index[a] for a in drop if a in el.index}
    eqs = [el.row(e) for e in ls.eqs]
    ineqs = [el.row(e) for e in ls.ineqs]
    exact = True
    # substitute unit equalities for dropped variables only
    changed = True
    while changed:
        changed = False
        for idx, (co, c) in enumerate(eqs):
            units = sorted(v for v, k in co.items() if v in drop_idx and abs(k) == 1)
            if not units:
                continue
            v = units[0]
            a = co[v]
            e_co = {u: -a * k for u, k in co.items() if u != v}
            e_c = -a * c
            eqs.pop(idx)
            eqs = [r for r in (el.norm_eq(*el.subst(e, v, e_co, e_c)) for e in eqs) if r]
            ineqs = [r for r in (el.norm_ineq(*el.subst(i, v, e_co, e_c)) for i in ineqs) if r]
            changed = True
            break
    kept_eqs = []
    for co, c in eqs:
        if any(v in drop_idx for v in co):
            exact = False
            for r in (el.norm_ineq(dict(co), c), el.norm_ineq({v: -k for v, k in co.items()}, -c)):
                if r:
                    ineqs.append(r)
        else:
            kept_eqs.append((co, c))
    for co, _ in ineqs:
        if any(abs(k) != 1 for v, k in co.items() if v in drop_idx):
            exact = False
    keep = set(range(len(el.atoms))) - drop_idx
    rows = el.fourier_motzkin(ineqs, keep=keep)
    for co, c in kept_eqs:
        rows[("eq",) + tuple(sorted(co.items()))] = (co, c)
    return el, rows, exact


def project(ls: LinearSystem, drop: Iterable[Atom], caps: Caps = DEFAULT_CAPS) -> Projection:
    """Rational shadow of ls with the `drop` atoms eliminated."""
    drop = list(drop)
    try:
        el, rows, exact = _project_rows(ls, drop, caps)
    except _Contradiction:
        false = Constraint(GEQ, AffineExpr.constant(-1))
        return Projection(LinearSystem.of([false], [a for a in ls.vars if a not in drop]), True)
    cs = []
    for key, (co, c) in rows.items():
        kind = EQ if key and key[0] == "eq" else GEQ
        cs.append(Constraint(kind, el.expr(co, c)))
    remaining = [a for a in ls.vars if a not in set(drop)]
    return Projection(LinearSystem.of(cs, remaining), exact)


def eliminate(ls: LinearSystem, v: Atom, caps: Caps = DEFAULT_CAPS) -> Projection:
    """Project out one variable; exact when every coefficient of v is +-1."""
    if v not in ls.vars:
        return Projection(ls, True)
    return project(ls, [v], caps)


def constant_bounds(ls: LinearSystem, e: AffineExpr, caps: Caps = DEFAULT_CAPS) -> Tuple[Optional[int], Optional[int]]:
    """Integer bounds of e over ls read from the projection onto a fresh variable."""
    from src.model.relation import Var

    d = Var("__bound__")
    aug = ls.add([Constraint(EQ, AffineExpr.of(d) - e)])
    proj = project(aug, [a for a in aug.vars if a != d], caps)
    lo: Optional[int] = None
    hi: Optional[int] = None
    for c in proj.system.constraints():
        k = c.expr.coeff(d)
        if not k:
            if c.is_false():
                return (None, None)
            continue
        if c.kind == EQ:
            val = -c.expr.const // k
            return (val, val)
        if k > 0:
            b = _ceil_div(-c.expr.const, k)
            lo = b if lo is None else max(lo, b)
        else:
            b = c.expr.const // (-k)
            hi = b if hi is None else min(hi, b)
    return (lo, hi)


def bounds_of(ls: LinearSystem, v: Atom, allowed: Iterable[Atom], caps: Caps = DEFAULT_CAPS
              ) -> Tuple[List[AffineExpr], List[AffineExpr], List[AffineExpr]]:
    """
    Affine bounds on v in terms of `allowed` atoms: (lower, upper, equal)
    where lower L means v >= L, upper U means v <= U, equal E means v = E.
    Only rows where v has a +-1 coefficient are reported.
    """
    allowed = set(allowed) | {v}
    proj = project(ls, [a for a in ls.vars if a not in allowed], caps)
    lower, upper, equal = [], [], []
    for c in proj.system.constraints():
        k = c.expr.coeff(v)
        if abs(k) != 1:
            continue
        rest = c.expr - AffineExpr.of(v, k)
        bound = rest if k < 0 else -rest
        if c.kind == EQ:
            equal.append(bound)
        elif k > 0:
            lower.append(bound)
        else:
            upper.append(bound)
    return lower, upper, equal
