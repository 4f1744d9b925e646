# src/core/assertions.py
"""
Assertion engine

Role:
    Universally quantified index-array assertions: builtin property sugar,
    classification of user `forall` assertions, instantiation over the
    ground-term set and the two-phase use of instances against an encoded
    clause (phase 1 adds only non-disjunctive facts, phase 2 splits cases).

Inputs:
    - Assertions from problem files (`assert strict_monotone(rowptr);`,
      `assert forall x1, x2 : ... -> ...;`).
    - Encoded clauses from src/core/uf_encoding.py.

Outputs:
    - Instances, TwoPhaseResult (verdict for one clause, trace, fired labels).

Assumptions:
    - Instances only ever strengthen the clause with facts true for every
      index array satisfying the assertion, so UNSAT stays sound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from src.core.presburger import (
    DEFAULT_CAPS,
    Caps,
    LinearSystem,
    check,
    entails,
    refutes,
    satisfies,
    witnesses,
)
from src.core.uf_encoding import Encoding, GroundTermSet, ackermannize, settle
from src.model.relation import (
    GEQ,
    AffineExpr,
    Conjunction,
    Constraint,
    UFSymbol,
    UFTerm,
    Var,
    eq,
    geq,
    negate_geq,
)
from src.utils.errors import AssertionSpecError, CapExceeded

FORM1 = "FORM1"
FORM2 = "FORM2"
FORM3 = "FORM3"
GENERAL = "GENERAL"

CAT_MONOTONICITY = "monotonicity"
CAT_CORRELATED = "correlated_monotonicity"
CAT_TRIANGULAR = "triangular"
CAT_OTHER = "other"
CATEGORIES = (CAT_MONOTONICITY, CAT_CORRELATED, CAT_TRIANGULAR, CAT_OTHER)


@dataclass(frozen=True)
class Assertion:
    name: str
    quantified_vars: Tuple[str, ...]
    antecedent: Conjunction
    consequent: Conjunction
    form: str = GENERAL
    c1: int = 0
    c2: int = 0
    category: str = CAT_OTHER
    converse: bool = False
    source: str = ""

    def symbols(self) -> FrozenSet[str]:
        return frozenset(t.name for part in (self.antecedent, self.consequent) for t in part.uf_terms())

    def __str__(self) -> str:
        if self.source:
            return self.source
        q = ", ".join(self.quantified_vars)
        return f'"{self.name}" forall {q} : {self.antecedent} -> {self.consequent}'


@dataclass(frozen=True)
class InstanceBudget:
    max_instances: int = 1000
    max_disjunctive: int = 100
    phase1_sweeps: int = 4
    max_split_nodes: int = 512
    require_known_terms: bool = True

    def __post_init__(self):
        if self.max_instances <= 0 or self.max_disjunctive < 0 or self.phase1_sweeps <= 0:
            raise ValueError(f"invalid instance budget {self}")

    @staticmethod
    def from_config(cfg: Optional[Mapping]) -> "InstanceBudget":
        cfg = cfg or {}
        return InstanceBudget(
            max_instances=int(cfg.get("max_instances", 1000)),
            max_disjunctive=int(cfg.get("max_disjunctive", 100)),
            phase1_sweeps=int(cfg.get("phase1_sweeps", 4)),
            max_split_nodes=int(cfg.get("max_split_nodes", 512)),
            require_known_terms=bool(cfg.get("require_known_terms", True)),
        )


DEFAULT_BUDGET = InstanceBudget()


@dataclass(frozen=True)
class Instance:
    assertion: str
    args: Tuple[AffineExpr, ...]
    antecedent: Conjunction
    consequent: Conjunction

    @property
    def label(self) -> str:
        return f"{self.assertion}[{', '.join(str(a) for a in self.args)}]"

    @property
    def size(self) -> int:
        return sum(len(c.expr.terms) for c in self.antecedent)


@dataclass(frozen=True)
class InstanceSet:
    instances: Tuple[Instance, ...]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


@dataclass
class TwoPhaseResult:
    unsat: bool
    system: LinearSystem
    pending: Tuple[object, ...] = ()
    trace: List[dict] = field(default_factory=list)
    fired: Tuple[str, ...] = ()
    capped: bool = False
    certificate: Tuple[dict, ...] = ()


# ----------------------------------------------------------------------
# Templates
# ----------------------------------------------------------------------
def _x(name: str) -> AffineExpr:
    return AffineExpr.var(name)


def _app(f: str, arg: AffineExpr) -> AffineExpr:
    return AffineExpr.of(UFTerm(f, (arg,)))


def _lt(a: AffineExpr, b: AffineExpr, c: int) -> Constraint:
    """a + c <= b"""
    return geq(b - a - c)


def _make(name, ante, cons, form, c1, c2, category, converse=False, source="",
          qvars=("x1", "x2")) -> Assertion:
    return Assertion(name, tuple(qvars), Conjunction.of(ante), Conjunction.of(cons),
                     form, c1, c2, category, converse, source)


def _templates(f: str, g: str, p: str, q: str) -> List[Tuple[str, int, int, str, bool, Conjunction, Conjunction]]:
    """(form, c1, c2, category, converse, antecedent, consequent) shapes over quantified p, q."""
    xp, xq = _x(p), _x(q)
    out = []
    for c1, c2 in itertools.product((0, 1), (0, 1)):
        shapes = []
        if f == g:
            shapes.append((FORM1, CAT_MONOTONICITY, [_lt(xp, xq, c1)], [_lt(_app(f, xp), _app(f, xq), c2)]))
        else:
            shapes.append((FORM2, CAT_CORRELATED, [_lt(xp, xq, c1)], [_lt(_app(f, xp), _app(g, xq), c2)]))
            shapes.append((FORM3, CAT_TRIANGULAR, [_lt(xp, _app(f, xq), c1)], [_lt(_app(g, xp), xq, c2)]))
        for form, cat, ante, cons in shapes:
            out.append((form, c1, c2, cat, False, Conjunction.of(ante), Conjunction.of(cons)))
            out.append((form, c2, c1, cat, True, Conjunction.of(cons), Conjunction.of(ante)))
    if f != g:
        out.append((GENERAL, 0, 0, CAT_CORRELATED, False,
                    Conjunction.of([eq(xp - xq)]), Conjunction.of([_lt(_app(f, xp), _app(g, xq), 0)])))
        out.append((GENERAL, 1, 1, CAT_TRIANGULAR, True,
                    Conjunction.of([_lt(_app(f, xp), xq, 1)]), Conjunction.of([_lt(xp, _app(g, xq), 1)])))
    return out


def _check_symbols(fn: str, args: Sequence[str], ufs: Optional[Mapping[str, UFSymbol]]) -> None:
    if ufs is None:
        return
    for a in args:
        u = ufs.get(a)
        if u is None:
            raise AssertionSpecError(f"{fn}: undeclared index array {a!r}")
        if u.arity != 1:
            raise AssertionSpecError(f"{fn}: index array {a!r} has arity {u.arity}, expected 1")


_BUILTIN_ARITY = {
    "strict_monotone": (1,),
    "monotone": (1,),
    "strict_antitone_pair": (2,),
    "correlated_bound": (2,),
    "triangular": (2, 3),
}


# ----------- Public API -----------
def builtin(fn: str, *args: str, ufs: Optional[Mapping[str, UFSymbol]] = None,
            name: Optional[str] = None) -> Tuple[Assertion, ...]:
    """Assertions for one builtin property declaration, e.g. builtin("strict_monotone", "rowptr")."""
    if fn not in _BUILTIN_ARITY:
        raise AssertionSpecError(f"unknown builtin assertion {fn!r}")
    if len(args) not in _BUILTIN_ARITY[fn]:
        raise AssertionSpecError(f"{fn} takes {' or '.join(map(str, _BUILTIN_ARITY[fn]))} argument(s), got {len(args)}")
    if fn == "triangular" and len(args) == 3 and args[2] != "column":
        raise AssertionSpecError(f"triangular: third argument must be 'column', got {args[2]!r}")
    arrays = args[:2] if fn == "triangular" else args
    _check_symbols(fn, arrays, ufs)

    base = name or f"{fn}({', '.join(args)})"
    source = (f'"{name}" ' if name else "") + f"{fn}({', '.join(args)})"
    x1, x2 = _x("x1"), _x("x2")

    if fn == "strict_monotone":
        f = args[0]
        return (
            _make(base, [_lt(x1, x2, 1)], [_lt(_app(f, x1), _app(f, x2), 1)], FORM1, 1, 1, CAT_MONOTONICITY,
                  source=source),
            _make(f"{base}#converse", [_lt(_app(f, x1), _app(f, x2), 1)], [_lt(x1, x2, 1)], FORM1, 1, 1,
                  CAT_MONOTONICITY, converse=True, source=source),
        )
    if fn == "monotone":
        f = args[0]
        return (_make(base, [_lt(x1, x2, 0)], [_lt(_app(f, x1), _app(f, x2), 0)], FORM1, 0, 0, CAT_MONOTONICITY,
                      source=source),)
    if fn == "strict_antitone_pair":
        f, g = args
        return (_make(base, [_lt(x1, x2, 1)], [_lt(_app(g, x1), _app(f, x2), 1)], FORM2, 1, 1, CAT_CORRELATED,
                      source=source),)
    if fn == "correlated_bound":
        f, g = args
        return (
            _make(base, [eq(x1 - x2)], [_lt(_app(f, x1), _app(g, x2), 0)], GENERAL, 0, 0, CAT_CORRELATED,
                  source=source),
            _make(f"{base}#strict", [_lt(x1, x2, 1)], [_lt(_app(g, x1), _app(f, x2), 1)], FORM2, 1, 1,
                  CAT_CORRELATED, source=source),
        )
    f, g = args[0], args[1]
    if len(args) == 3:
        return (_make(base, [_lt(_app(f, x1), x2, 1)], [_lt(x1, _app(g, x2), 1)], FORM3, 1, 1, CAT_TRIANGULAR,
                      converse=True, source=source),)
    return (_make(base, [_lt(x1, _app(f, x2), 1)], [_lt(_app(g, x1), x2, 1)], FORM3, 1, 1, CAT_TRIANGULAR,
                  source=source),)


def forall_assertion(name: str, qvars: Sequence[str], antecedent: Conjunction,
                     consequent: Conjunction) -> Assertion:
    """Classify a user assertion against the three general forms (and their converses)."""
    qvars = tuple(qvars)
    if len(set(qvars)) != len(qvars):
        raise AssertionSpecError(f"assertion {name}: repeated quantified variable in {list(qvars)}")
    for part in (antecedent, consequent):
        stray = part.var_names() - set(qvars)
        if stray:
            raise AssertionSpecError(f"assertion {name}: unquantified variable(s) {sorted(stray)}")
    plain = Assertion(name, qvars, antecedent, consequent)
    syms = sorted(plain.symbols())
    if len(qvars) == 2 and 1 <= len(syms) <= 2:
        pairs = [(syms[0], syms[0])] if len(syms) == 1 else [(syms[0], syms[1]), (syms[1], syms[0])]
        for f, g in pairs:
            for p, q in itertools.permutations(qvars):
                for form, c1, c2, cat, conv, ante, cons in _templates(f, g, p, q):
                    if ante.core_set() == antecedent.core_set() and cons.core_set() == consequent.core_set():
                        return Assertion(name, qvars, antecedent, consequent, form, c1, c2, cat, conv)
    return plain


def instantiate(a: Assertion, E: Iterable[AffineExpr], budget: InstanceBudget = DEFAULT_BUDGET) -> InstanceSet:
    """Instances of `a` over E^n in lexicographic order of the sorted ground terms."""
    exprs = sorted(set(E), key=lambda e: e.sort_key())
    out: List[Instance] = []
    if not exprs:
        return InstanceSet(())
    qs = [Var(q) for q in a.quantified_vars]
    for vec in itertools.product(exprs, repeat=len(qs)):
        if len(out) >= budget.max_instances:
            return InstanceSet(tuple(out), truncated=True)
        sub = dict(zip(qs, vec))
        out.append(Instance(a.name, tuple(vec), a.antecedent.substitute(sub), a.consequent.substitute(sub)))
    return InstanceSet(tuple(out))


def instantiate_all(assertions: Iterable[Assertion], E: GroundTermSet,
                    budget: InstanceBudget = DEFAULT_BUDGET) -> InstanceSet:
    """Instances of every assertion, sharing one max_instances budget."""
    out: List[Instance] = []
    truncated = False
    for a in assertions:
        left = budget.max_instances - len(out)
        if left <= 0:
            truncated = True
            break
        sub = instantiate(a, E, InstanceBudget(left, budget.max_disjunctive, budget.phase1_sweeps,
                                               budget.max_split_nodes, budget.require_known_terms))
        out.extend(sub.instances)
        truncated = truncated or sub.truncated
    return InstanceSet(tuple(out), truncated)


# ----------------------------------------------------------------------
# Two-phase instantiation
# ----------------------------------------------------------------------
def _negation(ls: LinearSystem, ante: Sequence[Constraint], caps: Caps,
              samples) -> Optional[Constraint]:
    """A single constraint equivalent to not(ante) under ls, if one exists."""
    if len(ante) != 1:
        return None
    c = ante[0]
    if c.kind == GEQ:
        return negate_geq(c)
    # e != 0 collapses to one strict side when the other side is known
    if entails(ls, Constraint(GEQ, c.expr), caps, samples):
        return geq(c.expr - 1)
    if entails(ls, Constraint(GEQ, -c.expr), caps, samples):
        return geq(-c.expr - 1)
    return None


def _branches(ante: Sequence[Constraint], cons: Sequence[Constraint]) -> List[List[Constraint]]:
    out: List[List[Constraint]] = []
    for c in ante:
        if c.kind == GEQ:
            out.append([negate_geq(c)])
        else:
            out.append([geq(c.expr - 1)])
            out.append([geq(-c.expr - 1)])
    out.append(list(ante) + list(cons))
    return out


def _holds_all(point: Mapping, cs: Sequence[Constraint]) -> Optional[bool]:
    for c in cs:
        if any(a not in point for a in c.expr.atoms()):
            return None
    return all(satisfies(point, c) for c in cs)


def apply_two_phase(enc: Encoding, instances: Iterable[Instance], budget: InstanceBudget = DEFAULT_BUDGET,
                    caps: Caps = DEFAULT_CAPS) -> TwoPhaseResult:
    ls = enc.system
    table = enc.table
    trace: List[dict] = list(enc.trace)
    fired: List[str] = []
    live: List[Tuple[Instance, List[Constraint], List[Constraint]]] = []

    for inst in instances:
        if budget.require_known_terms and not (table.knows_all(inst.antecedent) and table.knows_all(inst.consequent)):
            continue
        ante = [table.encode(c) for c in inst.antecedent]
        cons = [table.encode(c) for c in inst.consequent]
        if any(c.is_false() for c in ante) or not cons:
            continue
        live.append((inst, ante, cons))

    def unsat_now(system: LinearSystem) -> Optional[Tuple[dict, ...]]:
        res = check(system, caps, want_witness=False)
        return res.certificate if res.unsat else None

    cert = unsat_now(ls)
    if cert is not None:
        return TwoPhaseResult(True, ls, (), trace, (), False, cert)

    # phase 1
    for sweep in range(budget.phase1_sweeps):
        changed = False
        samples = witnesses(ls, caps)
        remaining = []
        for inst, ante, cons in live:
            if all(entails(ls, c, caps, samples) for c in ante):
                ls = ls.add(cons)
                fired.append(inst.label)
                trace.append({"event": "fired", "instance": inst.label, "sweep": sweep})
                samples = [p for p in samples if all(satisfies(p, c) for c in cons)]
                changed = True
            elif refutes(ls, cons, caps, samples):
                neg = _negation(ls, ante, caps, samples)
                if neg is None:
                    remaining.append((inst, ante, cons))
                    continue
                ls = ls.add([neg])
                fired.append(inst.label)
                trace.append({"event": "contrapositive", "instance": inst.label, "sweep": sweep})
                samples = [p for p in samples if satisfies(p, neg)]
                changed = True
            elif refutes(ls, ante, caps, samples):
                trace.append({"event": "dropped", "instance": inst.label, "reason": "antecedent refuted"})
            else:
                remaining.append((inst, ante, cons))
            if changed and not samples:
                cert = unsat_now(ls)
                if cert is not None:
                    return TwoPhaseResult(True, ls, (), trace, tuple(fired), False, cert)
        live = remaining
        if not changed:
            break
        ls, pending_obs, settle_trace = settle(ls, table, caps)
        trace.extend(settle_trace)
        cert = unsat_now(ls)
        if cert is not None:
            return TwoPhaseResult(True, ls, (), trace, tuple(fired), False, cert)

    ls, pending_obs, settle_trace = settle(ls, table, caps)
    trace.extend(settle_trace)
    cert = unsat_now(ls)
    if cert is not None:
        return TwoPhaseResult(True, ls, (), trace, tuple(fired), False, cert)

    # phase 2
    items: List[Tuple[str, List[Constraint], List[Constraint], object]] = []
    for inst, ante, cons in live:
        items.append((inst.label, ante, cons, inst))
    for ob in pending_obs:
        items.append((ob.label, list(ob.antecedent), list(ob.consequent), ob))
    items.sort(key=lambda it: (sum(len(c.expr.terms) for c in it[1]), it[0]))
    capped = False
    if len(items) > budget.max_disjunctive:
        for it in items[budget.max_disjunctive:]:
            trace.append({"event": "dropped", "instance": it[0], "reason": "max_disjunctive"})
        items = items[:budget.max_disjunctive]
        capped = True
    pending = tuple(it[3] for it in items)
    if not items:
        return TwoPhaseResult(False, ls, pending, trace, tuple(fired), capped)

    nodes = [0]
    used: Dict[str, None] = {}

    def dfs(system: LinearSystem, i: int) -> bool:
        nodes[0] += 1
        if nodes[0] > budget.max_split_nodes:
            raise CapExceeded(f"case-split node cap {budget.max_split_nodes} exceeded")
        res = check(system, caps)
        if res.unsat:
            return True
        if i == len(items):
            return False
        w = res.witness
        if w is not None:
            satisfied = True
            for _, ante, cons, _ in items[i:]:
                ok = _holds_all(w, cons)
                if not ok:
                    ok = any(_holds_all(w, b) for b in _branches(ante, [])[:-1])
                if not ok:
                    satisfied = False
                    break
            if satisfied:
                return False
        label, ante, cons, _ = items[i]
        if all(entails(system, c, caps) for c in ante):
            used[label] = None
            return dfs(system.add(cons), i + 1)
        if refutes(system, ante, caps):
            return dfs(system, i + 1)
        branches = _branches(ante, cons)
        if w is not None:
            branches.sort(key=lambda b: 0 if _holds_all(w, b) else 1)
        used[label] = None
        for b in branches:
            if not dfs(system.add(b), i + 1):
                return False
        trace.append({"event": "split", "instance": label, "branches": len(branches)})
        return True

    try:
        unsat = dfs(ls, 0)
    except CapExceeded as e:
        trace.append({"event": "cap_hit", "reason": str(e)})
        return TwoPhaseResult(False, ls, pending, trace, tuple(fired), True)
    if unsat:
        return TwoPhaseResult(True, ls, pending, trace, tuple(fired) + tuple(used), capped,
                              ({"step": "case_split", "items": list(used)},))
    return TwoPhaseResult(False, ls, pending, trace, tuple(fired), capped)


def replay(clause: Conjunction, assertions: Iterable[Assertion], fired: Iterable[str], E: GroundTermSet,
           budget: InstanceBudget = DEFAULT_BUDGET, caps: Caps = DEFAULT_CAPS) -> bool:
    """Re-run one clause using only the named instances; True when UNSAT is reproduced."""
    wanted = set(fired)
    enc = ackermannize(clause, caps)
    if check(enc.system, caps, want_witness=False).unsat:
        return True
    pool = instantiate_all(assertions, E, budget)
    chosen = [i for i in pool if i.label in wanted]
    return apply_two_phase(enc, chosen, budget, caps).unsat
