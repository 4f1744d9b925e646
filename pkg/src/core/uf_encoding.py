# src/core/uf_encoding.py
"""
Index-array encoding

Role:
    Replace index-array (UF) terms by fresh integer variables, innermost
    first, and keep functional consistency between bindings of the same
    array: equal arguments force equal results.

Inputs:
    - A normalized clause (Conjunction) whose atoms may be UFTerms.

Outputs:
    - Encoding: the linear system over iterators, symbolic constants and
      fresh variables; the binding table; consistency obligations that are
      neither forced nor discharged by the clause.

Assumptions:
    - Bindings are keyed on the encoded term, so f(g(i)) and f(v) with v
      bound to g(i) share one variable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from src.core.presburger import DEFAULT_CAPS, Caps, LinearSystem, entails, refutes, witnesses
from src.model.relation import (
    AffineExpr,
    Atom,
    Conjunction,
    Constraint,
    Relation,
    UFTerm,
    Var,
    eq,
    geq,
)


@dataclass(frozen=True)
class UFBinding:
    term: UFTerm
    fresh_var: Var
    arg_exprs: Tuple[AffineExpr, ...]

    @property
    def symbol(self) -> str:
        return self.term.name


@dataclass(frozen=True)
class Obligation:
    """left.args = right.args  =>  left.var = right.var"""
    left: UFBinding
    right: UFBinding

    @property
    def antecedent(self) -> Tuple[Constraint, ...]:
        return tuple(eq(a - b) for a, b in zip(self.left.arg_exprs, self.right.arg_exprs))

    @property
    def consequent(self) -> Tuple[Constraint, ...]:
        return (eq(AffineExpr.of(self.left.fresh_var) - AffineExpr.of(self.right.fresh_var)),)

    @property
    def label(self) -> str:
        return f"consistency({self.left.term}, {self.right.term})"


@dataclass(frozen=True)
class GroundTermSet:
    exprs: Tuple[AffineExpr, ...] = ()

    def __len__(self) -> int:
        return len(self.exprs)

    def __iter__(self):
        return iter(self.exprs)


class TermTable:
    """Lazy map from UF terms to fresh variables; names follow binding order per symbol."""

    def __init__(self):
        self.by_key: Dict[UFTerm, UFBinding] = {}
        self.order: List[UFBinding] = []
        self._counts: Dict[str, int] = {}
        self.resolved: set = set()

    def __len__(self) -> int:
        return len(self.order)

    def __contains__(self, term: UFTerm) -> bool:
        return self._key(term) in self.by_key

    def _key(self, term: UFTerm) -> UFTerm:
        return UFTerm(term.name, tuple(self.encode_expr(a, bind=False) for a in term.args))

    def bind(self, term: UFTerm) -> Var:
        args = tuple(self.encode_expr(a) for a in term.args)
        key = UFTerm(term.name, args)
        hit = self.by_key.get(key)
        if hit is not None:
            return hit.fresh_var
        k = self._counts.get(term.name, 0)
        self._counts[term.name] = k + 1
        b = UFBinding(term, Var(f"_{term.name}{k}"), args)
        self.by_key[key] = b
        self.order.append(b)
        return b.fresh_var

    def encode_expr(self, e: AffineExpr, bind: bool = True) -> AffineExpr:
        out: Dict[Atom, int] = {}
        for a, k in e.terms:
            if isinstance(a, UFTerm):
                if bind:
                    a = self.bind(a)
                else:
                    key = UFTerm(a.name, tuple(self.encode_expr(x, bind=False) for x in a.args))
                    hit = self.by_key.get(key)
                    a = hit.fresh_var if hit is not None else key
            out[a] = out.get(a, 0) + k
        return AffineExpr.build(e.const, out)

    def encode(self, c: Constraint) -> Constraint:
        return Constraint(c.kind, self.encode_expr(c.expr), c.tag)

    def knows_all(self, cs: Iterable[Constraint]) -> bool:
        return all(t in self for c in cs for t in c.expr.uf_terms(nested=True))

    def reverse(self) -> Dict[Var, UFTerm]:
        return {b.fresh_var: b.term for b in self.order}

    def decode(self, e: AffineExpr) -> AffineExpr:
        back = {v: AffineExpr.of(t) for v, t in self.reverse().items()}
        return e.substitute(back)

    def pairs(self) -> Iterable[Tuple[UFBinding, UFBinding]]:
        by_sym: Dict[str, List[UFBinding]] = {}
        for b in self.order:
            by_sym.setdefault(b.symbol, []).append(b)
        for sym in sorted(by_sym):
            yield from itertools.combinations(by_sym[sym], 2)


@dataclass
class Encoding:
    system: LinearSystem
    table: TermTable
    obligations: List[Obligation] = field(default_factory=list)
    trace: List[dict] = field(default_factory=list)

    @property
    def bindings(self) -> Tuple[UFBinding, ...]:
        return tuple(self.table.order)


def settle(ls: LinearSystem, table: TermTable, caps: Caps = DEFAULT_CAPS,
           rounds: int = 3) -> Tuple[LinearSystem, List[Obligation], List[dict]]:
    """
    Decide consistency obligations against ls until nothing changes.
    Forced pairs add a result equality, separated pairs are discharged;
    undecided pairs are returned as pending obligations.
    """
    trace: List[dict] = []
    pending: List[Obligation] = []
    for _ in range(rounds):
        changed = False
        pending = []
        samples = witnesses(ls, caps)
        for left, right in table.pairs():
            pair = (left.fresh_var, right.fresh_var)
            if pair in table.resolved:
                continue
            ob = Obligation(left, right)
            args_eq = ob.antecedent
            if all(entails(ls, c, caps, samples) for c in args_eq):
                ls = ls.add(ob.consequent)
                table.resolved.add(pair)
                trace.append({"event": "consistency_equal", "pair": ob.label})
                changed = True
                continue
            if refutes(ls, ob.consequent, caps, samples):
                # results differ: arguments differ; keep the order when it is known
                table.resolved.add(pair)
                if len(args_eq) == 1:
                    a, b = left.arg_exprs[0], right.arg_exprs[0]
                    if entails(ls, geq(b - a), caps, samples):
                        ls = ls.add([geq(b - a - 1)])
                        changed = True
                    elif entails(ls, geq(a - b), caps, samples):
                        ls = ls.add([geq(a - b - 1)])
                        changed = True
                trace.append({"event": "consistency_contrapositive", "pair": ob.label})
                continue
            if any(refutes(ls, [c], caps, samples) for c in args_eq):
                table.resolved.add(pair)
                trace.append({"event": "consistency_discharged", "pair": ob.label})
                continue
            pending.append(ob)
        if not changed:
            break
    return ls, pending, trace


# ----------- Public API -----------
def ackermannize(clause: Conjunction, caps: Caps = DEFAULT_CAPS,
                 table: Optional[TermTable] = None) -> Encoding:
    table = table if table is not None else TermTable()
    terms = sorted(set(clause.uf_terms()), key=lambda t: (t.depth, t.sort_key()))
    for t in terms:
        table.bind(t)
    ls = LinearSystem.of(table.encode(c) for c in clause)
    ls, pending, trace = settle(ls, table, caps)
    return Encoding(ls, table, pending, trace)


def ground_terms(r) -> GroundTermSet:
    """Argument expressions of every UF call of a relation (or one clause), nested calls included."""
    clauses: Sequence[Conjunction] = r.clauses if isinstance(r, Relation) else (r,)
    seen: Dict[AffineExpr, None] = {}
    for clause in clauses:
        for t in clause.uf_terms():
            for a in t.args:
                seen[a] = None
    return GroundTermSet(tuple(sorted(seen, key=lambda e: e.sort_key())))


def evaluate_bindings(table: TermTable, env: Mapping[str, int], uf) -> Dict[Var, int]:
    """Concrete values of fresh variables under an index-array interpretation."""
    return {b.fresh_var: AffineExpr.of(b.term).evaluate(env, uf) for b in table.order}
