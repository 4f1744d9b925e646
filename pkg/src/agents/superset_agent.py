# src/agents/superset_agent.py
"""
SupersetAgent

Role:
    Finds dependence relations whose runtime check is redundant because
    another relation of the same kernel covers every dependent pair of
    outer iterations (R1 ⊇ R2), then picks a minimal set of checks.

Inputs:
    - MAYBE relations (with their estimated complexities for tie-breaking).
    - config: enable_overlap, presburger caps.

Outputs:
    - SupersetClaim list with replayable evidence.
    - minimize(): kept relations and discarded claims; the claim graph is a
      networkx DiGraph with edges superset -> subset.

Assumptions:
    - Comparison is syntactic on normalized constraints after aligning
      iterator names; missing a claim only costs a runtime check.
    - The overlap rule is the exception: bounds on the renamed iterator may
      be spelled differently in the subset and are proven by entailment.
"""

import traceback
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx

from src.core.presburger import Caps, entails
from src.core.uf_encoding import ackermannize
from src.model.relation import (
    EQ,
    MAY,
    AffineExpr,
    Conjunction,
    Constraint,
    Relation,
    Var,
    format_constraint,
)
from src.utils.errors import SparseDepError, SupersetError, wrap_exc
from src.utils.logger import AgentLogger

TRIVIAL = "TRIVIAL"
OVERLAP = "OVERLAP"


@dataclass(frozen=True)
class SupersetClaim:
    superset: str
    subset: str
    rule: str
    evidence: Tuple[Tuple[str, Any], ...] = ()

    def to_record(self) -> Dict[str, Any]:
        return {"superset": self.superset, "subset": self.subset, "rule": self.rule, "evidence": dict(self.evidence)}


@dataclass
class Minimized:
    kept: List[str]
    discarded: List[SupersetClaim]
    claims: List[SupersetClaim]
    graph: nx.DiGraph = field(default_factory=nx.DiGraph)


def _iter_eq(c: Constraint) -> Optional[Tuple[str, str]]:
    """(u, v) when c is u = v over two iterators."""
    if c.kind != EQ or c.expr.const != 0 or len(c.expr.terms) != 2:
        return None
    (a, ka), (b, kb) = c.expr.terms
    if isinstance(a, Var) and isinstance(b, Var) and ka == -kb and abs(ka) == 1:
        return (a.name, b.name)
    return None


class _Aligner:
    """
    Backtracking search for a renaming of r1's iterators onto r2's.

    With `defer`, renamed constraints of r1 that r2 lacks and that are not
    iterator equalities are handed back instead of rejecting the mapping;
    they must share one iterator and the caller has to prove them.
    """

    def __init__(self, r1: Relation, c1: Conjunction, r2: Relation, c2: Conjunction, allow_missing: int,
                 defer: bool = False):
        self.r1, self.r2 = r1, r2
        self.c1 = list(c1)
        self.core2 = c2.core_set()
        self.allow_missing = allow_missing
        self.defer = defer
        self.vars_of = [c.expr.var_names() for c in self.c1]
        fixed = {r1.in_tuple[0]: r2.in_tuple[0], r1.out_tuple[0]: r2.out_tuple[0]}
        self.fixed = fixed
        self.free = [v for v in r1.iterators if v not in fixed]
        self.targets = [v for v in r2.iterators if v not in fixed.values()]
        self.sig1 = {v: self._signature(c1, v) for v in r1.iterators}
        self.sig2 = {v: self._signature(c2, v) for v in r2.iterators}

    @staticmethod
    def _signature(c: Conjunction, v: str) -> Tuple[int, Tuple[str, ...]]:
        count = 0
        ufs = set()
        for k in c:
            if v in k.expr.var_names():
                count += 1
                for t in k.expr.uf_terms():
                    for a in t.args:
                        if v in a.var_names():
                            ufs.add(t.name)
        return (count, tuple(sorted(ufs)))

    def _rename(self, c: Constraint, mapping: Dict[str, str]) -> Constraint:
        return c.substitute({Var(a): AffineExpr.var(b) for a, b in mapping.items()})

    def _ok(self, mapping: Dict[str, str]) -> Optional[Tuple[List[Constraint], List[Constraint]]]:
        missing: List[Constraint] = []
        deferred: List[Constraint] = []
        shared: Optional[frozenset] = None
        for c, names in zip(self.c1, self.vars_of):
            if not names <= mapping.keys():
                continue
            rc = self._rename(c, mapping)
            if rc.core in self.core2:
                continue
            if _iter_eq(rc) is not None:
                missing.append(rc)
                if len(missing) > self.allow_missing:
                    return None
                continue
            if not self.defer:
                return None
            names2 = rc.expr.var_names()
            shared = names2 if shared is None else shared & names2
            if not shared:
                return None
            deferred.append(rc)
        return missing, deferred

    def search(self):
        mapping = dict(self.fixed)
        if self._ok(mapping) is None:
            return
        yield from self._extend(mapping, 0)

    def _extend(self, mapping: Dict[str, str], i: int):
        if i == len(self.free):
            found = self._ok(mapping)
            if found is not None:
                yield (dict(mapping),) + found
            return
        v = self.free[i]
        used = set(mapping.values())
        options = [t for t in self.targets if t not in used]
        options.sort(key=lambda t: (self.sig1[v] != self.sig2[t], self.r2.iterators.index(t)))
        unconstrained = not any(v in names for names in self.vars_of)
        if unconstrained:
            options.append(f"__free_{v}")
        for t in options:
            mapping[v] = t
            if self._ok(mapping) is not None:
                yield from self._extend(mapping, i + 1)
            del mapping[v]


class SupersetAgent:
    DEFAULT_CONFIG: Dict[str, Any] = {
        "enable_overlap": True,
        "presburger": {},
    }

    def __init__(self, config: Optional[Dict[str, Any]] = None, run_id: Optional[str] = None):
        self.config = dict(self.DEFAULT_CONFIG)
        if config:
            self.config.update(config)
        self.run_id = run_id
        self.logger = AgentLogger("SupersetAgent", run_id=self.run_id)
        self.caps = Caps.from_config(self.config.get("presburger"))
        self.logger.debug("init", "SupersetAgent initialized", {"enable_overlap": self.config["enable_overlap"]})

    # ----------- Public API -----------

    def trivial_superset(self, r1: Relation, r2: Relation) -> Optional[SupersetClaim]:
        if r1.kernel != r2.kernel:
            return None
        used: List[Dict[str, str]] = []
        for c2 in r2.clauses:
            found = None
            for c1 in r1.clauses:
                for mapping, _, _ in _Aligner(r1, c1, r2, c2, 0).search():
                    found = mapping
                    break
                if found is not None:
                    break
            if found is None:
                return None
            used.append(found)
        ev = (("alignment", [{k: v for k, v in m.items() if not v.startswith("__free_")} for m in used]),)
        return SupersetClaim(r1.name, r2.name, TRIVIAL, ev)

    def overlap_superset(self, r1: Relation, r2: Relation) -> Optional[SupersetClaim]:
        if r1.kernel != r2.kernel or len(r1.clauses) != 1 or len(r2.clauses) != 1:
            return None
        c1, c2 = r1.clauses[0], r2.clauses[0]
        for mapping, missing, deferred in _Aligner(r1, c1, r2, c2, 1, defer=True).search():
            if len(missing) != 1:
                continue
            claim = self._overlap_step(r1, r2, c1, c2, mapping, missing[0], deferred)
            if claim is not None:
                return claim
        return None

    def claims(self, relations: Sequence[Relation]) -> List[SupersetClaim]:
        self.logger.info("start", "claims start", {"relations": len(relations)})
        try:
            out: List[SupersetClaim] = []
            for r1 in relations:
                for r2 in relations:
                    if r1.name == r2.name or r1.kernel != r2.kernel:
                        continue
                    claim = self.trivial_superset(r1, r2)
                    if claim is None and self.config.get("enable_overlap", True):
                        claim = self.overlap_superset(r1, r2)
                    if claim is not None:
                        out.append(claim)
                        self.logger.debug("claim", f"{r1.name} ⊇ {r2.name}", claim.to_record())
            self.logger.info("success", "claims completed", {"claims": len(out)})
            return out
        except SparseDepError:
            raise
        except Exception as e:
            self.logger.error("exception", "Unhandled exception in claims", {"trace": traceback.format_exc()})
            raise wrap_exc("superset detection failed", e, SupersetError)

    def minimize(self, relations: Sequence[Relation], cost_key: Optional[Dict[str, Any]] = None,
                 claims: Optional[List[SupersetClaim]] = None) -> Minimized:
        """Keep the cheapest relation of every covering chain; every discarded one has a kept superset."""
        if claims is None:
            claims = self.claims(relations)
        g = nx.DiGraph()
        g.add_nodes_from(r.name for r in relations)
        for c in claims:
            g.add_edge(c.superset, c.subset, claim=c)
        cost_key = cost_key or {}
        order = sorted((r.name for r in relations), key=lambda n: (cost_key.get(n, ()), n))
        kept: List[str] = []
        discarded: Dict[str, SupersetClaim] = {}
        for name in order:
            cover = next((k for k in kept if g.has_edge(k, name)), None)
            if cover is not None:
                discarded[name] = g.edges[cover, name]["claim"]
            else:
                kept.append(name)
        for name in list(kept):
            cover = next((k for k in kept if k != name and g.has_edge(k, name)), None)
            if cover is not None:
                kept.remove(name)
                discarded[name] = g.edges[cover, name]["claim"]
        kept_sorted = [r.name for r in relations if r.name in kept]
        self.logger.info("minimize", "Minimized runtime checks",
                         {"input": len(relations), "kept": len(kept_sorted), "claims": len(claims)})
        return Minimized(kept_sorted, [discarded[r.name] for r in relations if r.name in discarded], claims, g)

    # ---------- Internal helpers ----------

    def _overlap_step(self, r1: Relation, r2: Relation, c1: Conjunction, c2: Conjunction,
                      mapping: Dict[str, str], missing: Constraint,
                      deferred: Sequence[Constraint] = ()) -> Optional[SupersetClaim]:
        """Rename the superset's distinguished iterator onto the subset's and prove its bounds there."""
        u, v = _iter_eq(missing)
        similar = []
        for c in c2:
            pair = _iter_eq(c)
            if pair is None:
                continue
            for shared, own in ((u, v), (v, u)):
                if shared in pair:
                    other = pair[1] if pair[0] == shared else pair[0]
                    if other != own:
                        similar.append((shared, own, other, c))
        if not similar:
            return None
        inverse = {b: a for a, b in mapping.items()}
        for shared, sup_it, sub_it, eq_c in similar:
            src_it = inverse.get(sup_it)
            if src_it is None:
                continue
            if any(sup_it not in k.expr.var_names() for k in deferred):
                continue
            bounds = [k for k in c1 if src_it in k.expr.var_names() and _iter_eq(k) is None]
            if any(k.tag == MAY for k in bounds):
                self.logger.debug("overlap_rejected", "superset-side bounds are may accesses",
                                  {"superset": r1.name, "subset": r2.name, "iterator": src_it})
                continue
            renamed = [k.substitute({Var(a): AffineExpr.var(b) for a, b in {**mapping, src_it: sub_it}.items()})
                       for k in bounds]
            enc = None
            ok = True
            for k in renamed:
                if k.core in c2.core_set():
                    continue
                if enc is None:
                    enc = ackermannize(c2, self.caps)
                if not entails(enc.system, enc.table.encode(k), self.caps):
                    ok = False
                    break
            if not ok:
                continue
            sub_bounds = [format_constraint(k) for k in c2 if sub_it in k.expr.var_names() and _iter_eq(k) is None]
            ev = (
                ("missing_equality", format_constraint(missing)),
                ("similar_equality", format_constraint(eq_c)),
                ("superset_iterator", sup_it),
                ("subset_iterator", sub_it),
                ("superset_bounds", [format_constraint(k) for k in renamed]),
                ("subset_bounds", sub_bounds),
                ("superset_exact", True),
            )
            return SupersetClaim(r1.name, r2.name, OVERLAP, ev)
        return None
