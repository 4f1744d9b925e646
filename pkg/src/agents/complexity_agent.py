# src/agents/complexity_agent.py
"""
ComplexityAgent

Role:
    Estimates the cost of the runtime inspector a dependence relation needs,
    before and after equality simplification, in report notation
    (`n`, `nnz`, `nnz/n`).

Inputs:
    - A relation clause plus certified equalities (from AnalysisAgent).
    - config: density used to order costs (nnz = density * n).

Outputs:
    - LoopNestModel per clause (which iterator is a loop, which is derived,
      which is projected out) and a ComplexityExpr per relation.

Assumptions:
    - One generated loop nest per surviving clause, coefficient 1 each.
    - Index-array terms are opaque atoms while projecting iterators.
"""

import re
import traceback
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from src.core.presburger import Caps, LinearSystem, bounds_of, project
from src.model.relation import (
    ROLE_NNZ,
    AffineExpr,
    Atom,
    Conjunction,
    Constraint,
    Relation,
    Sym,
    Var,
    format_expr,
)
from src.utils.errors import ComplexityError, SparseDepError, UnboundedIteratorError, wrap_exc
from src.utils.logger import AgentLogger

N, NNZ, AVG = "N", "NNZ", "AVG"
DIMENSION = "dimension"
UF_RANGE = "uf-range"
DERIVED = "derived-by-equality"
PROJECTED = "projected-out"
CONSTANT = "constant"

Monomial = Tuple[int, int, int]  # exponents of n, nnz, nnz/n

_SUPERSCRIPTS = {ord(s): f"^{d}" for s, d in zip("⁰¹²³⁴⁵⁶⁷⁸⁹", "0123456789")}
_FACTOR_RE = re.compile(r"(\(nnz/n\)|nnz/n|nnz|n)(?:\s*\^\s*(\d+))?")
_TERM_RE = re.compile(r"^\s*(\d+|[kK])?\s*(.*?)\s*$")


def _canonical(m: Monomial) -> Monomial:
    a, b, c = m
    k = min(a, c)
    return (a - k, b + k, c - k)


def _growth(m: Monomial) -> Tuple[int, int]:
    """(power of n, power of density) under nnz = density * n."""
    a, b, c = m
    return (a + b, b + c)


@dataclass(frozen=True)
class ComplexityExpr:
    """Sum of coefficient * n^a * nnz^b * (nnz/n)^c; `symbol` renders kernel constants k/K."""
    terms: Tuple[Tuple[Monomial, int], ...] = ()
    symbol: str = ""

    @staticmethod
    def of(counts: Dict[Monomial, int], symbol: str = "") -> "ComplexityExpr":
        merged: Counter = Counter()
        for m, k in counts.items():
            if k:
                merged[_canonical(m)] += k
        items = sorted(((m, k) for m, k in merged.items() if k),
                       key=lambda t: (_growth(t[0]), t[0]), reverse=True)
        return ComplexityExpr(tuple(items), symbol)

    @staticmethod
    def monomial(a: int = 0, b: int = 0, c: int = 0, coeff: int = 1) -> "ComplexityExpr":
        return ComplexityExpr.of({(a, b, c): coeff})

    @staticmethod
    def zero() -> "ComplexityExpr":
        return ComplexityExpr()

    def __add__(self, other: "ComplexityExpr") -> "ComplexityExpr":
        counts: Counter = Counter(dict(self.terms))
        for m, k in other.terms:
            counts[m] += k
        return ComplexityExpr.of(counts, self.symbol or other.symbol)

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def leading(self) -> Optional[Tuple[int, int]]:
        return _growth(self.terms[0][0]) if self.terms else None

    def le(self, other: "ComplexityExpr") -> bool:
        """Asymptotic order of self does not exceed other's (coefficients ignored)."""
        if self.is_zero():
            return True
        if other.is_zero():
            return False
        return self.leading <= other.leading

    def weights(self, density: int = 8) -> List[Tuple[int, int]]:
        """(power of n, coefficient with the density substituted), leading power first."""
        acc: Counter = Counter()
        for m, k in self.terms:
            n_exp, d_exp = _growth(m)
            acc[n_exp] += k * density ** d_exp
        return sorted(acc.items(), reverse=True)

    def compare(self, other: "ComplexityExpr", density: int = 8) -> int:
        mine, theirs = self.weights(density), other.weights(density)
        return (mine > theirs) - (mine < theirs)

    def structurally_equal(self, other: "ComplexityExpr") -> bool:
        return dict(self.terms) == dict(other.terms)

    def __str__(self) -> str:
        return render(self)


def render(c: ComplexityExpr) -> str:
    if c.is_zero():
        return "0"
    parts = []
    for (a, b, cc), k in c.terms:
        factors = []
        for name, e in (("n", a), ("nnz", b), ("(nnz/n)", cc)):
            if e == 1:
                factors.append(name)
            elif e > 1:
                factors.append(f"{name}^{e}")
        body = " x ".join(factors) or "1"
        coeff = c.symbol if c.symbol else ("" if k == 1 else str(k))
        parts.append(f"{coeff}({body})")
    return " + ".join(parts)


def parse_complexity(text: str) -> ComplexityExpr:
    """Inverse of `render`; also accepts the x / * / unicode-superscript spellings found in published cost tables."""
    text = (text or "").translate(_SUPERSCRIPTS).replace("×", " x ").strip()
    if text in ("", "0"):
        return ComplexityExpr.zero()
    counts: Counter = Counter()
    symbol = ""
    depth = 0
    pieces, cur = [], []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "+" and depth == 0:
            pieces.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    pieces.append("".join(cur))
    for piece in pieces:
        m = _TERM_RE.match(piece)
        coeff_txt, body = m.group(1), m.group(2)
        coeff = 1
        if coeff_txt in ("k", "K"):
            symbol = coeff_txt
        elif coeff_txt:
            coeff = int(coeff_txt)
        a = b = c = 0
        for name, power in _FACTOR_RE.findall(body):
            e = int(power) if power else 1
            if name == "n":
                a += e
            elif name == "nnz":
                b += e
            else:
                c += e
        counts[(a, b, c)] += coeff
    return ComplexityExpr.of(counts, symbol)


@dataclass
class Loop:
    iterator: str
    kind: str
    factor: Optional[str] = None
    parent: Optional[str] = None
    lower: Tuple[AffineExpr, ...] = ()
    upper: Tuple[AffineExpr, ...] = ()
    derived_from: Optional[AffineExpr] = None

    def describe(self) -> str:
        if self.kind == DERIVED:
            return f"{self.iterator} := {format_expr(self.derived_from)}"
        if self.kind == PROJECTED:
            return f"{self.iterator} projected out"
        lo = ", ".join(format_expr(e) for e in self.lower)
        hi = ", ".join(format_expr(e) for e in self.upper)
        return f"for {self.iterator} in [max({lo}), min({hi})]  # {self.kind} {self.factor or ''}".rstrip()


@dataclass
class LoopNestModel:
    relation: str
    loops: List[Loop] = field(default_factory=list)
    residual: Tuple[Constraint, ...] = ()
    # clause constraints over projected iterators, kept when the projection was inexact
    exists_checks: Tuple[Constraint, ...] = ()

    @property
    def scheduled(self) -> List[Loop]:
        return [l for l in self.loops if l.kind in (DIMENSION, UF_RANGE, CONSTANT)]

    @property
    def derived(self) -> List[Loop]:
        return [l for l in self.loops if l.kind == DERIVED]

    def monomial(self) -> Monomial:
        a = b = c = 0
        for l in self.loops:
            if l.factor == N:
                a += 1
            elif l.factor == NNZ:
                b += 1
            elif l.factor == AVG:
                c += 1
        return (a, b, c)


class ComplexityAgent:
    DEFAULT_CONFIG: Dict[str, Any] = {
        "density": 8,
        "presburger": {},
    }

    def __init__(self, config: Optional[Dict[str, Any]] = None, run_id: Optional[str] = None):
        self.config = dict(self.DEFAULT_CONFIG)
        if config:
            self.config.update(config)
        self.run_id = run_id
        self.logger = AgentLogger("ComplexityAgent", run_id=self.run_id)
        self.caps = Caps.from_config(self.config.get("presburger"))
        self.logger.debug("init", "ComplexityAgent initialized", {"density": self.config["density"]})

    # ----------- Public API -----------

    def model_loops(self, r: Relation, clause: Conjunction, equalities: Sequence[Constraint] = ()) -> LoopNestModel:
        try:
            return self._model(r, clause, equalities)
        except SparseDepError:
            raise
        except Exception as e:
            self.logger.error("exception", "model_loops failed", {"relation": r.name, "trace": traceback.format_exc()})
            raise wrap_exc(f"loop model for {r.name} failed", e, ComplexityError)

    @staticmethod
    def estimate(model: LoopNestModel) -> ComplexityExpr:
        return ComplexityExpr.of({model.monomial(): 1})

    def estimate_relation(self, r: Relation, clause_indices: Optional[Iterable[int]] = None,
                          equalities: Optional[Dict[int, Sequence[Constraint]]] = None) -> ComplexityExpr:
        """Sum of one nest per selected clause; clause_indices None means all clauses."""
        idx = list(range(len(r.clauses))) if clause_indices is None else list(clause_indices)
        total = ComplexityExpr.zero()
        for i in idx:
            eqs = (equalities or {}).get(i, ())
            model = self.model_loops(r, r.clauses[i], eqs)
            total = total + self.estimate(model)
            self.logger.debug("estimate", "Clause estimate", {"relation": r.name, "clause": i,
                                                             "monomial": model.monomial(),
                                                             "loops": [l.describe() for l in model.loops]})
        return total

    def compare(self, c1: ComplexityExpr, c2: ComplexityExpr, kernel: Optional[ComplexityExpr] = None) -> Dict[str, Any]:
        out = {"order": c1.compare(c2, int(self.config["density"]))}
        if kernel is not None:
            out["c1_le_kernel"] = c1.le(kernel)
            out["c2_le_kernel"] = c2.le(kernel)
        return out

    # ---------- Internal helpers ----------

    def _model(self, r: Relation, clause: Conjunction, equalities: Sequence[Constraint]) -> LoopNestModel:
        cs = list(clause) + list(equalities)
        iters = list(r.iterators)
        essential: Set[str] = {r.in_tuple[0], r.out_tuple[0]}
        for c in cs:
            for t in c.expr.uf_terms():
                for a in t.args:
                    essential |= a.var_names()
        model = LoopNestModel(r.name)
        drop = [Var(v) for v in iters if v not in essential]
        ls = LinearSystem.of(cs)
        if drop:
            proj = project(ls, drop, self.caps)
            if not proj.exact:
                dropped = {d.name for d in drop}
                model.exists_checks = tuple(c for c in cs if c.expr.var_names() & dropped)
                self.logger.debug("inexact_projection", "Projection over-approximates; kept clause checks",
                                  {"relation": r.name, "iterators": sorted(dropped),
                                   "checks": len(model.exists_checks)})
            ls = proj.system
        for v in iters:
            if v not in essential:
                model.loops.append(Loop(v, PROJECTED))
        order = [v for v in iters if v in essential]
        done: Set[str] = set()
        remaining = list(order)

        def determined(a: Atom) -> bool:
            if isinstance(a, Sym):
                return True
            if isinstance(a, Var):
                return a.name in done
            return all(arg.var_names() <= done for arg in a.args)

        def derivation(v: str) -> Optional[AffineExpr]:
            x = Var(v)
            for e in ls.eqs:
                k = e.coeff(x)
                if abs(k) != 1:
                    continue
                rest = e - AffineExpr.of(x, k)
                if all(determined(a) for a in rest.atoms()):
                    return rest if k < 0 else -rest
            return None

        def derivable(v: str) -> bool:
            return any(abs(e.coeff(Var(v))) == 1 for e in ls.eqs)

        while remaining:
            progressed = True
            while progressed and remaining:
                progressed = False
                for v in remaining:
                    e = derivation(v)
                    if e is not None:
                        model.loops.append(Loop(v, DERIVED, derived_from=e))
                        done.add(v)
                        remaining.remove(v)
                        progressed = True
                        break
            if not remaining:
                break
            allowed = [a for a in ls.vars if determined(a)]
            picks = []
            for v in remaining:
                lower, upper, _ = bounds_of(ls, Var(v), allowed, self.caps)
                if lower and upper:
                    picks.append((derivable(v), order.index(v), v, lower, upper))
            if not picks:
                self.logger.warn("unbounded", "No finite bounds for remaining iterators",
                                 {"relation": r.name, "iterators": remaining})
                raise UnboundedIteratorError(f"relation {r.name}: unbounded iterator(s) {remaining}", remaining)
            picks.sort(key=lambda p: (p[0], p[1]))
            _, _, v, lower, upper = picks[0]
            model.loops.append(self._classify(r, model, v, lower, upper))
            done.add(v)
            remaining.remove(v)
        model.residual = tuple(ls.constraints())
        return model

    def _classify(self, r: Relation, model: LoopNestModel, v: str,
                  lower: List[AffineExpr], upper: List[AffineExpr]) -> Loop:
        by_name = {l.iterator: l for l in model.loops}

        def parents(bounds: List[AffineExpr]) -> Set[str]:
            out: Set[str] = set()
            for b in bounds:
                for t in b.uf_terms(nested=False):
                    names = set()
                    for a in t.args:
                        names |= a.var_names()
                    if len(names) == 1:
                        out |= names
            return out

        lo_p, up_p = parents(lower), parents(upper)
        shared = lo_p & up_p
        if shared:
            free = [p for p in shared
                    if p in by_name and by_name[p].kind == DIMENSION and by_name[p].factor == N]
            if free:
                p = max(free, key=lambda name: model.loops.index(by_name[name]))
                by_name[p].factor = NNZ
                return Loop(v, UF_RANGE, None, p, tuple(lower), tuple(upper))
            return Loop(v, UF_RANGE, AVG, sorted(shared)[0], tuple(lower), tuple(upper))
        has_uf_lo = any(True for b in lower for _ in b.uf_terms(nested=False))
        has_uf_up = any(True for b in upper for _ in b.uf_terms(nested=False))
        if has_uf_lo or has_uf_up:
            return Loop(v, UF_RANGE, AVG, None, tuple(lower), tuple(upper))
        if all(b.is_constant() for b in lower + upper):
            return Loop(v, CONSTANT, None, None, tuple(lower), tuple(upper))
        for b in upper:
            for a in b.atoms():
                if isinstance(a, Sym):
                    s = r.symconst(a.name)
                    if s is not None and s.role == ROLE_NNZ:
                        return Loop(v, DIMENSION, NNZ, None, tuple(lower), tuple(upper))
        return Loop(v, DIMENSION, N, None, tuple(lower), tuple(upper))
