# src/model/relation.py
"""
Relation model

Role:
    Immutable values for dependence relations: affine expressions over
    iterators, symbolic constants and index-array (uninterpreted function)
    terms; EQ / GEQ constraints; conjunctions; multi-clause relations.

Inputs:
    - Built by the problem-file parser or programmatically through
      `AffineExpr.build`, `Constraint`, `Conjunction.of` and `Relation`.

Outputs:
    - Canonical (normalized, sorted, deduplicated) values with a printer
      whose output parses back to an equal value.

Assumptions:
    - Expressions are linear: a UF term is an opaque integer-valued atom,
      its functional meaning lives in src/core/uf_encoding.py.
    - All coefficients are exact Python ints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from src.utils.errors import SymbolError

EQ = "EQ"
GEQ = "GEQ"
EXACT = "exact"
MAY = "may"

ROLE_SIZE = "size"
ROLE_NNZ = "nonzero-count"
ROLE_OTHER = "other"

_SIZE_NAMES = {"n", "m", "nrows", "ncols", "nb"}


def infer_role(name: str) -> str:
    low = name.lower()
    if "nnz" in low:
        return ROLE_NNZ
    if low in _SIZE_NAMES:
        return ROLE_SIZE
    return ROLE_OTHER


# ----------------------------------------------------------------------
# Atoms
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Var:
    """Iterator, quantified variable or fresh encoding variable."""
    name: str

    def sort_key(self) -> tuple:
        return (0, self.name)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Sym:
    """Reference to a symbolic constant (n, nnz)."""
    name: str

    def sort_key(self) -> tuple:
        return (1, self.name)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class UFTerm:
    """Index-array application, e.g. lcolptr(pruneSet(ip) + 1)."""
    name: str
    args: Tuple["AffineExpr", ...]

    def sort_key(self) -> tuple:
        return (2, self.name, tuple(a.sort_key() for a in self.args))

    @property
    def depth(self) -> int:
        inner = [t.depth for a in self.args for t in a.uf_terms(nested=False)]
        return 1 + (max(inner) if inner else 0)

    def substitute(self, mapping: Mapping["Atom", "AffineExpr"]) -> "UFTerm":
        return UFTerm(self.name, tuple(a.substitute(mapping) for a in self.args))

    def __str__(self) -> str:
        return f"{self.name}({', '.join(format_expr(a) for a in self.args)})"


Atom = Union[Var, Sym, UFTerm]


def atom_key(atom: Atom) -> tuple:
    return atom.sort_key()


# ----------------------------------------------------------------------
# Affine expressions
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class AffineExpr:
    """constant + sum(coeff * atom); terms sorted by atom key, no zero coefficients."""
    const: int = 0
    terms: Tuple[Tuple[Atom, int], ...] = ()

    @staticmethod
    def build(const: int = 0, coeffs: Optional[Mapping[Atom, int]] = None) -> "AffineExpr":
        items = [(a, int(k)) for a, k in (coeffs or {}).items() if k != 0]
        items.sort(key=lambda t: t[0].sort_key())
        return AffineExpr(int(const), tuple(items))

    @staticmethod
    def of(atom: Atom, coeff: int = 1) -> "AffineExpr":
        return AffineExpr.build(0, {atom: coeff})

    @staticmethod
    def var(name: str) -> "AffineExpr":
        return AffineExpr.of(Var(name))

    @staticmethod
    def constant(c: int) -> "AffineExpr":
        return AffineExpr(int(c), ())

    def sort_key(self) -> tuple:
        return (tuple((a.sort_key(), k) for a, k in self.terms), self.const)

    def as_dict(self) -> Dict[Atom, int]:
        return dict(self.terms)

    def coeff(self, atom: Atom) -> int:
        for a, k in self.terms:
            if a == atom:
                return k
        return 0

    def atoms(self) -> Tuple[Atom, ...]:
        return tuple(a for a, _ in self.terms)

    def is_constant(self) -> bool:
        return not self.terms

    def __add__(self, other: Union["AffineExpr", int]) -> "AffineExpr":
        if isinstance(other, int):
            return AffineExpr(self.const + other, self.terms)
        d = self.as_dict()
        for a, k in other.terms:
            d[a] = d.get(a, 0) + k
        return AffineExpr.build(self.const + other.const, d)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(-self.const, tuple((a, -k) for a, k in self.terms))

    def __sub__(self, other: Union["AffineExpr", int]) -> "AffineExpr":
        return self + (-other)

    def __rsub__(self, other: int) -> "AffineExpr":
        return (-self) + other

    def scale(self, k: int) -> "AffineExpr":
        if k == 0:
            return AffineExpr()
        return AffineExpr(self.const * k, tuple((a, c * k) for a, c in self.terms))

    def __mul__(self, k: int) -> "AffineExpr":
        return self.scale(k)

    __rmul__ = __mul__

    def substitute(self, mapping: Mapping[Atom, "AffineExpr"]) -> "AffineExpr":
        """Replace atoms by expressions, descending into UF arguments."""
        if not mapping:
            return self
        out: Dict[Atom, int] = {}
        const = self.const
        for a, k in self.terms:
            if a in mapping:
                rep = mapping[a]
                const += k * rep.const
                for b, kb in rep.terms:
                    out[b] = out.get(b, 0) + k * kb
                continue
            if isinstance(a, UFTerm):
                a2 = a.substitute(mapping)
                if a2 in mapping:
                    rep = mapping[a2]
                    const += k * rep.const
                    for b, kb in rep.terms:
                        out[b] = out.get(b, 0) + k * kb
                    continue
                a = a2
            out[a] = out.get(a, 0) + k
        return AffineExpr.build(const, out)

    def uf_terms(self, nested: bool = True) -> Iterator[UFTerm]:
        """UF terms of this expression, outer before inner when nested."""
        for a, _ in self.terms:
            if isinstance(a, UFTerm):
                yield a
                if nested:
                    for arg in a.args:
                        yield from arg.uf_terms(nested=True)

    def var_names(self) -> FrozenSet[str]:
        """Iterator names anywhere in the expression, including UF arguments."""
        names = set()
        for a, _ in self.terms:
            if isinstance(a, Var):
                names.add(a.name)
            elif isinstance(a, UFTerm):
                for arg in a.args:
                    names |= arg.var_names()
        return frozenset(names)

    def evaluate(self, env: Mapping[str, int], uf: Callable[[str, Tuple[int, ...]], int]) -> int:
        total = self.const
        for a, k in self.terms:
            if isinstance(a, UFTerm):
                total += k * uf(a.name, tuple(arg.evaluate(env, uf) for arg in a.args))
            else:
                total += k * env[a.name]
        return total

    def __str__(self) -> str:
        return format_expr(self)


# ----------------------------------------------------------------------
# Constraints
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Constraint:
    """kind EQ means expr = 0, GEQ means expr >= 0; tag marks may-guards."""
    kind: str
    expr: AffineExpr
    tag: str = EXACT

    @property
    def core(self) -> Tuple[str, AffineExpr]:
        return (self.kind, self.expr)

    def sort_key(self) -> tuple:
        return (0 if self.kind == EQ else 1, self.expr.sort_key())

    def is_trivial(self) -> bool:
        if not self.expr.is_constant():
            return False
        return self.expr.const == 0 if self.kind == EQ else self.expr.const >= 0

    def is_false(self) -> bool:
        if not self.expr.is_constant():
            return False
        return self.expr.const != 0 if self.kind == EQ else self.expr.const < 0

    def substitute(self, mapping: Mapping[Atom, AffineExpr]) -> "Constraint":
        return normalize(Constraint(self.kind, self.expr.substitute(mapping), self.tag))

    def with_tag(self, tag: str) -> "Constraint":
        return Constraint(self.kind, self.expr, tag)

    def holds(self, env: Mapping[str, int], uf: Callable[[str, Tuple[int, ...]], int]) -> bool:
        v = self.expr.evaluate(env, uf)
        return v == 0 if self.kind == EQ else v >= 0

    def __str__(self) -> str:
        return format_constraint(self)


def geq(lhs: AffineExpr, rhs: Union[AffineExpr, int] = 0, tag: str = EXACT) -> Constraint:
    return normalize(Constraint(GEQ, lhs - rhs, tag))


def eq(lhs: AffineExpr, rhs: Union[AffineExpr, int] = 0, tag: str = EXACT) -> Constraint:
    return normalize(Constraint(EQ, lhs - rhs, tag))


def negate_geq(c: Constraint) -> Constraint:
    """not(e >= 0) over the integers is -e - 1 >= 0."""
    return normalize(Constraint(GEQ, -c.expr - 1, c.tag))


def _gcd_all(values: Iterable[int]) -> int:
    return reduce(math.gcd, (abs(v) for v in values), 0)


def normalize(c: Constraint) -> Constraint:
    e = c.expr
    if e.is_constant():
        if c.kind == EQ:
            return Constraint(EQ, AffineExpr.constant(0 if e.const == 0 else 1), c.tag)
        return Constraint(GEQ, AffineExpr.constant(0 if e.const >= 0 else -1), c.tag)
    g = _gcd_all(k for _, k in e.terms)
    if c.kind == EQ:
        if e.const % g != 0:
            return Constraint(EQ, AffineExpr.constant(1), c.tag)
        sign = -1 if e.terms[0][1] < 0 else 1
        terms = tuple((a, sign * (k // g)) for a, k in e.terms)
        return Constraint(EQ, AffineExpr(sign * (e.const // g), terms), c.tag)
    if g == 1:
        return Constraint(GEQ, e, c.tag)
    terms = tuple((a, k // g) for a, k in e.terms)
    return Constraint(GEQ, AffineExpr(e.const // g, terms), c.tag)


# ----------------------------------------------------------------------
# Conjunctions and relations
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Conjunction:
    constraints: Tuple[Constraint, ...] = ()

    @staticmethod
    def of(cs: Iterable[Constraint]) -> "Conjunction":
        seen: Dict[Tuple[str, AffineExpr], Constraint] = {}
        for c in cs:
            n = normalize(c)
            if n.is_trivial():
                continue
            prev = seen.get(n.core)
            if prev is None or (prev.tag != EXACT and n.tag == EXACT):
                seen[n.core] = n
        return Conjunction(tuple(sorted(seen.values(), key=Constraint.sort_key)))

    def core_set(self) -> FrozenSet[Tuple[str, AffineExpr]]:
        return frozenset(c.core for c in self.constraints)

    def uf_terms(self) -> List[UFTerm]:
        out: List[UFTerm] = []
        seen = set()
        for c in self.constraints:
            for t in c.expr.uf_terms():
                if t not in seen:
                    seen.add(t)
                    out.append(t)
        return out

    def var_names(self) -> FrozenSet[str]:
        names: set = set()
        for c in self.constraints:
            names |= c.expr.var_names()
        return frozenset(names)

    def substitute(self, mapping: Mapping[Atom, AffineExpr]) -> "Conjunction":
        return Conjunction.of(c.substitute(mapping) for c in self.constraints)

    def __and__(self, other: "Conjunction") -> "Conjunction":
        return Conjunction.of(self.constraints + other.constraints)

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __str__(self) -> str:
        return " && ".join(format_constraint(c) for c in self.constraints) or "true"


@dataclass(frozen=True)
class SymbolicConst:
    name: str
    lower_hint: Optional[int] = None
    role: str = ROLE_OTHER


@dataclass(frozen=True)
class UFSymbol:
    name: str
    arity: int = 1
    declared_properties: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Relation:
    name: str
    in_tuple: Tuple[str, ...]
    out_tuple: Tuple[str, ...]
    existentials: Tuple[str, ...]
    symconsts: Tuple[SymbolicConst, ...]
    clauses: Tuple[Conjunction, ...]
    kernel: str = ""
    ufs: Tuple[UFSymbol, ...] = ()
    source: Tuple[Tuple[str, str], ...] = field(default=(), compare=False)

    def __post_init__(self):
        names = list(self.in_tuple) + list(self.out_tuple) + list(self.existentials)
        if len(set(names)) != len(names):
            raise SymbolError(f"relation {self.name}: iterator names must be distinct: {names}")
        if not self.clauses:
            raise SymbolError(f"relation {self.name}: empty constraint list")
        declared = set(names)
        for clause in self.clauses:
            stray = clause.var_names() - declared
            if stray:
                raise SymbolError(f"relation {self.name}: undeclared iterator(s) {sorted(stray)}")

    @property
    def iterators(self) -> Tuple[str, ...]:
        return self.in_tuple + self.out_tuple + self.existentials

    @property
    def outer(self) -> Tuple[str, str]:
        return (self.in_tuple[0], self.out_tuple[0])

    def symconst(self, name: str) -> Optional[SymbolicConst]:
        for s in self.symconsts:
            if s.name == name:
                return s
        return None

    def with_clauses(self, clauses: Iterable[Conjunction]) -> "Relation":
        return Relation(self.name, self.in_tuple, self.out_tuple, self.existentials,
                        self.symconsts, tuple(clauses), self.kernel, self.ufs, self.source)

    def rename(self, mapping: Mapping[str, str]) -> "Relation":
        sub = {Var(a): AffineExpr.var(b) for a, b in mapping.items()}
        ren = lambda xs: tuple(mapping.get(x, x) for x in xs)
        return Relation(self.name, ren(self.in_tuple), ren(self.out_tuple), ren(self.existentials),
                        self.symconsts, tuple(c.substitute(sub) for c in self.clauses),
                        self.kernel, self.ufs, self.source)

    def meta(self, key: str, default: str = "") -> str:
        return dict(self.source).get(key, default)

    def __str__(self) -> str:
        return format_relation(self)


def free_uf_terms(r: Relation) -> FrozenSet[UFTerm]:
    """Every UF term occurrence of the relation, nested inner terms included."""
    out = set()
    for clause in r.clauses:
        out.update(clause.uf_terms())
    return frozenset(out)


def relation_key(r: Relation) -> str:
    """Dedup key: kernel plus clauses printed with positionally renamed iterators."""
    mapping = {}
    for prefix, names in (("_a", r.in_tuple), ("_b", r.out_tuple), ("_e", r.existentials)):
        for idx, name in enumerate(names):
            mapping[name] = f"{prefix}{idx}"
    renamed = r.rename(mapping)
    body = " || ".join(sorted(str(c) for c in renamed.clauses))
    return f"{r.kernel}|{len(r.in_tuple)}->{len(r.out_tuple)}|{body}"


# ----------------------------------------------------------------------
# Printer
# ----------------------------------------------------------------------
def _format_terms(terms: List[Tuple[Atom, int]], const: int) -> str:
    parts: List[str] = []
    for a, k in terms:
        text = str(a) if abs(k) == 1 else f"{abs(k)}*{a}"
        if not parts:
            parts.append(text if k > 0 else f"-{text}")
        else:
            parts.append(f"+ {text}" if k > 0 else f"- {text}")
    if const or not parts:
        if not parts:
            parts.append(str(const))
        else:
            parts.append(f"+ {const}" if const > 0 else f"- {-const}")
    return " ".join(parts)


def format_expr(e: AffineExpr) -> str:
    return _format_terms(list(e.terms), e.const)


def format_constraint(c: Constraint) -> str:
    e = c.expr
    pos = [(a, k) for a, k in e.terms if k > 0]
    neg = [(a, -k) for a, k in e.terms if k < 0]
    lhs = _format_terms(pos, e.const if e.const > 0 else 0) if (pos or e.const > 0) else "0"
    rhs = _format_terms(neg, -e.const if e.const < 0 else 0) if (neg or e.const < 0) else "0"
    op = "=" if c.kind == EQ else ">="
    text = f"{lhs} {op} {rhs}"
    return f"may({text})" if c.tag == MAY else text


def format_relation(r: Relation) -> str:
    head = f'relation "{r.name}"'
    if r.kernel:
        head += f' kernel="{r.kernel}"'
    tuples = f"[{', '.join(r.in_tuple)}] -> [{', '.join(r.out_tuple)}]"
    exists = f"exists({', '.join(r.existentials)}) : " if r.existentials else ""
    body = "\n    || ".join(str(c) for c in r.clauses)
    return f"{head} {{ {tuples} : {exists}{body} }}"


def format_problem(symconsts: Iterable[SymbolicConst], ufs: Iterable[UFSymbol],
                   assertions: Iterable[object], relations: Iterable[Relation]) -> str:
    lines: List[str] = []
    decls = []
    for s in symconsts:
        d = s.name
        if s.lower_hint is not None:
            d += f" >= {s.lower_hint}"
        role = {ROLE_SIZE: "size", ROLE_NNZ: "nnz", ROLE_OTHER: "other"}[s.role]
        d += f" : {role}"
        decls.append(d)
    if decls:
        lines.append(f"symbolic {', '.join(decls)};")
    for u in ufs:
        lines.append(f"uf {u.name} : {u.arity};")
    seen = set()
    for a in assertions:
        text = f"assert {a};"
        if text not in seen:
            seen.add(text)
            lines.append(text)
    for r in relations:
        lines.append(format_relation(r))
    return "\n".join(lines) + "\n"
