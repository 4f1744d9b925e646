# src/model/parser.py
"""
Problem-file parser

Role:
    Read `.deps` problem files (symbol and index-array declarations,
    assertions, dependence relations) into model values.

Inputs:
    - text (or a path) in the grammar below; `#` starts a line comment.

        symbolic n >= 1, nnz : nnz;
        uf rowptr : 1, col : 1;
        assert strict_monotone(rowptr);
        assert "rowdiag" forall x1, x2 : x1 = x2 -> rowptr(x1) <= diag(x2);
        kernel "Forward solve CSR";
        include "csr_header.deps";
        relation "fs_csr_3" stmt="S2->S1" { [i, k] -> [ip, kp] : exists(j) : i = col(kp) && ... }

      constraint operators: && (conjunction), || (top-level disjunction),
      = <= < >= > with chains (a <= b < c), may(...) tags a guard.

Outputs:
    - `Problem` with symbols, index arrays, assertions and relations.

Assumptions:
    - Products of two non-constant expressions are rejected (linear only).
    - In strict mode (problem files) every identifier must be declared; the
      lenient mode used by `parse_relation` infers index arrays from calls
      and symbolic constants from free names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from src.model.relation import (
    EQ, GEQ, EXACT, MAY,
    ROLE_NNZ, ROLE_OTHER, ROLE_SIZE,
    AffineExpr, Conjunction, Constraint, Relation, Sym, SymbolicConst, UFSymbol, UFTerm, Var,
    format_problem, infer_role, normalize,
)
from src.utils.errors import AssertionSpecError, NonlinearError, ParseError, SymbolError

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"[^"\n]*")
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*'*)
  | (?P<op>->|&&|\|\||<=|>=|==|[=<>+\-*(){}\[\],;:])
""", re.VERBOSE)

_ROLE_WORDS = {"size": ROLE_SIZE, "nnz": ROLE_NNZ, "other": ROLE_OTHER}
_RELOPS = ("=", "==", "<=", "<", ">=", ">")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass
class Problem:
    symbols: Tuple[SymbolicConst, ...] = ()
    ufs: Tuple[UFSymbol, ...] = ()
    assertions: Tuple[object, ...] = ()
    relations: Tuple[Relation, ...] = ()
    path: str = ""

    def as_tuple(self):
        return (self.relations, self.assertions, self.symbols)

    def __str__(self) -> str:
        return format_problem(self.symbols, self.ufs, self.assertions, self.relations)


class _Parser:
    def __init__(self, text: str, lenient: bool = False, base_dir: Optional[Path] = None,
                 _state: Optional[dict] = None):
        self.tokens = tokenize(text)
        self.pos = 0
        self.lenient = lenient
        self.base_dir = base_dir
        state = _state if _state is not None else {}
        self.symbols: Dict[str, SymbolicConst] = state.setdefault("symbols", {})
        self.ufs: Dict[str, UFSymbol] = state.setdefault("ufs", {})
        self.assertions: List[object] = state.setdefault("assertions", [])
        self.relations: List[Relation] = state.setdefault("relations", [])
        self.includes: List[str] = state.setdefault("includes", [])
        self.state = state
        self.kernel = state.get("kernel", "")
        self.scope: Dict[str, bool] = {}

    # ------------------------------------------------------------------
    # token helpers
    # ------------------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def _error(self, msg: str, tok: Optional[Token] = None, cls=ParseError):
        t = tok or self.tok
        return cls(msg, t.line, t.col)

    def _advance(self) -> Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def _at(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text in texts

    def _expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind not in ("op", "ident"):
            found = self.tok.text or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}")
        return self._advance()

    def _ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self._error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        return self._advance()

    def _string(self) -> str:
        if self.tok.kind != "string":
            raise self._error("expected string literal")
        return self._advance().text[1:-1]

    def _int(self) -> int:
        neg = False
        if self._at("-"):
            self._advance()
            neg = True
        if self.tok.kind != "int":
            raise self._error("expected integer")
        v = int(self._advance().text)
        return -v if neg else v

    # ------------------------------------------------------------------
    # statements
    # ------------------------------------------------------------------
    def parse_problem(self) -> None:
        while self.tok.kind != "eof":
            if self._at("symbolic"):
                self._symbolic()
            elif self._at("uf"):
                self._uf()
            elif self._at("assert"):
                self._assert()
            elif self._at("kernel"):
                self._advance()
                self.kernel = self._string()
                self.state["kernel"] = self.kernel
                self._expect(";")
            elif self._at("include"):
                self._include()
            elif self._at("relation") or self._at("{"):
                self.relations.append(self._relation())
            else:
                raise self._error(f"unexpected {self.tok.text!r}")

    def _symbolic(self) -> None:
        self._expect("symbolic")
        while True:
            t = self._ident()
            hint = None
            role = infer_role(t.text)
            if self._at(">="):
                self._advance()
                hint = self._int()
            if self._at(":"):
                self._advance()
                w = self._ident()
                if w.text not in _ROLE_WORDS:
                    raise self._error(f"unknown role {w.text!r}", w)
                role = _ROLE_WORDS[w.text]
            if t.text in self.ufs:
                raise self._error(f"{t.text!r} already declared as index array", t, SymbolError)
            self.symbols[t.text] = SymbolicConst(t.text, hint, role)
            if not self._at(","):
                break
            self._advance()
        self._expect(";")

    def _uf(self) -> None:
        self._expect("uf")
        while True:
            t = self._ident()
            self._expect(":")
            arity = self._int()
            if arity < 1:
                raise self._error("arity must be positive", t, SymbolError)
            if t.text in self.symbols:
                raise self._error(f"{t.text!r} already declared as symbolic constant", t, SymbolError)
            self.ufs[t.text] = UFSymbol(t.text, arity)
            if not self._at(","):
                break
            self._advance()
        self._expect(";")

    def _include(self) -> None:
        t = self._advance()
        target = self._string()
        self._expect(";")
        path = (self.base_dir or Path(".")) / target
        if not path.exists():
            raise self._error(f"include not found: {target}", t)
        if str(path.resolve()) in self.includes:
            return
        self.includes.append(str(path.resolve()))
        sub = _Parser(path.read_text(encoding="utf-8"), self.lenient, path.parent, self.state)
        sub.parse_problem()
        self.kernel = self.state.get("kernel", self.kernel)

    def _assert(self) -> None:
        from src.core.assertions import builtin, forall_assertion

        start = self._expect("assert")
        name = self._string() if self.tok.kind == "string" else ""
        if self._at("forall"):
            self._advance()
            qvars = [self._ident().text]
            while self._at(","):
                self._advance()
                qvars.append(self._ident().text)
            self._expect(":")
            self.scope = {q: True for q in qvars}
            ante = self._conjunction(stop=("->",))
            self._expect("->")
            cons = self._conjunction(stop=(";",))
            self.scope = {}
            try:
                made = (forall_assertion(name or f"forall#{len(self.assertions) + 1}", qvars, ante, cons),)
            except AssertionSpecError as e:
                raise ParseError(str(e), start.line, start.col, original=e)
        else:
            fn = self._ident()
            self._expect("(")
            args = [self._ident().text]
            while self._at(","):
                self._advance()
                args.append(self._ident().text)
            self._expect(")")
            try:
                made = builtin(fn.text, *args, ufs=self.ufs, name=name or None)
            except AssertionSpecError as e:
                raise ParseError(str(e), fn.line, fn.col, original=e)
        self._expect(";")
        for a in made:
            self.assertions.append(a)
            for sym in sorted(a.symbols()):
                u = self.ufs[sym]
                self.ufs[sym] = UFSymbol(u.name, u.arity, u.declared_properties + (a.name,))

    # ------------------------------------------------------------------
    # relations
    # ------------------------------------------------------------------
    def _relation(self) -> Relation:
        name = f"r{len(self.relations) + 1}"
        kernel = self.kernel
        meta: List[Tuple[str, str]] = []
        if self._at("relation"):
            self._advance()
            name = self._string()
            while self.tok.kind == "ident":
                key = self._advance().text
                self._expect("=")
                value = self._string()
                if key == "kernel":
                    kernel = value
                else:
                    meta.append((key, value))
        self._expect("{")
        in_tuple = self._tuple()
        self._expect("->")
        out_tuple = self._tuple()
        self._expect(":")
        existentials: List[str] = []
        if self._at("exists"):
            self._advance()
            self._expect("(")
            existentials.append(self._ident().text)
            while self._at(","):
                self._advance()
                existentials.append(self._ident().text)
            self._expect(")")
            self._expect(":")
        iters = in_tuple + existentials + out_tuple
        if len(set(iters)) != len(iters):
            raise self._error("iterator names must be distinct", cls=SymbolError)
        for it in iters:
            if it in self.ufs or it in self.symbols:
                raise self._error(f"iterator {it!r} shadows a declared symbol", cls=SymbolError)
        self.scope = {it: True for it in iters}
        if self._at("}"):
            raise self._error("empty constraint list")
        clauses = [self._conjunction(stop=("||", "}"))]
        while self._at("||"):
            self._advance()
            clauses.append(self._conjunction(stop=("||", "}")))
        self._expect("}")
        self.scope = {}
        used = sorted({t.name for c in clauses for t in c.uf_terms()})
        return Relation(
            name=name,
            in_tuple=tuple(in_tuple),
            out_tuple=tuple(out_tuple),
            existentials=tuple(existentials),
            symconsts=tuple(self.symbols[s] for s in sorted(self.symbols)),
            clauses=tuple(clauses),
            kernel=kernel,
            ufs=tuple(self.ufs[u] for u in used),
            source=tuple(meta),
        )

    def _tuple(self) -> List[str]:
        self._expect("[")
        names = [self._ident().text]
        while self._at(","):
            self._advance()
            names.append(self._ident().text)
        self._expect("]")
        return names

    def _conjunction(self, stop: Sequence[str]) -> Conjunction:
        if self._at(*stop) or self.tok.kind == "eof":
            raise self._error("empty constraint list")
        out: List[Constraint] = list(self._atom_constraints())
        while self._at("&&"):
            self._advance()
            out.extend(self._atom_constraints())
        return Conjunction.of(out)

    def _atom_constraints(self) -> List[Constraint]:
        if self._at("may") and self.tokens[self.pos + 1].text == "(":
            self._advance()
            self._advance()
            inner = list(self._chain())
            while self._at("&&"):
                self._advance()
                inner.extend(self._chain())
            self._expect(")")
            return [c.with_tag(MAY) for c in inner]
        return self._chain()

    def _chain(self) -> List[Constraint]:
        first = self.tok
        exprs = [self._expr()]
        ops: List[str] = []
        while self._at(*_RELOPS):
            ops.append(self._advance().text)
            exprs.append(self._expr())
        if not ops:
            raise self._error("expected comparison operator", first)
        out = []
        for op, lhs, rhs in zip(ops, exprs, exprs[1:]):
            if op in ("=", "=="):
                out.append(Constraint(EQ, lhs - rhs))
            elif op == "<=":
                out.append(Constraint(GEQ, rhs - lhs))
            elif op == "<":
                out.append(Constraint(GEQ, rhs - lhs - 1))
            elif op == ">=":
                out.append(Constraint(GEQ, lhs - rhs))
            else:
                out.append(Constraint(GEQ, lhs - rhs - 1))
        return [normalize(c) for c in out]

    # ------------------------------------------------------------------
    # expressions
    # ------------------------------------------------------------------
    def _expr(self) -> AffineExpr:
        acc = self._term()
        while self._at("+", "-"):
            op = self._advance().text
            rhs = self._term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def _term(self) -> AffineExpr:
        neg = False
        while self._at("-"):
            self._advance()
            neg = not neg
        acc = self._factor()
        while self._at("*"):
            star = self._advance()
            rhs = self._factor()
            if acc.is_constant():
                acc = rhs.scale(acc.const)
            elif rhs.is_constant():
                acc = acc.scale(rhs.const)
            else:
                raise self._error("nonlinear term: product of two non-constant expressions", star, NonlinearError)
        return -acc if neg else acc

    def _factor(self) -> AffineExpr:
        t = self.tok
        if t.kind == "int":
            self._advance()
            return AffineExpr.constant(int(t.text))
        if self._at("("):
            self._advance()
            e = self._expr()
            self._expect(")")
            return e
        if t.kind == "ident":
            self._advance()
            if self._at("("):
                self._advance()
                args = [self._expr()]
                while self._at(","):
                    self._advance()
                    args.append(self._expr())
                self._expect(")")
                self._check_uf(t, len(args))
                return AffineExpr.of(UFTerm(t.text, tuple(args)))
            return AffineExpr.of(self._resolve(t))
        raise self._error(f"unexpected {t.text or 'end of input'!r} in expression")

    def _check_uf(self, t: Token, nargs: int) -> None:
        u = self.ufs.get(t.text)
        if u is None:
            if not self.lenient or t.text in self.scope or t.text in self.symbols:
                raise self._error(f"undeclared index array {t.text!r}", t, SymbolError)
            self.ufs[t.text] = UFSymbol(t.text, nargs)
            return
        if u.arity != nargs:
            raise self._error(f"arity mismatch for {t.text!r}: declared {u.arity}, used with {nargs}", t, SymbolError)

    def _resolve(self, t: Token):
        name = t.text
        if name in self.scope:
            return Var(name)
        if name in self.symbols:
            return Sym(name)
        if name in self.ufs:
            raise self._error(f"index array {name!r} used without arguments", t, SymbolError)
        if self.lenient:
            self.symbols[name] = SymbolicConst(name, None, infer_role(name))
            return Sym(name)
        raise self._error(f"undeclared symbol {name!r}", t, SymbolError)


# ----------- Public API -----------
def parse_relation(text: str, problem: Optional[Problem] = None) -> Relation:
    """Parse one relation; declarations are taken from `problem` or inferred."""
    state: dict = {}
    if problem is not None:
        state = {
            "symbols": {s.name: s for s in problem.symbols},
            "ufs": {u.name: u for u in problem.ufs},
        }
    p = _Parser(text, lenient=problem is None, _state=state)
    rel = p._relation()
    if p.tok.kind != "eof":
        raise p._error(f"trailing input {p.tok.text!r}")
    return rel


def parse_problem_text(text: str, base_dir: Optional[Path] = None, path: str = "") -> Problem:
    p = _Parser(text, lenient=False, base_dir=base_dir)
    p.parse_problem()
    return Problem(
        symbols=tuple(p.symbols[s] for s in sorted(p.symbols)),
        ufs=tuple(p.ufs[u] for u in sorted(p.ufs)),
        assertions=tuple(p.assertions),
        relations=tuple(p.relations),
        path=path,
    )


def parse_problem(file) -> Problem:
    path = Path(file)
    return parse_problem_text(path.read_text(encoding="utf-8"), base_dir=path.parent, path=str(path))


def parse_constraints(text: str, r: Relation) -> List[Constraint]:
    """Constraints over the iterators of `r`, e.g. a claimed equality `i = ip`."""
    state = {
        "symbols": {s.name: s for s in r.symconsts},
        "ufs": {u.name: u for u in r.ufs},
    }
    p = _Parser(text, lenient=True, _state=state)
    p.scope = {it: True for it in r.iterators}
    out = list(p._conjunction(stop=()))
    if p.tok.kind != "eof":
        raise p._error(f"trailing input {p.tok.text!r}")
    return out
