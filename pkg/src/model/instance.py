# src/model/instance.py
"""
Concrete instances

Role:
    Index arrays and symbolic-constant values of one concrete sparse matrix,
    the interpretation the oracle and the inspectors evaluate relations in.

Inputs:
    - A sparsity pattern (scipy.sparse matrix) through `from_pattern`, or a
      JSON dump written by `dump`.

Outputs:
    - ConcreteInstance with the CSR, CSC, diagonal-pointer, lower-factor and
      prune-set arrays of the pattern; `uf()` evaluates index-array terms.
    - `violations()`: assertion counterexamples found by evaluating every
      argument pair over the arrays' domains with numpy.

Assumptions:
    - Every pattern carries its full diagonal (rows never empty).
    - Array names used by problem files that differ from the canonical
      ones are mapped through `aliases` (e.g. IC0's `col` -> `colptr`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from src.model.relation import AffineExpr, Conjunction, Constraint, EQ, Sym, UFTerm, Var
from src.utils.errors import InstanceError

CANONICAL_ARRAYS = ("rowptr", "col", "diagptr", "colptr", "rowidx",
                    "lcolptr", "lrow", "pruneptr", "pruneset")


class OutOfDomain(LookupError):
    """Index-array application outside the array extent."""


@dataclass
class ConcreteInstance:
    constants: Dict[str, int]
    arrays: Dict[str, np.ndarray]
    preset: str = ""
    seed: Optional[int] = None
    aliases: Dict[str, str] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.constants.get("n", 0))

    @property
    def nnz(self) -> int:
        return int(self.constants.get("nnz", 0))

    def array(self, name: str) -> np.ndarray:
        key = self.aliases.get(name, name)
        if key not in self.arrays:
            raise InstanceError(f"instance has no index array {name!r}" + (f" (alias of {key!r})" if key != name else ""))
        return self.arrays[key]

    def has_array(self, name: str) -> bool:
        return self.aliases.get(name, name) in self.arrays

    def with_aliases(self, aliases: Optional[Mapping[str, str]]) -> "ConcreteInstance":
        return ConcreteInstance(dict(self.constants), self.arrays, self.preset, self.seed, dict(aliases or {}))

    def uf(self) -> Callable[[str, Tuple[int, ...]], int]:
        def apply(name: str, args: Tuple[int, ...]) -> int:
            arr = self.array(name)
            (x,) = args
            if x < 0 or x >= arr.shape[0]:
                raise OutOfDomain(f"{name}({x}) outside [0, {arr.shape[0]})")
            return int(arr[x])
        return apply

    def env(self, extra: Optional[Mapping[str, int]] = None) -> Dict[str, int]:
        out = dict(self.constants)
        if extra:
            out.update(extra)
        return out

    def to_json(self) -> Dict[str, object]:
        return {
            "preset": self.preset,
            "seed": self.seed,
            "constants": dict(self.constants),
            "arrays": {k: v.tolist() for k, v in sorted(self.arrays.items())},
            "aliases": dict(self.aliases),
        }

    @staticmethod
    def from_json(data: Mapping[str, object]) -> "ConcreteInstance":
        try:
            arrays = {k: np.asarray(v, dtype=np.int64) for k, v in dict(data["arrays"]).items()}
            constants = {k: int(v) for k, v in dict(data["constants"]).items()}
        except (KeyError, TypeError, ValueError) as e:
            raise InstanceError(f"malformed instance dump: {e}", original=e)
        return ConcreteInstance(constants, arrays, str(data.get("preset", "")), data.get("seed"),
                                dict(data.get("aliases") or {}))

    def dump(self, path: Union[str, Path]) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")
        return p

    @staticmethod
    def load(path: Union[str, Path]) -> "ConcreteInstance":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise InstanceError(f"cannot read instance {path}: {e}", original=e)
        return ConcreteInstance.from_json(data)


# ----------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------
def _pattern(a) -> sp.csr_matrix:
    m = sp.csr_matrix(a, dtype=np.int8, copy=True)
    m.data[:] = 1
    m.eliminate_zeros()
    m.sort_indices()
    return m


def from_pattern(pattern, preset: str = "", seed: Optional[int] = None) -> ConcreteInstance:
    """All canonical arrays of a square pattern; the diagonal is added when missing."""
    a = _pattern(pattern)
    n = a.shape[0]
    if n == 0 or a.shape[1] != n:
        raise InstanceError(f"pattern must be square and nonempty, got shape {a.shape}")
    a = _pattern(a + sp.identity(n, dtype=np.int8, format="csr"))

    csc = a.tocsc()
    csc.sort_indices()
    rows = np.repeat(np.arange(n), np.diff(a.indptr))
    diag = np.flatnonzero(a.indices == rows)
    lower = _pattern(sp.tril(a))
    lcsc = lower.tocsc()
    lcsc.sort_indices()
    strict = _pattern(sp.tril(a, k=-1))

    arrays = {
        "rowptr": a.indptr.astype(np.int64),
        "col": a.indices.astype(np.int64),
        "diagptr": diag.astype(np.int64),
        "colptr": csc.indptr.astype(np.int64),
        "rowidx": csc.indices.astype(np.int64),
        "lcolptr": lcsc.indptr.astype(np.int64),
        "lrow": lcsc.indices.astype(np.int64),
        # prune set of column j: earlier columns k with L(j, k) != 0
        "pruneptr": strict.indptr.astype(np.int64),
        "pruneset": strict.indices.astype(np.int64),
    }
    return ConcreteInstance({"n": n, "nnz": int(a.nnz)}, arrays, preset, seed)


def lower_triangular(n: int, density: float, rng: np.random.Generator) -> sp.csr_matrix:
    if n <= 0:
        raise InstanceError(f"matrix order must be positive, got n={n}")
    if not 0.0 <= density <= 1.0:
        raise InstanceError(f"density must lie in [0, 1], got {density}")
    mask = np.tril(rng.random((n, n)) < density, k=-1)
    return sp.csr_matrix(mask | np.eye(n, dtype=bool))


def general(n: int, density: float, rng: np.random.Generator) -> sp.csr_matrix:
    if n <= 0:
        raise InstanceError(f"matrix order must be positive, got n={n}")
    if not 0.0 <= density <= 1.0:
        raise InstanceError(f"density must lie in [0, 1], got {density}")
    mask = rng.random((n, n)) < density
    return sp.csr_matrix(mask | np.eye(n, dtype=bool))


def chain(n: int) -> sp.csr_matrix:
    """Row i holds column i-1: every row depends on the previous one."""
    return sp.csr_matrix(np.eye(n, dtype=bool) | np.eye(n, k=-1, dtype=bool))


def diagonal(n: int) -> sp.csr_matrix:
    return sp.csr_matrix(np.eye(n, dtype=bool))


# ----------------------------------------------------------------------
# Vectorized assertion evaluation
# ----------------------------------------------------------------------
def _vec_eval(e: AffineExpr, env: Mapping[str, np.ndarray], inst: ConcreteInstance,
              shape: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
    value = np.full(shape, e.const, dtype=np.int64)
    valid = np.ones(shape, dtype=bool)
    for a, k in e.terms:
        if isinstance(a, UFTerm):
            arr = inst.array(a.name)
            idx, ok = _vec_eval(a.args[0], env, inst, shape)
            ok = ok & (idx >= 0) & (idx < arr.shape[0])
            got = arr[np.clip(idx, 0, max(arr.shape[0] - 1, 0))] if arr.shape[0] else np.zeros(shape, np.int64)
            value = value + k * got
            valid = valid & ok
        elif isinstance(a, Var):
            value = value + k * env[a.name]
        elif isinstance(a, Sym):
            value = value + k * int(inst.constants[a.name])
    return value, valid


def _vec_holds(cs: Conjunction, env, inst, shape) -> Tuple[np.ndarray, np.ndarray]:
    holds = np.ones(shape, dtype=bool)
    valid = np.ones(shape, dtype=bool)
    for c in cs:
        v, ok = _vec_eval(c.expr, env, inst, shape)
        holds &= (v == 0) if c.kind == EQ else (v >= 0)
        valid &= ok
    return holds, valid


def quantifier_domain(inst: ConcreteInstance, names: Sequence[str]) -> np.ndarray:
    """Candidate values for quantified variables: every index into any array named, plus one past the end."""
    longest = max((inst.array(n).shape[0] for n in names), default=0)
    return np.arange(-1, longest + 1, dtype=np.int64)


def violations(inst: ConcreteInstance, qvars: Sequence[str], antecedent: Conjunction,
               consequent: Conjunction, limit: int = 5) -> List[Dict[str, int]]:
    """Points where every array access is in range, the antecedent holds and the consequent fails."""
    names = sorted({t.name for part in (antecedent, consequent) for t in part.uf_terms()})
    dom = quantifier_domain(inst, names)
    grids = np.meshgrid(*([dom] * len(qvars)), indexing="ij")
    env = dict(zip(qvars, grids))
    shape = grids[0].shape if grids else ()
    ante, ok_a = _vec_holds(antecedent, env, inst, shape)
    cons, ok_c = _vec_holds(consequent, env, inst, shape)
    bad = ok_a & ok_c & ante & ~cons
    out = []
    for point in np.argwhere(bad)[:limit]:
        out.append({q: int(env[q][tuple(point)]) for q in qvars})
    return out


def holds_at(inst: ConcreteInstance, c: Constraint, point: Mapping[str, int]) -> bool:
    """Constraint value at one point; out-of-domain accesses raise OutOfDomain."""
    return c.holds(inst.env(point), inst.uf())
