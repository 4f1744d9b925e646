# src/agents/oracle_agent.py
"""
OracleAgent

Role:
    Brute-force ground truth for the symbolic verdicts. Samples concrete
    sparse matrices per generator preset, enumerates every solution of a
    relation on them, and looks for counterexamples to UNSAT verdicts,
    certified equalities and superset claims.

Inputs:
    - CorpusResult (unique relations, verdicts, assertions per relation).
    - SupersetClaim list (optional).
    - config: presets, trials, seed, n / density ranges, max_points,
      kernel -> preset and kernel -> array alias maps (from the manifest).

Outputs:
    - ConcreteInstance lists (sample), Enumeration (solutions + outer pairs),
      FalsifyReport with counterexamples and their instance dumps.

Assumptions:
    - Instances are correct by construction and then re-validated against
      the declared assertions of every relation they are used for; an
      instance failing them is skipped for that relation, never used.
    - An index-array access outside the array makes the clause false at
      that point.
"""

import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from tqdm import tqdm

from src.core.assertions import Assertion, builtin
from src.model.instance import (
    ConcreteInstance,
    OutOfDomain,
    from_pattern,
    general,
    holds_at,
    lower_triangular,
    violations,
)
from src.model.relation import EQ, Conjunction, Constraint, Relation, Var, format_constraint
from src.utils.errors import InstanceError, OracleError, SparseDepError, wrap_exc
from src.utils.logger import AgentLogger

PRESETS = ("csr_lower_triangular", "csr_general", "csc_lower_triangular", "csr_with_diagptr", "cholesky_prune_sets")
MAX_ORDER = 64

# properties each preset guarantees by construction
_PRESET_PROPERTIES = {
    "csr_lower_triangular": [("strict_monotone", "rowptr"), ("triangular", "rowptr", "col")],
    "csr_general": [("strict_monotone", "rowptr"), ("correlated_bound", "rowptr", "diagptr")],
    "csc_lower_triangular": [("strict_monotone", "colptr"), ("triangular", "colptr", "rowidx", "column")],
    "csr_with_diagptr": [("strict_monotone", "rowptr"), ("correlated_bound", "rowptr", "diagptr"),
                         ("monotone", "diagptr")],
    "cholesky_prune_sets": [("strict_monotone", "lcolptr"), ("monotone", "pruneptr"),
                            ("triangular", "pruneptr", "pruneset"), ("triangular", "lcolptr", "lrow", "column")],
}

_LOWER = {"csr_lower_triangular", "csc_lower_triangular", "cholesky_prune_sets"}


@dataclass
class Enumeration:
    relation: str
    iterators: Tuple[str, ...]
    solutions: List[List[Tuple[int, ...]]]
    pairs: Set[Tuple[int, int]]
    points: int = 0
    out_of_domain: int = 0
    fallback: Tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return not any(self.solutions)

    def clause_points(self, index: int) -> List[Dict[str, int]]:
        return [dict(zip(self.iterators, s)) for s in self.solutions[index]]


@dataclass
class Counterexample:
    kind: str
    relation: str
    detail: Dict[str, Any]
    preset: str
    seed: Optional[int]
    dump_path: str = ""

    def to_record(self) -> Dict[str, Any]:
        return {"kind": self.kind, "relation": self.relation, "detail": self.detail,
                "preset": self.preset, "seed": self.seed, "dump": self.dump_path}


@dataclass
class FalsifyReport:
    trials: int
    checked: Dict[str, int] = field(default_factory=lambda: {"unsat": 0, "equality": 0, "superset": 0})
    skipped: int = 0
    counterexamples: List[Counterexample] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def to_record(self) -> Dict[str, Any]:
        return {"trials": self.trials, "checked": dict(self.checked), "skipped": self.skipped,
                "counterexamples": [c.to_record() for c in self.counterexamples]}


class _Stats:
    def __init__(self, cap: int):
        self.points = 0
        self.ood = 0
        self.cap = cap

    def tick(self):
        self.points += 1
        if self.points > self.cap:
            raise InstanceError(f"enumeration exceeded {self.cap} points")


class OracleAgent:
    DEFAULT_CONFIG: Dict[str, Any] = {
        "presets": list(PRESETS),
        "trials": 50,
        "seed": 7,
        "n_range": [3, 8],
        "density_range": [0.15, 0.5],
        "max_points": 10 ** 9,
        "out_of_domain_warn": 0.10,
        "kernel_presets": {},
        "kernel_aliases": {},
        "dump_dir": "reports/counterexamples",
        "progress": False,
    }

    def __init__(self, config: Optional[Dict[str, Any]] = None, run_id: Optional[str] = None):
        self.config = dict(self.DEFAULT_CONFIG)
        if config:
            self.config.update(config)
        self.run_id = run_id
        self.logger = AgentLogger("OracleAgent", run_id=self.run_id)
        self.logger.debug("init", "OracleAgent initialized",
                          {k: self.config[k] for k in ("trials", "seed", "n_range", "density_range")})

    # ----------- Public API -----------

    def sample(self, preset: str, count: int, seed: Optional[int] = None,
               n: Optional[int] = None) -> List[ConcreteInstance]:
        if preset not in PRESETS:
            raise InstanceError(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
        seed = int(self.config["seed"] if seed is None else seed)
        lo, hi = (n, n) if n is not None else tuple(int(x) for x in self.config["n_range"])
        if lo <= 0:
            raise InstanceError(f"matrix order must be positive, got n={lo}")
        if hi > MAX_ORDER or lo > hi:
            raise InstanceError(f"matrix order range [{lo}, {hi}] outside [1, {MAX_ORDER}]")
        dlo, dhi = (float(x) for x in self.config["density_range"])
        out = []
        for k in range(count):
            inst_seed = seed * 10007 + PRESETS.index(preset) * 1009 + k
            rng = np.random.default_rng(inst_seed)
            order = int(rng.integers(lo, hi + 1))
            density = float(rng.uniform(dlo, dhi))
            build = lower_triangular if preset in _LOWER else general
            inst = from_pattern(build(order, density, rng), preset, inst_seed)
            bad = self.validate(inst, self.preset_assertions(preset))
            if bad:
                raise InstanceError(f"preset {preset} produced an invalid instance (seed {inst_seed}): {bad[0]}")
            out.append(inst)
        self.logger.debug("sample", "Sampled instances", {"preset": preset, "count": count, "seed": seed})
        return out

    @staticmethod
    def preset_assertions(preset: str) -> List[Assertion]:
        out: List[Assertion] = []
        for fn, *args in _PRESET_PROPERTIES.get(preset, []):
            out.extend(builtin(fn, *args))
        return out

    def validate(self, inst: ConcreteInstance, assertions: Iterable[Assertion]) -> List[Dict[str, Any]]:
        """Violations of each assertion over all argument pairs in the arrays' domains."""
        found = []
        for a in assertions:
            missing = sorted(s for s in a.symbols() if not inst.has_array(s))
            if missing:
                found.append({"assertion": a.name, "missing_arrays": missing})
                continue
            for point in violations(inst, a.quantified_vars, a.antecedent, a.consequent):
                found.append({"assertion": a.name, "point": point})
        return found

    def enumerate(self, r: Relation, inst: ConcreteInstance) -> Enumeration:
        missing = sorted({t.name for c in r.clauses for t in c.uf_terms() if not inst.has_array(t.name)})
        if missing:
            raise InstanceError(f"instance lacks index arrays {missing} used by {r.name}")
        stats = _Stats(int(self.config["max_points"]))
        solutions: List[List[Tuple[int, ...]]] = []
        fallback: List[str] = []
        for clause in r.clauses:
            plan, ready, bounds = self._plan(clause, r.iterators)
            fallback.extend(v for v, fb in plan if fb and v not in fallback)
            found: List[Tuple[int, ...]] = []
            env = inst.env()
            if self._ready_ok(ready[0], env, inst, stats):
                self._solve(plan, ready, bounds, 0, env, inst, stats, found, r.iterators)
            solutions.append(sorted(found))
        if fallback:
            self.logger.warn("fallback_box", "No finite bounds by propagation; enumerating a fallback box",
                             {"relation": r.name, "iterators": fallback, "box": [-2 * inst.nnz, 2 * inst.nnz]})
        if stats.points and stats.ood > float(self.config["out_of_domain_warn"]) * stats.points:
            self.logger.warn("out_of_domain", "Many enumeration points hit out-of-domain array accesses",
                             {"relation": r.name, "points": stats.points, "out_of_domain": stats.ood})
        i0, o0 = r.outer
        idx_i, idx_o = r.iterators.index(i0), r.iterators.index(o0)
        pairs = {(s[idx_i], s[idx_o]) for clause in solutions for s in clause}
        return Enumeration(r.name, r.iterators, solutions, pairs, stats.points, stats.ood, tuple(fallback))

    def falsify(self, result, claims: Sequence[Any] = (), preset: str = "auto", trials: Optional[int] = None,
                seed: Optional[int] = None, instances: Optional[Sequence[ConcreteInstance]] = None) -> FalsifyReport:
        trials = int(self.config["trials"] if trials is None else trials)
        self.logger.info("start", "falsify start", {"relations": len(result.unique), "claims": len(claims),
                                                    "preset": preset, "trials": trials})
        try:
            report = FalsifyReport(trials if instances is None else len(instances))
            verdicts = {v.relation: v for v in result.verdicts}
            pools: Dict[str, List[ConcreteInstance]] = {}
            kernels: Dict[str, List[Relation]] = {}
            for r in result.unique:
                kernels.setdefault(r.kernel, []).append(r)

            for kernel, rels in kernels.items():
                chosen = self._preset_for(kernel, preset)
                if instances is not None:
                    pool = list(instances)
                else:
                    if chosen not in pools:
                        pools[chosen] = self.sample(chosen, trials, seed)
                    pool = pools[chosen]
                aliases = self.config["kernel_aliases"].get(kernel, {})
                it = tqdm(pool, desc=f"oracle[{kernel}]") if self.config.get("progress") else pool
                for base in it:
                    inst = base.with_aliases(aliases)
                    cache = self._check_relations(rels, verdicts, result.assertions_by_relation, inst, report)
                    for claim in claims:
                        if claim.superset in cache and claim.subset in cache:
                            report.checked["superset"] += 1
                            extra = cache[claim.subset].pairs - cache[claim.superset].pairs
                            if extra:
                                self._record(report, "superset", claim.subset, inst,
                                             {"superset": claim.superset, "rule": claim.rule,
                                              "uncovered_pairs": sorted(extra)[:10]})
            self.logger.info("success", "falsify completed", {"checked": report.checked, "skipped": report.skipped,
                                                                "counterexamples": len(report.counterexamples)})
            return report
        except SparseDepError:
            raise
        except Exception as e:
            self.logger.error("exception", "Unhandled exception in falsify", {"trace": traceback.format_exc()})
            raise wrap_exc("oracle falsification failed", e, OracleError)

    def dump_instance(self, inst: ConcreteInstance, path: str) -> str:
        return str(inst.dump(path))

    def load_instance(self, path: str) -> ConcreteInstance:
        return ConcreteInstance.load(path)

    # ---------- Internal helpers ----------

    def _preset_for(self, kernel: str, preset: str) -> str:
        if preset != "auto":
            return preset
        return self.config["kernel_presets"].get(kernel, "csr_lower_triangular")

    def _check_relations(self, rels: Sequence[Relation], verdicts: Mapping[str, Any],
                         assertions: Mapping[str, Sequence[Assertion]], inst: ConcreteInstance,
                         report: FalsifyReport) -> Dict[str, Enumeration]:
        cache: Dict[str, Enumeration] = {}
        for r in rels:
            bad = self.validate(inst, assertions.get(r.name, ()))
            if bad:
                report.skipped += 1
                self.logger.debug("skip_instance", "Instance fails declared assertions",
                                  {"relation": r.name, "preset": inst.preset, "seed": inst.seed, "first": bad[0]})
                continue
            try:
                en = self.enumerate(r, inst)
            except InstanceError as e:
                report.skipped += 1
                self.logger.warn("instance_rejected", str(e), {"relation": r.name, "seed": inst.seed})
                continue
            cache[r.name] = en
            v = verdicts.get(r.name)
            if v is None:
                continue
            if v.unsat:
                report.checked["unsat"] += 1
                if not en.empty:
                    first = next(s for c in en.solutions for s in c)
                    self._record(report, "unsat", r.name, inst,
                                 {"status": v.status, "solution": dict(zip(en.iterators, first))})
                continue
            for idx, clause in enumerate(v.clauses):
                for e in clause.equalities:
                    report.checked["equality"] += 1
                    bad_point = self._equality_violation(e, en.clause_points(idx), inst)
                    if bad_point is not None:
                        self._record(report, "equality", r.name, inst,
                                     {"equality": format_constraint(e), "clause": idx, "solution": bad_point})
        return cache

    @staticmethod
    def _equality_violation(e: Constraint, points: Sequence[Dict[str, int]],
                            inst: ConcreteInstance) -> Optional[Dict[str, int]]:
        for p in points:
            try:
                if not holds_at(inst, e, p):
                    return p
            except OutOfDomain:
                return p
        return None

    def _record(self, report: FalsifyReport, kind: str, relation: str, inst: ConcreteInstance,
                detail: Dict[str, Any]):
        n = len(report.counterexamples)
        path = Path(self.config["dump_dir"]) / f"cex_{n:03d}_{kind}_{relation}.json"
        self.dump_instance(inst, str(path))
        cex = Counterexample(kind, relation, detail, inst.preset, inst.seed, str(path))
        report.counterexamples.append(cex)
        self.logger.warn("counterexample", f"{kind} verdict falsified", cex.to_record())

    @staticmethod
    def _linear_in(c: Constraint, v: str) -> int:
        k = c.expr.coeff(Var(v))
        if k == 0:
            return 0
        for t in c.expr.uf_terms():
            if any(v in a.var_names() for a in t.args):
                return 0
        return k

    def _plan(self, clause: Conjunction, iterators: Sequence[str]):
        """
        Loop order for one clause: repeatedly pick an iterator with an
        equality, else one bounded on both sides, by the already placed
        ones; fall back to a fixed box when none is.
        """
        placed: Set[str] = set()
        plan: List[Tuple[str, bool]] = []
        bounds: List[List[Tuple[Constraint, int]]] = []
        remaining = list(iterators)
        while remaining:
            pick = None
            for v in remaining:
                usable = [(c, self._linear_in(c, v)) for c in clause
                          if self._linear_in(c, v) and c.expr.var_names() - {v} <= placed]
                has_eq = any(c.kind == EQ for c, _ in usable)
                lower = has_eq or any(k > 0 for c, k in usable)
                upper = has_eq or any(k < 0 for c, k in usable)
                if has_eq:
                    pick = (v, usable)
                    break
                if lower and upper and pick is None:
                    pick = (v, usable)
            if pick is None:
                v = remaining[0]
                usable = [(c, self._linear_in(c, v)) for c in clause
                          if self._linear_in(c, v) and c.expr.var_names() - {v} <= placed]
                plan.append((v, True))
            else:
                v, usable = pick
                plan.append((v, False))
            bounds.append(usable)
            placed.add(v)
            remaining.remove(v)

        ready: List[List[Constraint]] = [[] for _ in range(len(plan) + 1)]
        for c in clause:
            names = c.expr.var_names()
            depth = 0
            for d, (v, _) in enumerate(plan):
                if v in names:
                    depth = d + 1
            ready[depth].append(c)
        return plan, ready, bounds

    @staticmethod
    def _ready_ok(cs: Sequence[Constraint], env: Dict[str, int], inst: ConcreteInstance, stats: _Stats) -> bool:
        uf = inst.uf()
        try:
            return all(c.holds(env, uf) for c in cs)
        except OutOfDomain:
            stats.ood += 1
            return False
        except KeyError as e:
            raise InstanceError(f"instance has no value for symbolic constant {e}", original=e)

    def _solve(self, plan, ready, bounds, depth: int, env: Dict[str, int], inst: ConcreteInstance,
               stats: _Stats, out: List[Tuple[int, ...]], iterators: Sequence[str]):
        if depth == len(plan):
            out.append(tuple(env[v] for v in iterators))
            return
        v, fb = plan[depth]
        box = 2 * max(inst.nnz, inst.n, 1)
        lo, hi = (-box, box) if fb else (None, None)
        uf = inst.uf()
        env[v] = 0
        try:
            for c, k in bounds[depth]:
                rest = c.expr.evaluate(env, uf)
                if c.kind == EQ:
                    if rest % k:
                        return
                    x = -rest // k
                    lo = x if lo is None else max(lo, x)
                    hi = x if hi is None else min(hi, x)
                elif k > 0:
                    x = -(rest // k)
                    lo = x if lo is None else max(lo, x)
                else:
                    x = rest // (-k)
                    hi = x if hi is None else min(hi, x)
        except OutOfDomain:
            stats.ood += 1
            return
        finally:
            del env[v]
        if lo is None or hi is None:
            return
        for x in range(lo, hi + 1):
            stats.tick()
            env[v] = x
            if self._ready_ok(ready[depth + 1], env, inst, stats):
                self._solve(plan, ready, bounds, depth + 1, env, inst, stats, out, iterators)
            del env[v]
