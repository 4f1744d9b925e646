# src/agents/inspector_agent.py
"""
InspectorAgent

Role:
    Turns surviving dependence relations into runtime inspectors and runs
    them on concrete matrices: one interpreted loop nest per MAYBE clause,
    emitting an edge between outer iterations for every point that passes
    the residual checks. Builds the dependence graph and its wavefronts.

Inputs:
    - Relation + Verdict (MAYBE clauses and their equalities).
    - ConcreteInstance (sampled, loaded from Matrix Market or a fixture).
    - config: threads, emit_pseudo, presburger caps.

Outputs:
    - InspectorPlan, networkx DiGraph over outer iterations, wavefront
      levels, DOT text and C-like pseudo-code.

Assumptions:
    - Loop order and bounds come from ComplexityAgent's loop model, so the
      simplified plan costs what the estimate says.
    - Out-of-range index-array reads make the point fail its checks.
"""

import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import scipy.io
import scipy.sparse as sp

from src.agents.complexity_agent import DERIVED, PROJECTED, ComplexityAgent, LoopNestModel
from src.core.presburger import Caps, LinearSystem, check
from src.model.instance import ConcreteInstance, OutOfDomain, from_pattern
from src.model.relation import AffineExpr, Constraint, Relation, UFTerm, Var, format_constraint, format_expr
from src.utils.errors import InspectorError, InstanceError, SparseDepError, wrap_exc
from src.utils.logger import AgentLogger


@dataclass
class InspectorPlan:
    relation: str
    outer: Tuple[str, str]
    nests: List[LoopNestModel] = field(default_factory=list)
    clauses: List[int] = field(default_factory=list)
    simplified: bool = True

    @property
    def empty(self) -> bool:
        return not self.nests

    @property
    def loop_count(self) -> int:
        return max((len(m.scheduled) for m in self.nests), default=0)

    @property
    def derived_count(self) -> int:
        return sum(len(m.derived) for m in self.nests)


class InspectorAgent:
    DEFAULT_CONFIG: Dict[str, Any] = {
        "threads": 4,
        "emit_pseudo": False,
        "presburger": {},
        "density": 8,
    }

    def __init__(self, config: Optional[Dict[str, Any]] = None, run_id: Optional[str] = None):
        self.config = dict(self.DEFAULT_CONFIG)
        if config:
            self.config.update(config)
        self.run_id = run_id
        self.logger = AgentLogger("InspectorAgent", run_id=self.run_id)
        self.caps = Caps.from_config(self.config.get("presburger"))
        self.complexity = ComplexityAgent({"presburger": self.config.get("presburger", {}),
                                           "density": self.config.get("density", 8)}, run_id=run_id)
        self.logger.debug("init", "InspectorAgent initialized", {"threads": self.config["threads"]})

    # ----------- Public API -----------

    def build_inspector(self, r: Relation, verdict=None, simplified: bool = True) -> InspectorPlan:
        """One nest per MAYBE clause; with `simplified` the clause's certified equalities join the nest."""
        plan = InspectorPlan(r.name, r.outer, simplified=simplified)
        if verdict is None:
            indices = list(range(len(r.clauses)))
        else:
            indices = verdict.maybe_clauses
        for i in indices:
            eqs = tuple(verdict.clauses[i].equalities) if (simplified and verdict is not None) else ()
            plan.nests.append(self.complexity.model_loops(r, r.clauses[i], eqs))
            plan.clauses.append(i)
        self.logger.debug("plan", "Inspector plan built", {"relation": r.name, "nests": len(plan.nests),
                                                          "loops": plan.loop_count, "derived": plan.derived_count})
        return plan

    def run_plan(self, plan: InspectorPlan, inst: ConcreteInstance) -> Set[Tuple[int, int]]:
        """Outer-iteration pairs the plan reports as dependent on this instance."""
        edges: Set[Tuple[int, int]] = set()
        for model in plan.nests:
            steps = [l for l in model.loops if l.kind != PROJECTED]
            self._walk(steps, 0, inst.env(), inst, model, plan.outer, edges)
        return edges

    def run_inspectors(self, plans: Sequence[InspectorPlan], inst: ConcreteInstance) -> nx.DiGraph:
        self.logger.info("start", "run_inspectors start", {"plans": len(plans), "n": inst.n})
        try:
            g = nx.DiGraph()
            g.add_nodes_from(range(inst.n))
            threads = max(1, int(self.config.get("threads", 1)))
            with ThreadPoolExecutor(max_workers=threads) as pool:
                found = list(pool.map(lambda p: self.run_plan(p, inst), plans))
            for plan, edges in zip(plans, found):
                for a, b in sorted(edges):
                    if a == b:
                        continue
                    # the earlier outer iteration executes first
                    a, b = min(a, b), max(a, b)
                    if g.has_edge(a, b):
                        g.edges[a, b]["relations"].append(plan.relation)
                    else:
                        g.add_edge(a, b, relations=[plan.relation])
            self.logger.info("success", "run_inspectors completed",
                             {"nodes": g.number_of_nodes(), "edges": g.number_of_edges()})
            return g
        except SparseDepError:
            raise
        except Exception as e:
            self.logger.error("exception", "Unhandled exception in run_inspectors", {"trace": traceback.format_exc()})
            raise wrap_exc("inspector execution failed", e, InspectorError)

    def wavefronts(self, g: nx.DiGraph) -> List[List[int]]:
        if not nx.is_directed_acyclic_graph(g):
            cycle = nx.find_cycle(g)
            self.logger.error("cycle", "Dependence graph has a cycle", {"cycle": cycle})
            raise InspectorError(f"dependence graph has a cycle: {cycle}")
        return [sorted(level) for level in nx.topological_generations(g)]

    @staticmethod
    def to_dot(g: nx.DiGraph, levels: Optional[List[List[int]]] = None) -> str:
        lines = ["digraph dependences {", "  rankdir=TB;"]
        for k, level in enumerate(levels or []):
            lines.append(f"  {{ rank=same; {' '.join(str(v) for v in level)} }}  // wavefront {k}")
        for v in sorted(g.nodes):
            lines.append(f"  {v};")
        for a, b, data in sorted(g.edges(data=True)):
            label = ",".join(data.get("relations", []))
            lines.append(f'  {a} -> {b} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def emit_pseudo(plan: InspectorPlan) -> str:
        if plan.empty:
            return f"// {plan.relation}: no runtime check needed\n"
        out: List[str] = []
        for idx, model in zip(plan.clauses, plan.nests):
            out.append(f"// {plan.relation}, clause {idx}")
            depth = 0
            for l in model.loops:
                pad = "  " * depth
                if l.kind == PROJECTED:
                    continue
                if l.kind == DERIVED:
                    out.append(f"{pad}{l.iterator} = {format_expr(l.derived_from)};")
                    continue
                lo = InspectorAgent._bound("max", l.lower)
                hi = InspectorAgent._bound("min", l.upper)
                out.append(f"{pad}for ({l.iterator} = {lo}; {l.iterator} <= {hi}; {l.iterator}++) {{")
                depth += 1
            pad = "  " * depth
            parts = [format_constraint(c) for c in model.residual]
            if model.exists_checks:
                hidden = sorted({l.iterator for l in model.loops if l.kind == PROJECTED})
                inner = " && ".join(format_constraint(c) for c in model.exists_checks)
                parts.append(f"exists({', '.join(hidden)}: {inner})")
            checks = " && ".join(parts) or "1"
            out.append(f"{pad}if ({checks})")
            out.append(f"{pad}  add_edge({plan.outer[0]}, {plan.outer[1]});")
            for d in range(depth - 1, -1, -1):
                out.append("  " * d + "}")
        return "\n".join(out) + "\n"

    def load_matrix(self, path: str) -> ConcreteInstance:
        """Matrix Market file (lower triangle kept) or an instance JSON fixture."""
        p = Path(path)
        candidates = [p, p.with_suffix(".json"), p.with_suffix(".mtx")] if not p.suffix else [p]
        found = next((c for c in candidates if c.is_file()), None)
        if found is None:
            raise InstanceError(f"matrix not found: {path}")
        if found.suffix == ".mtx":
            try:
                m = scipy.io.mmread(str(found))
            except Exception as e:
                raise InstanceError(f"cannot read Matrix Market file {found}: {e}", original=e)
            inst = from_pattern(sp.tril(sp.csr_matrix(m)), preset="matrix_market")
        else:
            inst = ConcreteInstance.load(found)
        self.logger.info("load_matrix", "Loaded matrix", {"path": str(found), "n": inst.n, "nnz": inst.nnz})
        return inst

    # ---------- Internal helpers ----------

    @staticmethod
    def _bound(fn: str, exprs) -> str:
        parts = [format_expr(e) for e in exprs]
        return parts[0] if len(parts) == 1 else f"{fn}({', '.join(parts)})"

    def _walk(self, steps, i: int, env: Dict[str, int], inst: ConcreteInstance, model: LoopNestModel,
              outer: Tuple[str, str], edges: Set[Tuple[int, int]]):
        uf = inst.uf()
        if i == len(steps):
            try:
                if all(c.holds(env, uf) for c in model.residual) and self._exists(model, env, uf):
                    edges.add((env[outer[0]], env[outer[1]]))
            except OutOfDomain:
                pass
            return
        step = steps[i]
        try:
            if step.kind == DERIVED:
                env[step.iterator] = step.derived_from.evaluate(env, uf)
                values = None
            else:
                lo = max(e.evaluate(env, uf) for e in step.lower)
                hi = min(e.evaluate(env, uf) for e in step.upper)
                values = range(lo, hi + 1)
        except OutOfDomain:
            env.pop(step.iterator, None)
            return
        if values is None:
            self._walk(steps, i + 1, env, inst, model, outer, edges)
            del env[step.iterator]
            return
        for x in values:
            env[step.iterator] = x
            self._walk(steps, i + 1, env, inst, model, outer, edges)
        env.pop(step.iterator, None)

    def _exists(self, model: LoopNestModel, env: Dict[str, int], uf) -> bool:
        """Integer values for the projected iterators satisfying the kept clause checks at this point."""
        if not model.exists_checks:
            return True
        bound = [self._bind(c, env, uf) for c in model.exists_checks]
        return not check(LinearSystem.of(bound), self.caps, want_witness=False).unsat

    @staticmethod
    def _bind(c: Constraint, env: Dict[str, int], uf) -> Constraint:
        mapping = {}
        for a in c.expr.atoms():
            if isinstance(a, UFTerm):
                mapping[a] = AffineExpr.constant(AffineExpr.of(a).evaluate(env, uf))
            elif not isinstance(a, Var) or a.name in env:
                mapping[a] = AffineExpr.constant(env[a.name])
        return c.substitute(mapping)
