class AnalysisAgent:
    """
    AnalysisAgent

    Role:
        Runs the unsatisfiability procedure on dependence relations and turns
        each one into a Verdict: affine pass, index-array consistency,
        assertion instantiation (two-phase) and equality discovery for the
        relations that survive.

    Inputs:
        - Problems parsed from `.deps` files (relations + declared assertions).
        - PropertyConfig: which assertions are enabled (`none`, `all`,
          `single:<category>`, `only:<assertion name>`).
        - config: presburger caps, instantiation budget, thread count.

    Outputs:
        - Verdict per unique relation with status, certificate, equalities
          (printed over index-array terms) and the assertions that fired.
        - CorpusResult with raw/unique relation lists and summary counts.

    Assumptions:
        - A relation is UNSAT only if every clause is; a clause hitting a cap
          is reported UNKNOWN_CAPPED and counted with MAYBE.
        - Relations are deduplicated by `relation_key` (kernel included)
          before anything is counted.
    """


import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from tqdm import tqdm

from src.core.assertions import CATEGORIES, Assertion, InstanceBudget, apply_two_phase, instantiate_all, replay
from src.core.presburger import Caps, SatStatus, check, implied_equalities
from src.core.uf_encoding import ackermannize, ground_terms
from src.model.parser import Problem, parse_problem
from src.model.relation import Conjunction, Constraint, Relation, format_constraint, normalize, relation_key
from src.utils.errors import AnalysisError, CapExceeded, CorpusError, SparseDepError, wrap_exc
from src.utils.logger import AgentLogger

UNSAT_AFFINE = "UNSAT_AFFINE"
UNSAT_WITH_PROPERTIES = "UNSAT_WITH_PROPERTIES"
MAYBE_SAT = "MAYBE_SAT"
UNKNOWN_CAPPED = "UNKNOWN_CAPPED"
UNSAT_STATUSES = (UNSAT_AFFINE, UNSAT_WITH_PROPERTIES)


@dataclass(frozen=True)
class PropertyConfig:
    mode: str = "all"
    value: str = ""

    @staticmethod
    def parse(text: str) -> "PropertyConfig":
        text = (text or "all").strip()
        if text in ("none", "all"):
            return PropertyConfig(text)
        mode, _, value = text.partition(":")
        if mode == "single" and value in CATEGORIES:
            return PropertyConfig("single", value)
        if mode == "only" and value:
            return PropertyConfig("only", value)
        raise ValueError(f"bad property configuration {text!r}; expected none, all, single:<category> or only:<name>")

    def enabled(self, assertions: Iterable[Assertion]) -> List[Assertion]:
        if self.mode == "none":
            return []
        if self.mode == "all":
            return list(assertions)
        if self.mode == "single":
            return [a for a in assertions if a.category == self.value]
        return [a for a in assertions if a.name == self.value or a.name.startswith(self.value + "#")]

    def __str__(self) -> str:
        return self.mode if not self.value else f"{self.mode}:{self.value}"


@dataclass
class ClauseResult:
    status: str
    fired: Tuple[str, ...] = ()
    certificate: Tuple[dict, ...] = ()
    equalities: Tuple[Constraint, ...] = ()
    trace: List[dict] = field(default_factory=list)
    diagnostic: str = ""

    @property
    def unsat(self) -> bool:
        return self.status in UNSAT_STATUSES


@dataclass
class Verdict:
    relation: str
    kernel: str
    status: str
    key: str
    clauses: List[ClauseResult]
    properties_used: Tuple[str, ...] = ()
    config: str = "all"
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def unsat(self) -> bool:
        return self.status in UNSAT_STATUSES

    @property
    def capped(self) -> bool:
        return self.status == UNKNOWN_CAPPED or any(c.status == UNKNOWN_CAPPED for c in self.clauses)

    @property
    def maybe_clauses(self) -> List[int]:
        return [i for i, c in enumerate(self.clauses) if not c.unsat]

    @property
    def equalities(self) -> List[str]:
        out: List[str] = []
        for c in self.clauses:
            for e in c.equalities:
                text = format_constraint(e)
                if text not in out:
                    out.append(text)
        return out

    def to_record(self) -> Dict[str, Any]:
        return {
            "relation": self.relation,
            "kernel": self.kernel,
            "status": self.status,
            "config": self.config,
            "properties_used": list(self.properties_used),
            "equalities": self.equalities,
            "capped": self.capped,
            "clauses": [
                {
                    "status": c.status,
                    "fired": list(c.fired),
                    "certificate": list(c.certificate),
                    "equalities": [format_constraint(e) for e in c.equalities],
                    "diagnostic": c.diagnostic,
                }
                for c in self.clauses
            ],
        }


@dataclass
class CorpusResult:
    problems: List[Problem]
    raw: List[Relation]
    unique: List[Relation]
    verdicts: List[Verdict]
    assertions_by_relation: Dict[str, Tuple[Assertion, ...]]

    def summary(self) -> Dict[str, Any]:
        counts = {s: 0 for s in (UNSAT_AFFINE, UNSAT_WITH_PROPERTIES, MAYBE_SAT, UNKNOWN_CAPPED)}
        per_kernel: Dict[str, Dict[str, int]] = {}
        for v in self.verdicts:
            counts[v.status] += 1
            k = per_kernel.setdefault(v.kernel, {"unique": 0, "unsat_affine": 0, "unsat_properties": 0, "maybe": 0})
            k["unique"] += 1
            if v.status == UNSAT_AFFINE:
                k["unsat_affine"] += 1
            elif v.status == UNSAT_WITH_PROPERTIES:
                k["unsat_properties"] += 1
            else:
                k["maybe"] += 1
        return {
            "relations": len(self.raw),
            "unique": len(self.unique),
            "duplicates": len(self.raw) - len(self.unique),
            "unsat_affine": counts[UNSAT_AFFINE],
            "unsat_properties": counts[UNSAT_WITH_PROPERTIES],
            "maybe": counts[MAYBE_SAT] + counts[UNKNOWN_CAPPED],
            "capped": sum(1 for v in self.verdicts if v.capped),
            "baseline": len(self.unique) - counts[UNSAT_AFFINE],
            "per_kernel": per_kernel,
        }


class AnalysisAgent:
    DEFAULT_CONFIG: Dict[str, Any] = {
        "presburger": {},
        "instantiation": {},
        "threads": 4,
        "exhaustive_pairs": False,
        "progress": False,
    }

    def __init__(self, config: Optional[Dict[str, Any]] = None, run_id: Optional[str] = None):
        self.config = dict(self.DEFAULT_CONFIG)
        if config:
            self.config.update(config)
        self.run_id = run_id
        self.logger = AgentLogger("AnalysisAgent", run_id=self.run_id)
        self.caps = Caps.from_config(self.config.get("presburger"))
        self.budget = InstanceBudget.from_config(self.config.get("instantiation"))
        self.logger.debug("init", "AnalysisAgent initialized", {"caps": self.caps.__dict__,
                                                                 "budget": self.budget.__dict__})

    # ----------- Public API -----------

    def analyze(self, r: Relation, assertions: Sequence[Assertion] = (),
                cfg: Optional[PropertyConfig] = None) -> Verdict:
        cfg = cfg or PropertyConfig()
        self.logger.info("start", "analyze start", {"relation": r.name, "config": str(cfg)})
        try:
            started = time.perf_counter()
            enabled = cfg.enabled(assertions)
            E = ground_terms(r)
            results = [self._analyze_clause(c, enabled, E) for c in r.clauses]
            status = self._relation_status(results)
            used = sorted({lbl.split("[", 1)[0] for c in results for lbl in c.fired
                           if not lbl.startswith("consistency(")})
            v = Verdict(r.name, r.kernel, status, relation_key(r), results, tuple(used), str(cfg),
                        {"analyze_s": time.perf_counter() - started})
            self.logger.info("success", "analyze completed",
                             {"relation": r.name, "status": status, "equalities": v.equalities})
            return v
        except SparseDepError:
            self.logger.error("exception", "analyze failed", {"relation": r.name, "trace": traceback.format_exc()})
            raise
        except Exception as e:
            self.logger.error("exception", "Unhandled exception in analyze", {"relation": r.name,
                                                                             "trace": traceback.format_exc()})
            raise wrap_exc(f"analysis of relation {r.name} failed", e, AnalysisError)

    def load_corpus(self, files: Iterable[str]) -> List[Problem]:
        problems = []
        for f in files:
            self.logger.debug("parse", "Parsing problem file", {"file": str(f)})
            problems.append(parse_problem(f))
        return problems

    def analyze_corpus(self, problems: Sequence[Problem], cfg: Optional[PropertyConfig] = None) -> CorpusResult:
        cfg = cfg or PropertyConfig()
        self.logger.info("start", "analyze_corpus start", {"files": len(problems), "config": str(cfg)})
        raw: List[Relation] = []
        owner: Dict[str, Tuple[Assertion, ...]] = {}
        seen: Dict[str, Relation] = {}
        for p in problems:
            for r in p.relations:
                raw.append(r)
                key = relation_key(r)
                if key not in seen:
                    seen[key] = r
                    owner[r.name] = tuple(p.assertions)
        unique = list(seen.values())
        self.logger.info("dedup", "Deduplicated relations", {"raw": len(raw), "unique": len(unique)})

        def run_one(r: Relation) -> Verdict:
            try:
                return self.analyze(r, owner[r.name], cfg)
            except SparseDepError as e:
                raise CorpusError(str(e), relation=r.name, original=e)

        threads = max(1, int(self.config.get("threads", 1)))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            it = pool.map(run_one, unique)
            if self.config.get("progress"):
                it = tqdm(it, total=len(unique), desc=f"analyze[{cfg}]")
            verdicts = list(it)
        result = CorpusResult(list(problems), raw, unique, verdicts, owner)
        summary = result.summary()
        self.logger.info("success", "analyze_corpus completed", {k: v for k, v in summary.items() if k != "per_kernel"})
        return result

    def replay_verdict(self, v: Verdict, r: Relation, assertions: Sequence[Assertion]) -> bool:
        """Re-run every clause with only the instances its certificate names."""
        if not v.unsat:
            return False
        E = ground_terms(r)
        for clause, res in zip(r.clauses, v.clauses):
            if not replay(clause, assertions, res.fired, E, self.budget, self.caps):
                self.logger.warn("replay_failed", "Certificate replay did not reproduce UNSAT",
                                 {"relation": r.name, "fired": list(res.fired)})
                return False
        return True

    # ---------- Internal helpers ----------

    def _analyze_clause(self, clause: Conjunction, enabled: Sequence[Assertion], E) -> ClauseResult:
        try:
            enc = ackermannize(clause, self.caps)
        except CapExceeded as e:
            return ClauseResult(UNKNOWN_CAPPED, diagnostic=str(e))
        base = check(enc.system, self.caps, want_witness=False)
        if base.unsat:
            return ClauseResult(UNSAT_AFFINE, (), base.certificate, trace=list(enc.trace))
        system = enc.system
        capped = base.status == SatStatus.UNKNOWN
        diagnostic = base.diagnostic
        fired: Tuple[str, ...] = ()
        trace = list(enc.trace)
        if enabled and len(E):
            insts = instantiate_all(enabled, E, self.budget)
            if insts.truncated:
                self.logger.warn("cap_hit", "Instance budget truncated instantiation",
                                 {"max_instances": self.budget.max_instances})
            try:
                tp = apply_two_phase(enc, insts, self.budget, self.caps)
            except CapExceeded as e:
                return ClauseResult(UNKNOWN_CAPPED, diagnostic=str(e), trace=trace)
            trace = tp.trace
            for t in trace:
                if t.get("event") in ("fired", "contrapositive"):
                    self.logger.debug("phase1_fire", t["event"], t)
            if tp.unsat:
                return ClauseResult(UNSAT_WITH_PROPERTIES, tp.fired, tp.certificate, trace=trace)
            system = tp.system
            fired = tp.fired
            capped = capped or tp.capped or insts.truncated
        try:
            found = implied_equalities(system, bool(self.config.get("exhaustive_pairs")), self.caps)
        except CapExceeded as e:
            found, capped, diagnostic = [], True, str(e)
        decoded = tuple(normalize(Constraint(c.kind, enc.table.decode(c.expr))) for c in found)
        status = UNKNOWN_CAPPED if capped else MAYBE_SAT
        return ClauseResult(status, fired, (), decoded, trace, diagnostic)

    @staticmethod
    def _relation_status(results: Sequence[ClauseResult]) -> str:
        if all(c.unsat for c in results):
            if all(c.status == UNSAT_AFFINE for c in results):
                return UNSAT_AFFINE
            return UNSAT_WITH_PROPERTIES
        if any(c.status == UNKNOWN_CAPPED for c in results):
            return UNKNOWN_CAPPED
        return MAYBE_SAT
