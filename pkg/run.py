#!/usr/bin/env python
"""
run.py
Command-line surface of the sparse dependence analyzer.

Commands:
  check     <files> [--properties none|all|single:<category>|only:<name>] [--json|--table]
  simplify  <files>                  equalities + inspector cost before/after
  superset  <files>                  superset claims + minimized runtime checks
  report    <files>                  impact, cost and ablation tables against corpus/manifest.yaml
  oracle    <files> --preset P --trials N --seed S [--claims fixture.json]
  inspect   <files> --matrix <mtx|json> [--emit-pseudo] [--dot]

Files may be `.deps` problem files or directories; a directory with a
manifest.yaml is read in manifest order, otherwise every `.deps` below it.

Exit codes: 0 ok, 1 report mismatch, 2 parse / corpus error,
3 oracle counterexample.
"""

import argparse
import datetime
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import yaml

from src.agents import (
    AnalysisAgent,
    ComplexityAgent,
    InspectorAgent,
    OracleAgent,
    PropertyConfig,
    SupersetAgent,
)
from src.agents.superset_agent import SupersetClaim
from src.model.parser import parse_constraints
from src.orchestrator.aggregator import ABLATION_CONFIGS, Aggregator, load_manifest
from src.utils.errors import CorpusError, ParseError, SparseDepError

EXIT_OK, EXIT_MISMATCH, EXIT_PARSE, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3


def load_config(config_path: str) -> dict:
    path = Path(config_path)
    if not path.is_file():
        return {}
    with open(path, "r") as f:
        return yaml.safe_load(f) or {}


def build_agent_configs(cfg: dict, manifest: Optional[dict] = None) -> dict:
    """
    Split the global config.yaml into per-agent configs.
    """
    presburger = cfg.get("presburger", {})
    runtime = cfg.get("runtime", {})
    threads = int(os.environ.get("SPARSEDEP_THREADS", runtime.get("threads", 4)))
    density = cfg.get("complexity", {}).get("density", 8)
    progress = bool(runtime.get("progress", False))

    kernel_presets = {}
    kernel_aliases = {}
    for kernel, entry in ((manifest or {}).get("kernels") or {}).items():
        if entry.get("preset"):
            kernel_presets[kernel] = entry["preset"]
        if entry.get("aliases"):
            kernel_aliases[kernel] = dict(entry["aliases"])

    oracle_cfg = dict(cfg.get("oracle", {}))
    oracle_cfg.update({"kernel_presets": kernel_presets, "kernel_aliases": kernel_aliases, "progress": progress})

    return {
        "analysis": {
            "presburger": presburger,
            "instantiation": cfg.get("instantiation", {}),
            "threads": threads,
            "exhaustive_pairs": presburger.get("exhaustive_pairs", False),
            "progress": progress,
        },
        "complexity": {"density": density, "presburger": presburger},
        "superset": {"enable_overlap": cfg.get("superset", {}).get("enable_overlap", True),
                     "presburger": presburger},
        "oracle": oracle_cfg,
        "inspector": {
            "threads": threads,
            "emit_pseudo": cfg.get("inspector", {}).get("emit_pseudo", False),
            "presburger": presburger,
            "density": density,
        },
        "logging": cfg.get("logging", {}),
    }


def expand_files(paths: List[str]) -> List[str]:
    out: List[str] = []
    for p in map(Path, paths):
        if p.is_dir():
            manifest = p / "manifest.yaml"
            if manifest.is_file():
                listed = load_manifest(manifest)
                out.extend(str(p / k["file"]) for k in listed.get("kernels", {}).values() if k.get("file"))
            else:
                out.extend(str(f) for f in sorted(p.rglob("*.deps")))
        else:
            out.append(str(p))
    return out


def find_manifest(paths: List[str], cfg: dict) -> Optional[dict]:
    for p in map(Path, paths):
        candidate = (p if p.is_dir() else p.parent) / "manifest.yaml"
        if candidate.is_file():
            return load_manifest(candidate)
        candidate = (p if p.is_dir() else p.parent).parent / "manifest.yaml"
        if candidate.is_file():
            return load_manifest(candidate)
    configured = cfg.get("corpus", {}).get("manifest")
    if configured and Path(configured).is_file():
        return load_manifest(configured)
    return None


class Runner:
    """Builds the agents once per invocation and runs one command."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg = load_config(args.config)
        self.run_id = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%d_%H%M%S")
        logging_cfg = self.cfg.get("logging", {})
        self.logs_dir = logging_cfg.get("outdir", os.environ.get("SPARSEDEP_LOG_DIR", "logs"))
        os.environ["SPARSEDEP_LOG_DIR"] = self.logs_dir  # AgentLogger reads it at construction
        if logging_cfg.get("level"):
            os.environ["SPARSEDEP_LOG_LEVEL"] = str(logging_cfg["level"])
        Path(self.logs_dir).mkdir(parents=True, exist_ok=True)

        files = args.files or self.cfg.get("corpus", {}).get("paths", ["corpus"])
        self.manifest = find_manifest(files, self.cfg)
        self.files = expand_files(files)
        self.agent_cfgs = build_agent_configs(self.cfg, self.manifest)
        self.analysis = AnalysisAgent(self.agent_cfgs["analysis"], run_id=self.run_id)
        self.complexity = ComplexityAgent(self.agent_cfgs["complexity"], run_id=self.run_id)
        self.superset_agent = SupersetAgent(self.agent_cfgs["superset"], run_id=self.run_id)
        self.outputs: Dict[str, Any] = {}
        self.summary: Dict[str, Any] = {}

    # ----------- commands -----------

    def check(self) -> int:
        cfg = PropertyConfig.parse(self.args.properties)
        result = self._analyze(cfg)
        s = result.summary()
        self.summary = {k: v for k, v in s.items() if k != "per_kernel"}
        if self.args.json:
            print(json.dumps([v.to_record() for v in result.verdicts], indent=2, sort_keys=True))
        elif result.verdicts:
            rows = []
            for r, v in zip(result.unique, result.verdicts):
                live = [i for i, c in enumerate(v.clauses) if c.status != "UNSAT_AFFINE"]
                est = self.complexity.estimate_relation(r, live)
                rows.append({"relation": r.name, "kernel": r.kernel, "status": v.status,
                             "properties_used": ",".join(v.properties_used),
                             "complexity": str(est) if live else "-"})
            print(pd.DataFrame(rows).to_string(index=False))
        print(summary_line(s))
        return EXIT_OK

    def simplify(self) -> int:
        result = self._analyze(PropertyConfig.parse(self.args.properties))
        rows = []
        for r, v in zip(result.unique, result.verdicts):
            if v.unsat:
                continue
            idx = v.maybe_clauses
            before = self.complexity.estimate_relation(r, idx)
            after = self.complexity.estimate_relation(r, idx, {i: v.clauses[i].equalities for i in idx})
            print(f"{r.name}: {before} -> {after}")
            for e in v.equalities:
                print(f"  {e}")
            rows.append({"relation": r.name, "before": str(before), "after": str(after), "equalities": v.equalities})
        self.summary = {"maybe": len(rows), "reduced": sum(1 for x in rows if x["before"] != x["after"])}
        print(f"{self.summary['maybe']} maybe relations, {self.summary['reduced']} reduced by equalities")
        return EXIT_OK

    def superset(self) -> int:
        result = self._analyze(PropertyConfig.parse(self.args.properties))
        agg = Aggregator(self.manifest, run_id=self.run_id)
        reports = agg.kernel_reports(result, self.complexity, self.superset_agent)
        claims = 0
        for kr in reports:
            for c in kr.minimized.claims:
                claims += 1
                print(f"{c.superset} ⊇ {c.subset}  [{c.rule}]")
            if kr.maybe:
                print(f"{kr.kernel}: {len(kr.maybe)} maybe -> {len(kr.minimized.kept)} checks: "
                      f"{', '.join(kr.minimized.kept)}")
        self.summary = {"claims": claims, "kept": sum(len(kr.minimized.kept) for kr in reports)}
        return EXIT_OK

    def report(self) -> int:
        if self.manifest is None:
            raise CorpusError("report needs a corpus manifest (corpus/manifest.yaml)")
        ablation = {}
        for name in ABLATION_CONFIGS:
            ablation[name] = self._analyze(PropertyConfig.parse(name), problems=getattr(self, "_problems", None))
        result = ablation["all"]
        agg = Aggregator(self.manifest, run_id=self.run_id)
        reports = agg.kernel_reports(result, self.complexity, self.superset_agent)
        out = agg.aggregate_and_write(result, reports, Path(self.args.outdir), ablation, self.complexity)
        for _, row in agg.impact_table(reports).iterrows():
            print(agg.row_line(row))
        for _, row in agg.cost_table(reports).iterrows():
            print(f"{row['title']}: {row['baseline']} -> {row['simplified']} "
                  f"{row['baseline_status'] or '-'}/{row['simplified_status'] or '-'}")
        print(summary_line(result.summary()))
        print(f"{out['mismatches']} mismatches, {out['flagged']} flagged; report written to {out['report']}")
        self.outputs = {k: v for k, v in out.items() if isinstance(v, str)}
        self.summary = {"mismatches": out["mismatches"], "flagged": out["flagged"]}
        return EXIT_MISMATCH if out["mismatches"] else EXIT_OK

    def oracle(self) -> int:
        result = self._analyze(PropertyConfig.parse(self.args.properties))
        oracle = OracleAgent(self.agent_cfgs["oracle"], run_id=self.run_id)
        claims: List[SupersetClaim] = []
        agg = Aggregator(self.manifest, run_id=self.run_id)
        for kr in agg.kernel_reports(result, self.complexity, self.superset_agent):
            claims.extend(kr.minimized.claims)
        if self.args.claims:
            claims.extend(inject_claims(self.args.claims, result))
        report = oracle.falsify(result, claims, preset=self.args.preset, trials=self.args.trials,
                                seed=self.args.seed)
        for c in report.counterexamples:
            print(f"counterexample [{c.kind}] {c.relation}: {json.dumps(c.detail, sort_keys=True)} -> {c.dump_path}")
        print(f"{len(report.counterexamples)} counterexamples "
              f"(checked {report.checked['unsat']} unsat, {report.checked['equality']} equalities, "
              f"{report.checked['superset']} superset claims; skipped {report.skipped})")
        self.summary = report.to_record()
        self.summary.pop("counterexamples")
        self.summary["counterexamples"] = len(report.counterexamples)
        return EXIT_OK if report.ok else EXIT_COUNTEREXAMPLE

    def inspect(self) -> int:
        result = self._analyze(PropertyConfig.parse(self.args.properties))
        inspector = InspectorAgent(self.agent_cfgs["inspector"], run_id=self.run_id)
        inst = inspector.load_matrix(self.args.matrix)
        verdicts = {v.relation: v for v in result.verdicts}
        aliases: Dict[str, str] = {}
        for kernel in {r.kernel for r in result.unique}:
            aliases.update(self.agent_cfgs["oracle"]["kernel_aliases"].get(kernel, {}))
        inst = inst.with_aliases(aliases)
        plans = [inspector.build_inspector(r, verdicts[r.name]) for r in result.unique if not verdicts[r.name].unsat]
        if self.args.emit_pseudo or inspector.config.get("emit_pseudo"):
            for plan in plans:
                print(inspector.emit_pseudo(plan))
        g = inspector.run_inspectors(plans, inst)
        levels = inspector.wavefronts(g)
        if self.args.dot:
            print(inspector.to_dot(g, levels))
        for k, level in enumerate(levels):
            print(f"wavefront {k}: {' '.join(str(v) for v in level)}")
        self.summary = {"plans": len(plans), "edges": g.number_of_edges(), "wavefronts": len(levels)}
        wf_path = Path(self.args.outdir) / "wavefronts.json"
        wf_path.parent.mkdir(parents=True, exist_ok=True)
        wf_path.write_text(json.dumps({"levels": levels}, indent=1), encoding="utf-8")
        self.outputs = {"wavefronts": str(wf_path)}
        return EXIT_OK

    # ----------- helpers -----------

    def _analyze(self, cfg: PropertyConfig, problems=None):
        if problems is None:
            problems = self.analysis.load_corpus(self.files)
            self._problems = problems
        return self.analysis.analyze_corpus(problems, cfg)

    def write_run_log(self, code: int) -> Path:
        path = Path(self.logs_dir) / f"run_{self.run_id}.json"
        payload = {
            "run_id": self.run_id,
            "command": self.args.command,
            "arguments": {k: v for k, v in vars(self.args).items() if k != "func"},
            "files": self.files,
            "exit_code": code,
            "summary": self.summary,
            "outputs": self.outputs,
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, default=str)
        return path


def summary_line(s: Dict[str, Any]) -> str:
    if not s["relations"]:
        return "0 relations"
    unsat = s["unsat_affine"] + s["unsat_properties"]
    return (f"{s['relations']} relations ({s['unique']} unique): unsat={unsat} "
            f"({s['unsat_affine']} affine + {s['unsat_properties']} properties), maybe={s['maybe']}")


def inject_claims(path: str, result) -> List[SupersetClaim]:
    """
    Self-test fixture: extra superset claims and claimed equalities that
    the oracle must refute. Equalities are attached to every MAYBE clause
    of the named relation.
    """
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    relations = {r.name: r for r in result.unique}
    verdicts = {v.relation: v for v in result.verdicts}
    for name, texts in (data.get("equalities") or {}).items():
        if name not in relations:
            raise CorpusError(f"claims fixture names unknown relation {name!r}", relation=name)
        extra = [c for t in texts for c in parse_constraints(t, relations[name])]
        v = verdicts[name]
        for i in v.maybe_clauses:
            v.clauses[i].equalities = tuple(v.clauses[i].equalities) + tuple(extra)
    return [SupersetClaim(c["superset"], c["subset"], c.get("rule", "TRIVIAL")) for c in data.get("superset", [])]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Sparse-matrix dependence analyzer")
    parser.add_argument("--config", default="config/config.yaml", help="Path to YAML config file.")
    parser.add_argument("--outdir", default="reports/", help="Directory for report artifacts.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("files", nargs="*", help="Problem files or corpus directories.")
        p.add_argument("--properties", default="all",
                       help="none | all | single:<category> | only:<assertion name>")
        p.add_argument("--config", default=argparse.SUPPRESS)
        p.add_argument("--outdir", default=argparse.SUPPRESS)
        return p

    p = add("check", "Classify every relation as UNSAT or MAYBE.")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="Print verdict records as JSON.")
    fmt.add_argument("--table", action="store_true", help="Print a table (default).")
    add("simplify", "Print certified equalities and inspector cost before/after.")
    add("superset", "Print superset claims and the minimized set of runtime checks.")
    add("report", "Reproduce the corpus tables and compare them with the manifest.")
    p = add("oracle", "Look for counterexamples on sampled concrete matrices.")
    p.add_argument("--preset", default="auto")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--claims", default=None, help="Self-test fixture with claims to refute.")
    p = add("inspect", "Run the inspectors on one matrix and print its wavefronts.")
    p.add_argument("--matrix", required=True, help="Matrix Market file or instance JSON.")
    p.add_argument("--emit-pseudo", action="store_true")
    p.add_argument("--dot", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        runner = Runner(args)
        code = getattr(runner, args.command)()
    except (ParseError, CorpusError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except SparseDepError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_PARSE
    path = runner.write_run_log(code)
    print(f"Run log: {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
