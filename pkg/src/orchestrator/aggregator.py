# src/orchestrator/aggregator.py
"""
Aggregator: collects outputs from the agents and writes the final artifacts:
 - reports/verdicts.json   (versioned records, see docs/verdict_schema.md)
 - reports/impact.csv      (remaining / equality impact / superset impact)
 - reports/cost.csv        (baseline and simplified inspector complexity)
 - reports/ablation.csv    (still-MAYBE relations per complexity class and property set)
 - reports/report.md

Every cell with a manifest value is marked PASS, FAIL or FLAGGED (a known
deviation recorded in the manifest with its rationale). Output is a pure
function of the corpus and config: no timestamps, fixed ordering.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
import yaml

from src.agents.analysis_agent import UNSAT_AFFINE, UNSAT_WITH_PROPERTIES, CorpusResult
from src.agents.complexity_agent import ComplexityAgent, ComplexityExpr, parse_complexity, render
from src.agents.superset_agent import Minimized, SupersetAgent
from src.utils.errors import CorpusError
from src.utils.logger import AgentLogger

SCHEMA_VERSION = 1
PASS, FAIL, FLAGGED = "PASS", "FAIL", "FLAGGED"
ABLATION_CONFIGS = ("none", "single:monotonicity", "single:correlated_monotonicity", "single:triangular", "all")


def load_manifest(path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise CorpusError(f"cannot read corpus manifest {path}: {e}", original=e)
    if not isinstance(data.get("kernels", {}), dict):
        raise CorpusError(f"manifest {path}: 'kernels' must be a mapping")
    return data


@dataclass
class RelationCost:
    relation: str
    kernel: str
    status: str
    baseline: ComplexityExpr
    remaining: ComplexityExpr = field(default_factory=ComplexityExpr.zero)
    simplified: ComplexityExpr = field(default_factory=ComplexityExpr.zero)
    equalities: Tuple[str, ...] = ()

    @property
    def maybe(self) -> bool:
        return self.status not in (UNSAT_AFFINE, UNSAT_WITH_PROPERTIES)


@dataclass
class KernelReport:
    kernel: str
    costs: List[RelationCost]
    minimized: Minimized
    kernel_complexity: Optional[ComplexityExpr] = None

    def _le(self, c: ComplexityExpr) -> bool:
        return self.kernel_complexity is None or c.le(self.kernel_complexity)

    @property
    def maybe(self) -> List[RelationCost]:
        return [c for c in self.costs if c.maybe]

    def impact(self) -> Dict[str, Tuple[int, int]]:
        maybe = self.maybe
        kept = [c for c in maybe if c.relation in self.minimized.kept]
        return {
            "remaining": (sum(self._le(c.remaining) for c in maybe), len(maybe)),
            "equality": (sum(self._le(c.simplified) for c in maybe), len(maybe)),
            "superset": (sum(self._le(c.simplified) for c in kept), len(kept)),
        }

    def baseline(self) -> ComplexityExpr:
        total = ComplexityExpr.zero()
        for c in self.costs:
            if c.status != UNSAT_AFFINE:
                total = total + c.baseline
        return total

    def simplified(self) -> ComplexityExpr:
        total = ComplexityExpr.zero()
        for c in self.maybe:
            if c.relation in self.minimized.kept:
                total = total + c.simplified
        return total


class Aggregator:
    def __init__(self, manifest: Optional[Dict[str, Any]] = None, run_id: Optional[str] = None):
        self.manifest = manifest or {}
        self.run_id = run_id
        self.logger = AgentLogger("Aggregator", run_id=run_id)

    # ----------- Public API -----------

    def kernel_reports(self, result: CorpusResult, complexity: ComplexityAgent,
                       superset: SupersetAgent) -> List[KernelReport]:
        """Per-kernel costs and superset minimization, in corpus order."""
        verdicts = {v.relation: v for v in result.verdicts}
        by_kernel: Dict[str, List] = {}
        for r in result.unique:
            by_kernel.setdefault(r.kernel, []).append(r)

        reports = []
        for kernel, rels in by_kernel.items():
            costs: List[RelationCost] = []
            for r in rels:
                v = verdicts[r.name]
                live = [i for i, c in enumerate(v.clauses) if c.status != UNSAT_AFFINE]
                cost = RelationCost(r.name, kernel, v.status, complexity.estimate_relation(r, live))
                if cost.maybe:
                    idx = v.maybe_clauses
                    cost.remaining = complexity.estimate_relation(r, idx)
                    cost.simplified = complexity.estimate_relation(
                        r, idx, {i: v.clauses[i].equalities for i in idx})
                    cost.equalities = tuple(v.equalities)
                costs.append(cost)
            maybe_rels = [r for r, c in zip(rels, costs) if c.maybe]
            density = int(complexity.config.get("density", 8))
            key = {c.relation: c.simplified.weights(density) for c in costs if c.maybe}
            minimized = superset.minimize(maybe_rels, cost_key=key)
            entry = self.manifest.get("kernels", {}).get(kernel, {})
            kc = parse_complexity(entry["kernel_complexity"]) if entry.get("kernel_complexity") else None
            reports.append(KernelReport(kernel, costs, minimized, kc))
            self.logger.debug("kernel_report", "Kernel evaluated",
                              {"kernel": kernel, "maybe": len(maybe_rels), "kept": len(minimized.kept)})
        return reports

    def impact_table(self, reports: Sequence[KernelReport]) -> pd.DataFrame:
        rows = []
        for kr in reports:
            t = kr.impact()
            row = {"kernel": kr.kernel, "title": self._title(kr.kernel)}
            for col in ("remaining", "equality", "superset"):
                row[f"{col}_le_kernel"], row[f"{col}_total"] = t[col]
                expected = self._expected(kr.kernel, "impact", col)
                row[f"{col}_expected"] = "" if expected is None else f"{expected[0]} {expected[1]}"
                row[f"{col}_status"] = self._cell_status(kr.kernel, f"impact.{col}", list(t[col]), expected)
            rows.append(row)
        return pd.DataFrame(rows)

    def cost_table(self, reports: Sequence[KernelReport]) -> pd.DataFrame:
        rows = []
        for kr in reports:
            row = {"kernel": kr.kernel, "title": self._title(kr.kernel)}
            for col, value in (("baseline", kr.baseline()), ("simplified", kr.simplified())):
                expected = self._expected(kr.kernel, "cost", col)
                row[col] = render(value)
                row[f"{col}_expected"] = "" if expected is None else str(expected)
                row[f"{col}_status"] = self._cell_status(kr.kernel, f"cost.{col}", value, expected)
            entry = self.manifest.get("kernels", {}).get(kr.kernel, {})
            row["kernel_complexity"] = entry.get("kernel_complexity", "")
            rows.append(row)
        return pd.DataFrame(rows)

    def count_cells(self, result: CorpusResult) -> pd.DataFrame:
        """Corpus totals and per-kernel status counts against the manifest."""
        summary = result.summary()
        rows = []
        for name, expected in (self.manifest.get("totals") or {}).items():
            actual = summary.get(name)
            rows.append({"scope": "totals", "count": name, "actual": actual, "expected": expected,
                         "status": self._cell_status("", f"totals.{name}", actual, expected)})
        raw: Dict[str, int] = {}
        for r in result.raw:
            raw[r.kernel] = raw.get(r.kernel, 0) + 1
        for kernel, entry in (self.manifest.get("kernels") or {}).items():
            pk = dict(summary["per_kernel"].get(kernel, {}))
            pk["relations"] = raw.get(kernel, 0)
            for name, expected in (entry.get("counts") or {}).items():
                actual = pk.get(name, 0)
                rows.append({"scope": kernel, "count": name, "actual": actual, "expected": expected,
                             "status": self._cell_status(kernel, f"counts.{name}", actual, expected)})
        return pd.DataFrame(rows, columns=["scope", "count", "actual", "expected", "status"])

    def ablation_table(self, ablation: Dict[str, CorpusResult], complexity: ComplexityAgent) -> pd.DataFrame:
        """Relations left MAYBE per baseline complexity class, one column per property configuration."""
        base = ablation.get("none") or next(iter(ablation.values()))
        klass: Dict[str, str] = {}
        for r, v in zip(base.unique, base.verdicts):
            if v.status == UNSAT_AFFINE:
                continue
            live = [i for i, c in enumerate(v.clauses) if c.status != UNSAT_AFFINE]
            est = complexity.estimate_relation(r, live)
            klass[r.name] = render(ComplexityExpr.of({est.terms[0][0]: 1})) if est.terms else "0"
        order = sorted(set(klass.values()), key=lambda s: parse_complexity(s).weights())
        rows = []
        for name in order:
            row = {"complexity_class": name, "relations": sum(1 for k in klass.values() if k == name)}
            for cfg, result in ablation.items():
                row[cfg] = sum(1 for v in result.verdicts if klass.get(v.relation) == name and not v.unsat)
            rows.append(row)
        return pd.DataFrame(rows)

    def ablation_checks(self, ablation: Dict[str, CorpusResult]) -> pd.DataFrame:
        entry = self.manifest.get("ablation") or {}
        unsat = {cfg: {v.relation for v in res.verdicts if v.status == UNSAT_WITH_PROPERTIES}
                 for cfg, res in ablation.items()}
        singles = {cfg: len(s) for cfg, s in unsat.items() if cfg.startswith("single:")}
        rows = []

        def add(check: str, ok: bool, detail: str):
            rows.append({"check": check, "status": PASS if ok else FAIL, "detail": detail})

        if "all" in unsat:
            for cfg, s in unsat.items():
                extra = sorted(s - unsat["all"])
                add(f"subset_of_all[{cfg}]", not extra, ", ".join(extra[:5]) or "ok")
            if "all_unsat_properties" in entry:
                add("all_unsat_properties", len(unsat["all"]) == int(entry["all_unsat_properties"]),
                    f"{len(unsat['all'])} (expected {entry['all_unsat_properties']})")
            if entry.get("combined_is_max") and singles:
                add("combined_is_max", len(unsat["all"]) >= max(singles.values()),
                    f"all={len(unsat['all'])}, best single={max(singles.values())}")
        mono = singles.get("single:monotonicity")
        if entry.get("monotonicity_is_max") and mono is not None:
            add("monotonicity_is_max", all(mono >= k for k in singles.values()),
                ", ".join(f"{c}={k}" for c, k in sorted(singles.items())))
        tri = singles.get("single:triangular")
        if "triangular_min" in entry and tri is not None:
            add("triangular_min", tri >= int(entry["triangular_min"]), f"{tri} (at least {entry['triangular_min']})")
        return pd.DataFrame(rows, columns=["check", "status", "detail"])

    def aggregate_and_write(self, result: CorpusResult, reports: Sequence[KernelReport], outdir: Path,
                            ablation: Optional[Dict[str, CorpusResult]] = None,
                            complexity: Optional[ComplexityAgent] = None) -> Dict[str, Any]:
        """
        Writes every artifact and returns their paths plus `mismatches`,
        the number of FAIL cells (FLAGGED cells are not counted).
        """
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        impact, cost, counts = self.impact_table(reports), self.cost_table(reports), self.count_cells(result)
        classes = self.ablation_table(ablation, complexity) if ablation and complexity else pd.DataFrame()
        checks = self.ablation_checks(ablation) if ablation else pd.DataFrame(columns=["check", "status", "detail"])

        claims = [c.to_record() for kr in reports for c in kr.minimized.claims]
        record = {
            "schema_version": SCHEMA_VERSION,
            "config": result.verdicts[0].config if result.verdicts else "all",
            "summary": result.summary(),
            "verdicts": [self._verdict_record(v, reports) for v in result.verdicts],
            "superset_claims": claims,
            "kept": {kr.kernel: list(kr.minimized.kept) for kr in reports},
            "cells": self._cells(impact, cost, counts, checks),
        }
        paths = {
            "verdicts": outdir / "verdicts.json",
            "impact": outdir / "impact.csv",
            "cost": outdir / "cost.csv",
            "ablation": outdir / "ablation.csv",
            "report": outdir / "report.md",
        }
        with open(paths["verdicts"], "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        impact.to_csv(paths["impact"], index=False)
        cost.to_csv(paths["cost"], index=False)
        classes.to_csv(paths["ablation"], index=False)
        with open(paths["report"], "w", encoding="utf-8") as f:
            f.write(self._build_report_md(result, impact, cost, counts, classes, checks))

        mismatches = sum(1 for c in record["cells"] if c["status"] == FAIL)
        flagged = sum(1 for c in record["cells"] if c["status"] == FLAGGED)
        self.logger.info("success", "Report written", {"outdir": str(outdir), "mismatches": mismatches,
                                                       "flagged": flagged})
        out: Dict[str, Any] = {k: str(v) for k, v in paths.items()}
        out.update({"mismatches": mismatches, "flagged": flagged})
        return out

    @staticmethod
    def row_line(row: pd.Series) -> str:
        """`Left Cholesky: 0 4 | 4 4 | 2 2 PASS` style console line for an impact row."""
        cells = " | ".join(f"{row[f'{c}_le_kernel']} {row[f'{c}_total']}" for c in ("remaining", "equality", "superset"))
        states = {row[f"{c}_status"] for c in ("remaining", "equality", "superset")}
        status = FAIL if FAIL in states else FLAGGED if FLAGGED in states else PASS
        return f"{row['title']}: {cells} {status}"

    # ---------- Internal helpers ----------

    def _title(self, kernel: str) -> str:
        return self.manifest.get("kernels", {}).get(kernel, {}).get("title", kernel)

    def _expected(self, kernel: str, table: str, col: str):
        value = (self.manifest.get("kernels", {}).get(kernel, {}).get(table) or {}).get(col)
        if value is None:
            return None
        if table == "cost":
            return parse_complexity(str(value))
        return tuple(int(x) for x in value)

    def _deviation(self, kernel: str, cell: str) -> Optional[Dict[str, Any]]:
        return ((self.manifest.get("kernels", {}).get(kernel, {}) or {}).get("deviations") or {}).get(cell)

    def _cell_status(self, kernel: str, cell: str, actual, expected) -> str:
        if expected is None:
            return ""
        if self._same(actual, expected):
            return PASS
        dev = self._deviation(kernel, cell)
        if dev is not None:
            observed = dev.get("observed")
            if isinstance(actual, ComplexityExpr):
                observed = parse_complexity(str(observed))
            if self._same(actual, observed):
                return FLAGGED
        return FAIL

    @staticmethod
    def _same(actual, expected) -> bool:
        if isinstance(actual, ComplexityExpr):
            return isinstance(expected, ComplexityExpr) and actual.structurally_equal(expected)
        if isinstance(actual, (list, tuple)) and isinstance(expected, (list, tuple)):
            return [int(x) for x in actual] == [int(x) for x in expected]
        return actual == expected

    def _verdict_record(self, v, reports: Sequence[KernelReport]) -> Dict[str, Any]:
        rec = v.to_record()
        for kr in reports:
            for c in kr.costs:
                if c.relation == v.relation:
                    rec["complexity"] = {
                        "baseline": render(c.baseline),
                        "remaining": render(c.remaining) if c.maybe else None,
                        "simplified": render(c.simplified) if c.maybe else None,
                    }
                    rec["runtime_check"] = c.maybe and c.relation in kr.minimized.kept
        return rec

    @staticmethod
    def _cells(impact: pd.DataFrame, cost: pd.DataFrame, counts: pd.DataFrame, checks: pd.DataFrame) -> List[Dict[str, Any]]:
        cells: List[Dict[str, Any]] = []
        for _, row in impact.iterrows():
            for col in ("remaining", "equality", "superset"):
                if row[f"{col}_status"]:
                    cells.append({"table": "impact", "kernel": row["kernel"], "column": col,
                                  "actual": f"{row[f'{col}_le_kernel']} {row[f'{col}_total']}",
                                  "expected": row[f"{col}_expected"], "status": row[f"{col}_status"]})
        for _, row in cost.iterrows():
            for col in ("baseline", "simplified"):
                if row[f"{col}_status"]:
                    cells.append({"table": "cost", "kernel": row["kernel"], "column": col, "actual": row[col],
                                  "expected": row[f"{col}_expected"], "status": row[f"{col}_status"]})
        for _, row in counts.iterrows():
            cells.append({"table": "counts", "kernel": row["scope"], "column": row["count"],
                          "actual": str(row["actual"]), "expected": str(row["expected"]), "status": row["status"]})
        for _, row in checks.iterrows():
            cells.append({"table": "ablation", "kernel": "", "column": row["check"], "actual": row["detail"],
                          "expected": "", "status": row["status"]})
        return cells

    @staticmethod
    def _md_table(df: pd.DataFrame, columns: Optional[Iterable[str]] = None) -> List[str]:
        cols = list(columns or df.columns)
        if df.empty:
            return ["_none_", ""]
        lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for _, row in df.iterrows():
            lines.append("| " + " | ".join(str(row[c]) for c in cols) + " |")
        lines.append("")
        return lines

    def _build_report_md(self, result: CorpusResult, impact: pd.DataFrame, cost: pd.DataFrame,
                         counts: pd.DataFrame, classes: pd.DataFrame, checks: pd.DataFrame) -> str:
        s = result.summary()
        lines: List[str] = ["# Sparse dependence analysis report", ""]
        lines.append("## 1) Corpus summary\n")
        lines.append(f"- Relations: {s['relations']} ({s['unique']} unique, {s['duplicates']} duplicates)")
        lines.append(f"- UNSAT: {s['unsat_affine'] + s['unsat_properties']} "
                     f"({s['unsat_affine']} affine + {s['unsat_properties']} properties)")
        lines.append(f"- MAYBE: {s['maybe']} ({s['capped']} cap-limited)")
        lines.append("")
        lines += self._md_table(counts)

        lines.append("## 2) Runtime checks per kernel\n")
        view = impact.assign(**{
            c: impact[f"{c}_le_kernel"].astype(str) + " / " + impact[f"{c}_total"].astype(str)
            for c in ("remaining", "equality", "superset")
        })
        lines += self._md_table(view, ["title", "remaining", "remaining_expected", "remaining_status",
                                       "equality", "equality_expected", "equality_status",
                                       "superset", "superset_expected", "superset_status"])

        lines.append("## 3) Inspector complexity\n")
        lines += self._md_table(cost, ["title", "baseline", "baseline_status", "simplified", "simplified_status",
                                     "kernel_complexity"])

        lines.append("## 4) Property ablation\n")
        lines += self._md_table(classes)
        lines += self._md_table(checks)

        flagged = []
        for kernel, entry in (self.manifest.get("kernels") or {}).items():
            for cell, dev in (entry.get("deviations") or {}).items():
                flagged.append(f"- **{entry.get('title', kernel)}** `{cell}`: {str(dev.get('rationale', '')).strip()}")
        lines.append("## 5) Known deviations\n")
        lines += flagged or ["_none_"]
        lines.append("")
        return "\n".join(lines)
