# tests/test_aggregator.py
import json
from pathlib import Path

import pandas as pd
import pytest

from src.agents.analysis_agent import AnalysisAgent, PropertyConfig
from src.agents.complexity_agent import ComplexityAgent, parse_complexity
from src.agents.superset_agent import SupersetAgent
from src.model.parser import parse_problem_text
from src.orchestrator.aggregator import FAIL, FLAGGED, PASS, Aggregator, load_manifest
from src.utils.errors import CorpusError

ROOT = Path(__file__).resolve().parents[1]

TOY = """
symbolic n >= 1 : size, nnz >= 1 : nnz;
uf rowptr : 1, col : 1;
assert strict_monotone(rowptr);
kernel "toy";

relation "aff" { [i] -> [ip] : i = ip && i < ip && 0 <= i < n && 0 <= ip < n }
relation "mono" { [i] -> [ip] : i < ip && rowptr(i) = rowptr(ip) && 0 <= i < n && 0 <= ip < n }
relation "same_row" { [i, k] -> [ip, kp] : i <= ip && ip <= i && 0 <= i < n && 0 <= ip < n
    && rowptr(i) <= k < rowptr(i + 1) && rowptr(ip) <= kp < rowptr(ip + 1) }
relation "mono_copy" { [a] -> [b] : rowptr(a) = rowptr(b) && a < b && 0 <= a < n && 0 <= b < n }
"""

MANIFEST = {
    "totals": {"relations": 4},
    "kernels": {
        "toy": {
            "title": "Toy kernel",
            "counts": {"relations": 4, "unique": 3, "maybe": 2},
            "deviations": {
                "cost.baseline": {"observed": "(n^2)", "rationale": "loop bound kept loose"},
                "impact.superset": {"observed": [1, 1], "rationale": "one check survives"},
            },
        }
    },
    "ablation": {"all_unsat_properties": 1},
}


@pytest.fixture(scope="module")
def results():
    agent = AnalysisAgent({"threads": 1})
    problems = [parse_problem_text(TOY)]
    return {name: agent.analyze_corpus(problems, PropertyConfig.parse(name)) for name in ("none", "all")}


@pytest.fixture
def agg():
    return Aggregator(MANIFEST)


def test_load_manifest_reads_the_corpus():
    m = load_manifest(ROOT / "corpus" / "manifest.yaml")
    assert m["kernels"]["fs_csr"]["title"] == "Forward solve CSR"
    assert m["kernels"]["fs_csr"]["file"] == "kernels/fs_csr.deps"


def test_load_manifest_errors(tmp_path):
    bad = tmp_path / "manifest.yaml"
    bad.write_text("kernels:\n  - fs_csr\n", encoding="utf-8")
    with pytest.raises(CorpusError):
        load_manifest(bad)
    with pytest.raises(CorpusError):
        load_manifest(tmp_path / "absent.yaml")


def test_cell_status(agg):
    assert agg._cell_status("toy", "impact.remaining", [1, 1], None) == ""
    assert agg._cell_status("toy", "impact.remaining", [1, 1], (1, 1)) == PASS
    assert agg._cell_status("toy", "impact.remaining", [0, 1], (1, 1)) == FAIL
    assert agg._cell_status("toy", "impact.superset", (1, 1), (0, 1)) == FLAGGED
    assert agg._cell_status("toy", "impact.superset", (0, 2), (0, 1)) == FAIL
    n2, nnz = parse_complexity("(n^2)"), parse_complexity("(nnz)")
    assert agg._cell_status("toy", "cost.baseline", n2, nnz) == FLAGGED
    assert agg._cell_status("toy", "cost.simplified", n2, nnz) == FAIL
    assert agg._cell_status("toy", "cost.simplified", nnz, parse_complexity("(nnz)")) == PASS


def test_row_line():
    row = pd.Series({
        "title": "Left Cholesky",
        "remaining_le_kernel": 0, "remaining_total": 4, "remaining_status": PASS,
        "equality_le_kernel": 4, "equality_total": 4, "equality_status": PASS,
        "superset_le_kernel": 2, "superset_total": 2, "superset_status": FLAGGED,
    })
    assert Aggregator.row_line(row) == "Left Cholesky: 0 4 | 4 4 | 2 2 FLAGGED"
    row["equality_status"] = FAIL
    assert Aggregator.row_line(row).endswith(" FAIL")


def test_kernel_reports_and_counts(agg, results):
    reports = agg.kernel_reports(results["all"], ComplexityAgent(), SupersetAgent())
    assert [kr.kernel for kr in reports] == ["toy"]
    kr = reports[0]
    assert [c.relation for c in kr.maybe] == ["same_row"]
    assert kr.minimized.kept == ["same_row"]
    assert kr.impact()["remaining"][1] == 1

    counts = agg.count_cells(results["all"])
    status = {(row["scope"], row["count"]): row["status"] for _, row in counts.iterrows()}
    assert status[("totals", "relations")] == PASS
    assert status[("toy", "relations")] == PASS
    assert status[("toy", "unique")] == PASS
    assert status[("toy", "maybe")] == FAIL


def test_ablation(agg, results):
    table = agg.ablation_table(results, ComplexityAgent())
    assert table["none"].sum() == 2
    assert table["all"].sum() == 1
    checks = agg.ablation_checks(results)
    assert set(checks["status"]) == {PASS}
    assert "all_unsat_properties" in set(checks["check"])


def test_aggregate_and_write(agg, results, tmp_path):
    complexity = ComplexityAgent()
    reports = agg.kernel_reports(results["all"], complexity, SupersetAgent())
    out = agg.aggregate_and_write(results["all"], reports, tmp_path, results, complexity)
    for key in ("verdicts", "impact", "cost", "ablation", "report"):
        assert Path(out[key]).is_file()
    assert out["mismatches"] >= 1

    record = json.loads(Path(out["verdicts"]).read_text(encoding="utf-8"))
    assert record["schema_version"] == 1
    assert record["kept"] == {"toy": ["same_row"]}
    by_name = {v["relation"]: v for v in record["verdicts"]}
    assert by_name["same_row"]["runtime_check"] is True
    assert by_name["mono"]["runtime_check"] is False
    assert {c["table"] for c in record["cells"]} >= {"counts", "ablation"}

    report = Path(out["report"]).read_text(encoding="utf-8")
    assert report.startswith("# Sparse dependence analysis report")
    assert "loop bound kept loose" in report
