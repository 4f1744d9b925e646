# tests/test_cli.py
import json
from pathlib import Path

import pytest

import run

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

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


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SPARSEDEP_LOG_DIR", str(tmp_path / "logs"))
    (tmp_path / "problems").mkdir()
    (tmp_path / "problems" / "toy.deps").write_text(TOY, encoding="utf-8")
    return tmp_path


def test_check_prints_summary(workdir, capsys):
    code = run.main(["check", str(workdir / "problems" / "toy.deps")])
    out = capsys.readouterr().out
    assert code == run.EXIT_OK
    assert "4 relations (3 unique): unsat=2 (1 affine + 1 properties), maybe=1" in out
    assert "same_row" in out
    logs = list((workdir / "logs").glob("run_*.json"))
    assert len(logs) == 1
    payload = json.loads(logs[0].read_text())
    assert payload["command"] == "check" and payload["exit_code"] == 0
    assert payload["summary"]["unique"] == 3


def test_check_json_records(workdir, capsys):
    assert run.main(["check", str(workdir / "problems"), "--json"]) == run.EXIT_OK
    out = capsys.readouterr().out
    assert '"status": "UNSAT_AFFINE"' in out
    assert '"status": "UNSAT_WITH_PROPERTIES"' in out


def test_empty_file_has_no_relations(workdir, capsys):
    empty = workdir / "empty.deps"
    empty.write_text("", encoding="utf-8")
    assert run.main(["check", str(empty)]) == run.EXIT_OK
    assert "0 relations" in capsys.readouterr().out


def test_parse_errors_exit_2(workdir, capsys):
    bad = workdir / "bad.deps"
    bad.write_text('relation "x" { [i] -> [ip] : i * ip < 3 }\n', encoding="utf-8")
    assert run.main(["check", str(bad)]) == run.EXIT_PARSE
    assert "error:" in capsys.readouterr().err


def test_unknown_property_config_exits_2(workdir):
    assert run.main(["check", str(workdir / "problems"), "--properties", "bogus"]) == run.EXIT_PARSE


def test_report_needs_a_manifest(workdir):
    assert run.main(["report", str(workdir / "problems")]) == run.EXIT_PARSE


def test_simplify(workdir, capsys):
    assert run.main(["simplify", str(workdir / "problems")]) == run.EXIT_OK
    out = capsys.readouterr().out
    assert "same_row:" in out
    assert "1 maybe relations" in out


def test_superset_lists_claims_and_kept_checks(workdir, capsys):
    code = run.main(["superset", str(ROOT / "corpus" / "kernels" / "left_cholesky.deps")])
    out = capsys.readouterr().out
    assert code == run.EXIT_OK
    assert "lc_m1 ⊇ lc_m2  [OVERLAP]" in out
    assert "lc_m3 ⊇ lc_m4  [OVERLAP]" in out
    assert "left_cholesky: 4 maybe -> 2 checks: lc_m1, lc_m3" in out


def test_oracle_self_test_finds_counterexamples(workdir, capsys):
    code = run.main(["oracle", str(FIXTURES / "self_test" / "pairs.deps"), "--trials", "2", "--seed", "3",
                     "--claims", str(FIXTURES / "self_test" / "claims.json")])
    out = capsys.readouterr().out
    assert code == run.EXIT_COUNTEREXAMPLE
    assert "counterexample [equality] st_gap" in out
    assert "counterexample [superset] st_wide" in out


def test_inspect_writes_wavefronts(workdir, capsys):
    outdir = workdir / "out"
    code = run.main(["inspect", str(ROOT / "corpus" / "kernels" / "fs_csr.deps"),
                     "--matrix", str(FIXTURES / "fs_small"), "--outdir", str(outdir), "--dot"])
    out = capsys.readouterr().out
    assert code == run.EXIT_OK
    assert "wavefront 0: 0 2" in out
    assert "digraph dependences {" in out
    levels = json.loads((outdir / "wavefronts.json").read_text())["levels"]
    assert levels == [[0, 2], [1], [3], [4]]


def test_summary_line():
    s = {"relations": 5, "unique": 4, "unsat_affine": 1, "unsat_properties": 2, "maybe": 1}
    assert run.summary_line(s) == "5 relations (4 unique): unsat=3 (1 affine + 2 properties), maybe=1"
    assert run.summary_line({"relations": 0}) == "0 relations"


def test_corpus_report_matches_the_manifest(workdir, capsys):
    outdir = workdir / "report"
    code = run.main(["report", str(ROOT / "corpus"), "--config", str(ROOT / "config" / "config.yaml"),
                     "--outdir", str(outdir)])
    out = capsys.readouterr().out
    assert "124 relations (83 unique): unsat=57 (12 affine + 45 properties), maybe=26" in out
    assert "Left Cholesky: 0 4 | 4 4 | 2 2 PASS" in out
    assert "Incomplete Cholesky: 0 9 | 9 9 | 5 5 FLAGGED" in out
    assert code == run.EXIT_OK

    cells = json.loads((outdir / "verdicts.json").read_text(encoding="utf-8"))["cells"]
    assert not [c for c in cells if c["status"] == "FAIL"]
    flagged = {(c["kernel"], c["column"]) for c in cells if c["status"] == "FLAGGED"}
    assert flagged == {("ilu0", "baseline"), ("ic0", "remaining"), ("ic0", "equality"), ("ic0", "superset"),
                       ("ic0", "baseline"), ("ic0", "simplified")}
    ablation = [c for c in cells if c["table"] == "ablation"]
    assert {c["column"] for c in ablation} >= {"subset_of_all[none]", "subset_of_all[single:triangular]"}
    assert {c["status"] for c in ablation} == {"PASS"}
