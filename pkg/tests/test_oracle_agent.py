# tests/test_oracle_agent.py
from pathlib import Path

import numpy as np
import pytest

from src.agents.analysis_agent import AnalysisAgent
from src.agents.oracle_agent import PRESETS, OracleAgent
from src.agents.superset_agent import TRIVIAL, SupersetClaim
from src.model.instance import ConcreteInstance, chain, from_pattern
from src.model.parser import parse_constraints, parse_problem, parse_problem_text, parse_relation
from src.utils.errors import InstanceError

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"

TOY = """
symbolic n >= 1 : size, nnz >= 1 : nnz;
uf rowptr : 1, col : 1;
assert strict_monotone(rowptr);
kernel "toy";

relation "aff" { [i] -> [ip] : i = ip && i < ip && 0 <= i < n && 0 <= ip < n }
relation "mono" { [i] -> [ip] : i < ip && rowptr(i) = rowptr(ip) && 0 <= i < n && 0 <= ip < n }
relation "same_row" { [i, k] -> [ip, kp] : i <= ip && ip <= i && 0 <= i < n && 0 <= ip < n
    && rowptr(i) <= k < rowptr(i + 1) && rowptr(ip) <= kp < rowptr(ip + 1) }
"""


@pytest.fixture
def oracle(tmp_path):
    return OracleAgent({"dump_dir": str(tmp_path / "cex"), "trials": 3})


@pytest.mark.parametrize("preset", PRESETS)
def test_sampled_instances_satisfy_their_preset(oracle, preset):
    insts = oracle.sample(preset, 3, seed=5)
    assert len(insts) == 3
    for inst in insts:
        assert 3 <= inst.n <= 8
        assert oracle.validate(inst, oracle.preset_assertions(preset)) == []


def test_sampling_is_reproducible(oracle):
    a = oracle.sample("csr_general", 2, seed=9)
    b = oracle.sample("csr_general", 2, seed=9)
    for x, y in zip(a, b):
        assert x.seed == y.seed
        np.testing.assert_array_equal(x.arrays["col"], y.arrays["col"])


def test_sample_rejects_bad_requests(oracle):
    with pytest.raises(InstanceError):
        oracle.sample("csr_upper", 1)
    with pytest.raises(InstanceError):
        oracle.sample("csr_general", 1, n=100)


def test_validate_reports_missing_arrays(oracle):
    inst = ConcreteInstance({"n": 2}, {"rowptr": np.array([0, 1, 2])})
    bad = oracle.validate(inst, oracle.preset_assertions("csr_general"))
    assert any(b.get("missing_arrays") == ["diagptr"] for b in bad)


def test_enumerate_affine_relation():
    problem = parse_problem(FIXTURES / "self_test" / "pairs.deps")
    st_next = next(r for r in problem.relations if r.name == "st_next")
    en = OracleAgent().enumerate(st_next, from_pattern(chain(4)))
    assert en.solutions == [[(0, 1), (1, 2), (2, 3)]]
    assert en.pairs == {(0, 1), (1, 2), (2, 3)}
    assert not en.fallback


def test_enumerate_through_index_arrays():
    inst = ConcreteInstance.load(FIXTURES / "fs_small.json")
    r = parse_relation("{ [i] -> [ip, kp] : i = col(kp) && i < ip && 0 <= i < n && 0 <= ip < n "
                       "&& rowptr(ip) <= kp < rowptr(ip + 1) }")
    en = OracleAgent().enumerate(r, inst)
    assert en.pairs == {(0, 1), (1, 3), (0, 4), (3, 4)}
    assert en.clause_points(0)[0] == {"i": 0, "ip": 1, "kp": 1}


def test_enumerate_needs_every_array():
    r = parse_relation("{ [i] -> [ip] : i < ip && perm(i) = ip }")
    with pytest.raises(InstanceError):
        OracleAgent().enumerate(r, from_pattern(chain(3)))


def test_correct_verdicts_survive(oracle):
    result = AnalysisAgent({"threads": 1}).analyze_corpus([parse_problem_text(TOY)])
    report = oracle.falsify(result)
    assert report.ok
    assert report.checked["unsat"] == 6
    assert report.checked["equality"] >= 3
    assert report.skipped == 0


def test_injected_wrong_claims_are_caught(oracle, tmp_path):
    result = AnalysisAgent({"threads": 1}).analyze_corpus([parse_problem(FIXTURES / "self_test" / "pairs.deps")])
    rels = {r.name: r for r in result.unique}
    verdict = next(v for v in result.verdicts if v.relation == "st_gap")
    wrong = tuple(parse_constraints("ip = i + 1", rels["st_gap"]))
    for i in verdict.maybe_clauses:
        verdict.clauses[i].equalities = tuple(verdict.clauses[i].equalities) + wrong
    claims = [SupersetClaim("st_next", "st_wide", TRIVIAL), SupersetClaim("st_wide", "st_next", TRIVIAL)]

    report = oracle.falsify(result, claims, trials=2)
    kinds = {(c.kind, c.relation) for c in report.counterexamples}
    assert ("equality", "st_gap") in kinds
    assert ("superset", "st_wide") in kinds
    assert ("superset", "st_next") not in kinds
    assert not report.ok
    dumped = ConcreteInstance.load(report.counterexamples[0].dump_path)
    assert dumped.preset == "csr_lower_triangular"
    assert report.to_record()["counterexamples"][0]["dump"].startswith(str(tmp_path))
