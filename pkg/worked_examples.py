"""
Worked mixture examples run end-to-end in oracle mode
Each fixture compares computed graphs with the expected files in the fixtures directory
"""
import logging
import os
from dataclasses import dataclass, field
from typing import List

from ci_tests import OracleCiTest
from cim import WaveAssignment, oracle_ground_truth, pc_stable_baseline, run_cim
from config import FIXTURES_DIR
from graph_core import EndpointMark, MixedGraph, d_separated_paths
from graph_io import LEFT_MARKS, RIGHT_MARKS, read_ground_truth, read_mixed_graph, read_mixture
from mixture import build_fused_graph, grouped_d_separated

logger = logging.getLogger(__name__)


class FixtureFailure(AssertionError):
    """A worked example did not reproduce"""


@dataclass
class FixtureResult:
    name: str
    passed: bool = True
    messages: List[str] = field(default_factory=list)

    def check(self, condition: bool, message: str):
        if not condition:
            self.passed = False
            self.messages.append(message)


def _edge_text(g: MixedGraph, u: str, v: str) -> str:
    return f"{u} {LEFT_MARKS[g.mark_at(u, v)]}-{RIGHT_MARKS[g.mark_at(v, u)]} {v}"


def graph_diff(expected: MixedGraph, actual: MixedGraph) -> List[str]:
    """Edge-level differences as '- expected' / '+ actual' lines"""
    lines = []
    if expected.labels != actual.labels:
        lines.append(f"- vertices {expected.labels}")
        lines.append(f"+ vertices {actual.labels}")
        return lines
    for u, v in sorted(set(expected.edges()) | set(actual.edges()), key=lambda e: (expected.labels.index(e[0]),
                                                                                   expected.labels.index(e[1]))):
        want = _edge_text(expected, u, v) if expected.is_adjacent(u, v) else None
        got = _edge_text(actual, u, v) if actual.is_adjacent(u, v) else None
        if want != got:
            if want:
                lines.append(f"- {want}")
            if got:
                lines.append(f"+ {got}")
    return lines


def _fixture_path(fixtures_dir: str, name: str) -> str:
    return os.path.join(fixtures_dir, name)


def mixture_versus_fused_fixture(fixtures_dir: str) -> FixtureResult:
    """Two DAGs whose mixture separates X1 and X3 although the fused graph does not"""
    result = FixtureResult("mixture_vs_fused")
    m = read_mixture(_fixture_path(fixtures_dir, "pooled_separation_mixture.json"))
    result.check(grouped_d_separated(m, {"X1"}, {"X3"}, set()),
                 "X1 and X3 should be separated in the mixture graph")
    result.check(not d_separated_paths(build_fused_graph(m), {"X1"}, {"X3"}, set()),
                 "X1 and X3 should be connected in the fused graph")
    return result


def cycle_recovery_fixture(fixtures_dir: str) -> FixtureResult:
    """Feedback cycle X1 -> X2 -> X4 -> X1 split across two DAGs, X3 in the second wave"""
    result = FixtureResult("cycle_recovery")
    m = read_mixture(_fixture_path(fixtures_dir, "feedback_cycle_mixture.json"))
    truth = oracle_ground_truth(m)
    expected_truth = read_ground_truth(_fixture_path(fixtures_dir, "feedback_cycle_truth.txt"))
    diff = graph_diff(expected_truth.graph, truth.graph)
    result.check(not diff, "ground truth differs:\n" + "\n".join(diff))

    est = run_cim(OracleCiTest(m), WaveAssignment(m.waves()))
    result.check(est.skeleton() == truth.graph.skeleton(), "CIM skeleton differs from the truth skeleton")
    contradictions = truth.contradictions(est)
    result.check(not contradictions, f"CIM contradicts the truth at {contradictions}")
    expected = read_mixed_graph(_fixture_path(fixtures_dir, "feedback_cycle_cim.txt"))
    diff = graph_diff(expected, est)
    result.check(not diff, "CIM output differs:\n" + "\n".join(diff))
    return result


def collider_fixture(fixtures_dir: str) -> FixtureResult:
    """O1 and O3 independent only because the O2–O3 direction switches; PC invents a collider at O2"""
    result = FixtureResult("false_collider")
    m = read_mixture(_fixture_path(fixtures_dir, "false_collider_mixture.json"))
    waves = WaveAssignment(m.waves())
    truth = oracle_ground_truth(m)
    expected_truth = read_ground_truth(_fixture_path(fixtures_dir, "false_collider_truth.txt"))
    diff = graph_diff(expected_truth.graph, truth.graph)
    result.check(not diff, "ground truth differs:\n" + "\n".join(diff))
    result.check(grouped_d_separated(m, {"O1"}, {"O3"}, set()), "O1 and O3 should be separated")

    est = run_cim(OracleCiTest(m), waves)
    contradictions = truth.contradictions(est)
    result.check(not contradictions, f"CIM contradicts the truth at {contradictions}")
    result.check(est.is_adjacent("O2", "O3") and est.mark_at("O2", "O3") != EndpointMark.ARROW,
                 "CIM oriented the collider O1 *-> O2 <-* O3")
    diff = graph_diff(read_mixed_graph(_fixture_path(fixtures_dir, "false_collider_cim.txt")), est)
    result.check(not diff, "CIM output differs:\n" + "\n".join(diff))

    baseline = pc_stable_baseline(OracleCiTest(m), waves)
    diff = graph_diff(read_mixed_graph(_fixture_path(fixtures_dir, "false_collider_pc.txt")), baseline)
    result.check(not diff, "PC output differs:\n" + "\n".join(diff))
    result.check(bool(truth.contradictions(baseline)), "PC should contradict the truth on this example")
    return result


FIXTURES = (mixture_versus_fused_fixture, cycle_recovery_fixture, collider_fixture)


def worked_example_suite(fixtures_dir: str = FIXTURES_DIR) -> List[FixtureResult]:
    results = []
    for fixture in FIXTURES:
        result = fixture(fixtures_dir)
        if not result.passed:
            logger.error("Fixture %s failed: %s", result.name, "; ".join(result.messages))
        results.append(result)
    return results


def assert_fixtures_pass(results: List[FixtureResult]):
    failed = [r for r in results if not r.passed]
    if failed:
        raise FixtureFailure("\n".join(f"{r.name}:\n  " + "\n  ".join(r.messages) for r in failed))
