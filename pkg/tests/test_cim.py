import pytest

from ci_tests import CiDecision, CiTest, OracleCiTest
from cim import (
    ARROW, CIRCLE, TAIL, OrientationConflictError, PriorKnowledge, SepMap, Sep2Map, WaveAssignment,
    apply_meek_rules, cim_skeleton, find_sep2, oracle_ground_truth, orient_tails, orient_waves,
    pc_stable_baseline, run_cim, run_cim_steps, transitive_tails, wave_adjacency,
)
from graph_core import InputError, MixedGraph, make_vertices


class StubCiTest(CiTest):
    """Independent exactly for the listed (i, j, w) facts"""

    name = "stub"

    def __init__(self, variables, facts):
        super().__init__(variables)
        self.facts = {(frozenset((i, j)), frozenset(w)) for i, j, w in facts}

    def _decide(self, query):
        independent = (frozenset((query.i, query.j)), frozenset(query.w)) in self.facts
        return CiDecision(independent, 0.0, 1.0 if independent else 0.0)


def _graph(labels, waves, edges):
    """edges: (u, v, mark_at_u, mark_at_v)"""
    g = MixedGraph(make_vertices(labels, waves=waves))
    for u, v, mu, mv in edges:
        g.add_edge(u, v, mu, mv)
    return g


class TestWaveAssignment:
    def test_validation(self):
        with pytest.raises(InputError):
            WaveAssignment({"A": 0})
        with pytest.raises(InputError):
            WaveAssignment({"A": 1.5})
        with pytest.raises(InputError):
            WaveAssignment({"A": True})
        waves = WaveAssignment({"A": 1, "B": 2.0})
        assert waves["B"] == 2 and waves.n_waves == 2

    def test_require_covers(self):
        waves = WaveAssignment({"A": 1, "B": 1})
        with pytest.raises(InputError):
            waves.require_covers(["A", "B"])
        with pytest.raises(InputError):
            WaveAssignment({"A": 1, "B": 2}).require_covers(["A", "C"])

    def test_merge_renumbers(self):
        waves = WaveAssignment({"A": 1, "B": 2, "C": 3, "D": 4})
        merged = waves.merged([2, 3])
        assert merged.to_dict() == {"A": 1, "B": 2, "C": 2, "D": 3}
        assert waves.merged([]).to_dict() == waves.to_dict()


def test_sep_map_keeps_first_set():
    sep = SepMap()
    sep.record("A", "B", ("C",))
    sep.record("B", "A", ("D",))
    assert sep.get("B", "A") == ("C",)
    assert sep.get("A", "C") is None
    assert list(sep.items()) == [(("A", "B"), ("C",))]


def test_sep2_map_defaults_to_empty():
    sep2 = Sep2Map()
    sep2.record("A", "B", "C", ())
    assert sep2.has("A", "B", "C") and not sep2.has("C", "B", "A")
    assert sep2.get("C", "B", "A") == ()


def test_wave_adjacency():
    g = MixedGraph.complete(make_vertices(["A", "B", "C", "D"], waves={"A": 1, "B": 2, "C": 3, "D": 1}))
    waves = {"A": 1, "B": 2, "C": 3, "D": 1}
    assert wave_adjacency(g, waves, "A", 1, 2) == ["B", "D"]
    assert wave_adjacency(g, waves, "C", 3, 1) == ["A", "B", "D"]
    assert wave_adjacency(g, waves, "A", 1, 1) == ["D"]


class TestSkeleton:
    def test_oracle_skeleton_of_collider_example(self, false_collider_mixture):
        est, sep = cim_skeleton(OracleCiTest(false_collider_mixture), false_collider_mixture.waves())
        assert est.edges() == [("O1", "O2"), ("O2", "O3")]
        assert sep.get("O1", "O3") == ()
        assert all(mark == CIRCLE for mark in est.endpoints().values())

    def test_later_waves_never_condition_earlier_pairs(self):
        waves = {"A": 1, "B": 1, "F": 2}
        ci = StubCiTest(["A", "B", "F"], [("A", "B", ("F",))])
        est, sep = cim_skeleton(ci, waves)
        assert est.is_adjacent("A", "B")
        assert sep.get("A", "B") is None

    def test_cross_wave_pairs_condition_on_both_waves(self):
        waves = {"A": 1, "F": 2, "G": 2}
        ci = StubCiTest(["A", "F", "G"], [("A", "G", ("F",))])
        est, sep = cim_skeleton(ci, waves)
        assert not est.is_adjacent("A", "G")
        assert sep.get("G", "A") == ("F",)

    def test_same_wave_pairs_condition_within_their_wave(self):
        waves = {"A": 1, "F": 2, "G": 2}
        ci = StubCiTest(["A", "F", "G"], [("F", "G", ("A",))])
        est, _ = cim_skeleton(ci, waves)
        assert est.is_adjacent("F", "G")

    def test_max_cond_size_bounds_levels(self):
        waves = {"A": 1, "B": 1, "C": 1, "D": 2}
        ci = StubCiTest(["A", "B", "C", "D"], [("A", "D", ("B", "C"))])
        est, _ = cim_skeleton(ci, waves, max_cond_size=1)
        assert est.is_adjacent("A", "D")
        est, sep = cim_skeleton(ci, waves, max_cond_size=None)
        assert not est.is_adjacent("A", "D")
        assert sep.get("A", "D") == ("B", "C")

    def test_log_and_threads_are_deterministic(self, feedback_cycle_mixture):
        log1, log2 = [], []
        est1, _ = cim_skeleton(OracleCiTest(feedback_cycle_mixture), feedback_cycle_mixture.waves(), log=log1)
        est2, _ = cim_skeleton(OracleCiTest(feedback_cycle_mixture), feedback_cycle_mixture.waves(), n_jobs=2, log=log2)
        assert est1 == est2
        assert log1 == log2
        assert {"step", "i", "j", "w", "independent", "statistic", "p_value", "degenerate"} == set(log1[0])

    def test_needs_two_waves(self):
        ci = StubCiTest(["A", "B"], [])
        with pytest.raises(InputError):
            cim_skeleton(ci, {"A": 1, "B": 1})
        with pytest.raises(InputError):
            cim_skeleton(ci, {"A": 1})


class TestOrientWaves:
    def setup_method(self):
        self.waves = {"A": 1, "B": 2, "C": 2}

    def test_arrow_at_later_wave(self):
        est = MixedGraph.complete(make_vertices(["A", "B", "C"], waves=self.waves))
        orient_waves(est, self.waves)
        assert est.mark_at("B", "A") == ARROW and est.mark_at("A", "B") == CIRCLE
        assert est.mark_at("C", "B") == CIRCLE

    def test_prior_knowledge_adds_arrowheads(self):
        est = MixedGraph.complete(make_vertices(["A", "B", "C"], waves=self.waves))
        orient_waves(est, self.waves, PriorKnowledge.from_pairs([("C", "B")]))
        assert est.mark_at("C", "B") == ARROW
        assert est.mark_at("B", "C") == CIRCLE

    def test_unknown_prior_label(self):
        est = MixedGraph.complete(make_vertices(["A", "B"], waves=self.waves))
        with pytest.raises(InputError):
            orient_waves(est, self.waves, PriorKnowledge.from_pairs([("Z", "A")]))

    def test_conflict_with_existing_tail(self):
        est = _graph(["A", "B"], self.waves, [("A", "B", CIRCLE, TAIL)])
        with pytest.raises(OrientationConflictError):
            orient_waves(est, self.waves)


class TestTails:
    waves = {"X1": 1, "X2": 1, "X3": 2, "X4": 2}
    labels = ["X1", "X2", "X3", "X4"]

    def test_tail_from_recorded_separating_set(self):
        ci = StubCiTest(self.labels, [("X1", "X4", ("X3",))])
        result = run_cim_steps(ci, self.waves)
        est = result.graph
        assert not est.is_adjacent("X1", "X4")
        assert result.sep.get("X1", "X4") == ("X3",)
        assert len(result.sep2) == 0
        assert est.mark_at("X3", "X4") == TAIL
        assert est.mark_at("X4", "X3") == CIRCLE
        assert est.mark_at("X3", "X1") == ARROW

    def test_tail_from_minimal_set_containing_middle_vertex(self):
        ci = StubCiTest(self.labels, [("X1", "X4", ("X2",)), ("X1", "X4", ("X3",))])
        result = run_cim_steps(ci, self.waves)
        assert result.sep.get("X1", "X4") == ("X2",)
        assert result.sep2.get("X1", "X3", "X4") == ("X3",)
        assert result.graph.mark_at("X3", "X4") == TAIL

    def test_non_minimal_set_gives_no_tail(self):
        ci = StubCiTest(self.labels, [("X1", "X4", ("X2",)), ("X1", "X4", ("X2", "X3"))])
        result = run_cim_steps(ci, self.waves)
        assert result.sep2.has("X1", "X3", "X4")
        assert result.sep2.get("X1", "X3", "X4") == ()
        assert result.graph.mark_at("X3", "X4") == CIRCLE

    def test_find_sep2_skips_when_sep_contains_middle(self):
        est = _graph(self.labels, self.waves, [("X1", "X3", CIRCLE, ARROW), ("X3", "X4", CIRCLE, CIRCLE)])
        sep = SepMap()
        sep.record("X1", "X4", ("X3",))
        sep2 = find_sep2(est, StubCiTest(self.labels, []), self.waves, sep)
        assert len(sep2) == 0

    def test_existing_arrow_is_kept(self):
        est = _graph(self.labels, self.waves, [("X1", "X3", CIRCLE, ARROW), ("X3", "X4", ARROW, CIRCLE)])
        sep = SepMap()
        sep.record("X1", "X4", ("X3",))
        orient_tails(est, sep, Sep2Map())
        assert est.mark_at("X3", "X4") == ARROW

    def test_transitive_tails(self):
        waves = {"A": 1, "B": 1, "C": 1, "D": 2}
        est = _graph(["A", "B", "C", "D"], waves, [
            ("A", "B", TAIL, CIRCLE), ("B", "C", TAIL, CIRCLE), ("C", "D", TAIL, ARROW),
            ("A", "C", CIRCLE, CIRCLE), ("A", "D", CIRCLE, ARROW),
        ])
        transitive_tails(est)
        assert est.mark_at("A", "C") == TAIL
        assert est.mark_at("A", "D") == TAIL
        assert est.mark_at("C", "A") == CIRCLE


class TestOracleRuns:
    def test_cycle_example_has_no_contradictions(self, feedback_cycle_mixture):
        truth = oracle_ground_truth(feedback_cycle_mixture)
        est = run_cim(OracleCiTest(feedback_cycle_mixture), feedback_cycle_mixture.waves())
        assert est.skeleton() == truth.graph.skeleton()
        assert truth.contradictions(est) == []
        assert est.mark_at("X3", "X2") == ARROW

    def test_collider_example(self, false_collider_mixture):
        truth = oracle_ground_truth(false_collider_mixture)
        result = run_cim_steps(OracleCiTest(false_collider_mixture), false_collider_mixture.waves())
        assert result.sep2.get("O1", "O2", "O3") == ()
        est = result.graph
        assert truth.contradictions(est) == []
        assert est.mark_at("O2", "O1") == ARROW
        assert est.mark_at("O2", "O3") == CIRCLE

    def test_pc_baseline_invents_collider(self, false_collider_mixture):
        truth = oracle_ground_truth(false_collider_mixture)
        est = pc_stable_baseline(OracleCiTest(false_collider_mixture), false_collider_mixture.waves())
        assert est.mark_at("O2", "O3") == ARROW and est.mark_at("O3", "O2") == TAIL
        assert ("O2", "O3", ARROW) in truth.contradictions(est)

    def test_run_cim_is_deterministic(self, feedback_cycle_mixture):
        a = run_cim(OracleCiTest(feedback_cycle_mixture), feedback_cycle_mixture.waves())
        b = run_cim(OracleCiTest(feedback_cycle_mixture), WaveAssignment(feedback_cycle_mixture.waves()), n_jobs=2)
        assert a == b


class TestMeekRules:
    def test_rule1(self):
        est = _graph(["A", "B", "C"], {}, [("A", "B", TAIL, ARROW), ("B", "C", TAIL, TAIL)])
        apply_meek_rules(est)
        assert est.mark_at("C", "B") == ARROW and est.mark_at("B", "C") == TAIL

    def test_rule2(self):
        est = _graph(["A", "B", "C"], {}, [
            ("A", "B", TAIL, ARROW), ("B", "C", TAIL, ARROW), ("A", "C", TAIL, TAIL),
        ])
        apply_meek_rules(est)
        assert est.mark_at("C", "A") == ARROW

    def test_rule3(self):
        est = _graph(["A", "B", "C", "D"], {}, [
            ("A", "C", TAIL, TAIL), ("A", "D", TAIL, TAIL), ("A", "B", TAIL, TAIL),
            ("C", "B", TAIL, ARROW), ("D", "B", TAIL, ARROW),
        ])
        apply_meek_rules(est)
        assert est.mark_at("B", "A") == ARROW and est.mark_at("A", "B") == TAIL

    def test_rule4(self):
        est = _graph(["A", "B", "C", "D"], {}, [
            ("A", "B", TAIL, TAIL), ("A", "C", TAIL, TAIL), ("A", "D", TAIL, TAIL),
            ("D", "C", TAIL, ARROW), ("C", "B", TAIL, ARROW),
        ])
        apply_meek_rules(est)
        assert est.mark_at("B", "A") == ARROW

    def test_shielded_triple_stays_undirected(self):
        est = _graph(["A", "B", "C"], {}, [
            ("A", "B", TAIL, ARROW), ("B", "C", TAIL, TAIL), ("A", "C", TAIL, TAIL),
        ])
        apply_meek_rules(est)
        assert est.mark_at("C", "B") == TAIL
