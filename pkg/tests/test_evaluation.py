import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from cim import oracle_ground_truth
from config import METRIC_MIN_WAVE
from data_generator import SynthConfig, generate_instance
from evaluation import (
    ComparisonReport, EndpointConfusion, Evaluator, MetricsReport, ReplicateReport, overall_distance, relation_truth,
    run_algorithm, score_endpoints, skeleton_f1, summarize, synthetic_benchmark,
)
from graph_core import EndpointMark, InputError, MixedGraph, make_vertices
from graph_io import read_ground_truth, read_mixed_graph
from mixture import GroundTruthMixed, random_mixture

SMALL = SynthConfig(p=6, n_waves=2, q_range=(2, 3), n_samples=300, n_latents_range=(0, 1),
                    n_selection_range=(0, 1), seed=11)


@pytest.fixture
def false_collider_truth(fixtures_dir):
    return read_ground_truth(os.path.join(fixtures_dir, "false_collider_truth.txt"))


@pytest.fixture
def false_collider_outputs(fixtures_dir):
    return {name: read_mixed_graph(os.path.join(fixtures_dir, f"false_collider_{name}.txt")) for name in ("cim", "pc")}


class TestMetrics:
    def test_overall_distance(self):
        assert overall_distance(1.0, 0.0) == 0.0
        assert overall_distance(0.0, 1.0) == pytest.approx(math.sqrt(2))
        assert overall_distance(0.5, 0.5) == pytest.approx(math.sqrt(0.5))
        with pytest.raises(InputError):
            overall_distance(1.2, 0.0)

    def test_confusion_rates(self):
        c = EndpointConfusion(tp=3, fp=1, p=4, n=5)
        assert c.sensitivity == 0.75 and c.fallout == 0.2
        assert EndpointConfusion().sensitivity == 0.0 and EndpointConfusion().overall == 1.0
        with pytest.raises(InputError):
            EndpointConfusion(tp=2, p=1)

    def test_summarize(self):
        s = summarize([1.0, 2.0, 3.0])
        assert s["mean"] == 2.0
        assert s["ci_high"] - s["mean"] == pytest.approx(1.96 / math.sqrt(3))
        assert summarize([0.4]) == {"mean": 0.4, "ci_low": 0.4, "ci_high": 0.4}
        assert math.isnan(summarize([])["mean"])


class TestScoreEndpoints:
    def test_circles_abstain(self, false_collider_truth, false_collider_outputs):
        c = score_endpoints(false_collider_outputs["cim"], false_collider_truth)
        assert (c.tp, c.fp, c.p, c.n) == (0, 0, 2, 1)
        assert c.overall == 1.0

    def test_tails_are_scored(self, false_collider_truth, false_collider_outputs):
        c = score_endpoints(false_collider_outputs["pc"], false_collider_truth)
        assert (c.tp, c.fp, c.p, c.n) == (1, 0, 2, 1)

    def test_first_wave_counts_without_mask(self, false_collider_truth, false_collider_outputs):
        c = score_endpoints(false_collider_outputs["pc"], false_collider_truth, min_wave=None)
        assert (c.tp, c.fp, c.p, c.n) == (2, 0, 3, 1)

    def test_edges_outside_truth_skeleton_are_ignored(self, false_collider_truth, false_collider_outputs):
        est = false_collider_outputs["pc"].copy()
        est.add_edge("O1", "O3", EndpointMark.TAIL, EndpointMark.TAIL)
        assert score_endpoints(est, false_collider_truth) == score_endpoints(false_collider_outputs["pc"], false_collider_truth)

    def test_variables_must_match(self, false_collider_truth):
        est = MixedGraph(make_vertices(["O1", "O2"]))
        with pytest.raises(InputError):
            score_endpoints(est, false_collider_truth)


def test_skeleton_f1(false_collider_truth):
    est = MixedGraph(make_vertices(["O1", "O2", "O3"]))
    est.add_edge("O1", "O2", EndpointMark.CIRCLE, EndpointMark.CIRCLE)
    est.add_edge("O1", "O3", EndpointMark.CIRCLE, EndpointMark.CIRCLE)
    scores = skeleton_f1(est, false_collider_truth)
    assert scores == {"precision": 0.5, "recall": 0.5, "f1": 0.5}


class TestRelationTruth:
    WAVES = {"a": 1, "b": 1, "c": 2}

    def test_tails_at_causes_and_arrows_forward_in_time(self):
        truth = relation_truth({"relations": [{"cause": "a", "effect": "b"}]}, self.WAVES)
        assert truth.truth_at("a", "b").mark == EndpointMark.TAIL
        assert truth.truth_at("b", "a") is None
        assert truth.truth_at("c", "a").mark == EndpointMark.ARROW
        assert truth.truth_at("c", "b").mark == EndpointMark.ARROW
        assert truth.truth_at("a", "c") is None
        assert not truth.skeleton_defined
        assert skeleton_f1(truth.graph, truth) is None

    def test_reads_files(self, tmp_path):
        path = tmp_path / "relations.json"
        path.write_text('{"relations": [{"cause": "b", "effect": "c"}]}')
        truth = relation_truth(str(path), self.WAVES)
        assert truth.truth_at("b", "c").mark == EndpointMark.TAIL
        assert truth.truth_at("c", "b").mark == EndpointMark.ARROW

    @pytest.mark.parametrize("doc", [
        {"relations": [{"cause": "c", "effect": "a"}]},
        {"relations": [{"cause": "a", "effect": "z"}]},
        {"links": []},
    ])
    def test_rejects_bad_documents(self, doc):
        with pytest.raises(InputError):
            relation_truth(doc, self.WAVES)


class TestEvaluator:
    def test_oracle_bootstrap(self, false_collider_truth, false_collider_mixture):
        evaluator = Evaluator(false_collider_truth, ci_test="oracle", n_jobs=1, mixture=false_collider_mixture)
        results = evaluator.bootstrap_compare(None, false_collider_mixture.waves(), ["cim", "pc"], B=3, seed=0)
        summary = results.summary
        assert summary["cim"]["overall"]["mean"] == 1.0
        assert summary["pc"]["sensitivity"]["mean"] == 0.5
        assert summary["cim"]["n_replicates"] == 3 and summary["pc"]["n_excluded"] == 0
        assert len(results.replicates) == 6
        assert all(isinstance(r.metrics, MetricsReport) for r in results.replicates)

    def test_bootstrap_is_seeded(self):
        _, dataset, truth = generate_instance(SMALL)
        evaluator = Evaluator(truth, n_jobs=1)
        a = evaluator.bootstrap_compare(dataset.data, dataset.waves, ["cim"], B=2, seed=4)
        b = evaluator.bootstrap_compare(dataset.data, dataset.waves, ["cim"], B=2, seed=4)
        assert a.replicates == b.replicates
        assert a.metadata["n"] == len(dataset.data)

    def test_bootstrap_validation(self, false_collider_truth, false_collider_mixture):
        evaluator = Evaluator(false_collider_truth, ci_test="oracle", n_jobs=1, mixture=false_collider_mixture)
        with pytest.raises(InputError):
            evaluator.bootstrap_compare(None, false_collider_mixture.waves(), ["cim"], B=0, seed=0)
        with pytest.raises(InputError):
            evaluator.bootstrap_compare(None, false_collider_mixture.waves(), ["fci"], B=1, seed=0)
        with pytest.raises(InputError):
            run_algorithm("fci", None, false_collider_mixture.waves(), "oracle", mixture=false_collider_mixture)

    def test_evaluate_graph_and_reports(self, false_collider_truth, false_collider_outputs, tmp_path, capsys):
        evaluator = Evaluator(false_collider_truth, reports_dir=str(tmp_path / "reports"))
        report = evaluator.evaluate_graph(false_collider_outputs["pc"], "pc", {"source": "fixture"})
        row = report.to_dict()
        assert row["sensitivity"] == 0.5
        assert row["skeleton"]["f1"] == 1.0
        assert row["counts"] == {"tp": 1, "fp": 0, "p": 2, "n": 1}

        json_path = evaluator.save_report(report)
        with open(json_path) as f:
            assert json.load(f)["counts"] == row["counts"]
        assert "✓ Evaluation report saved to" in capsys.readouterr().out

    def test_comparison_report_serializes(self, tmp_path):
        ok = ReplicateReport("pc", 0, MetricsReport("pc", EndpointConfusion(tp=1, fp=0, p=2, n=1)))
        failed = ReplicateReport("pc", 1, error="singular correlation matrix")
        report = ComparisonReport.from_replicates([ok, failed], ["pc"], {"B": 2})
        assert report.summary["pc"]["n_replicates"] == 1 and report.summary["pc"]["n_excluded"] == 1
        assert report.rows()[1] == {"algorithm": "pc", "replicate": 1, "excluded": True,
                                    "error": "singular correlation matrix"}

        evaluator = Evaluator(_two_wave_truth(), reports_dir=str(tmp_path))
        with open(evaluator.save_report(report)) as f:
            document = json.load(f)
        assert document["metadata"] == {"B": 2}
        assert document["replicates"][0]["overall"] == pytest.approx(0.5)
        table = pd.read_csv(evaluator.save_csv(report))
        assert list(table.columns)[:3] == ["algorithm", "replicate", "excluded"]
        assert table["excluded"].tolist() == [False, True]


def _two_wave_truth():
    return relation_truth({"relations": []}, {"a": 1, "b": 2})


def test_synthetic_benchmark_rows():
    results = synthetic_benchmark(SMALL, repetitions=2, algorithms=("cim", "pc"), n_jobs=1)
    rows = results.rows()
    assert len(rows) == 4
    assert [r["seed"] for r in rows] == [11, 11, 12, 12]
    for algorithm in ("cim", "pc"):
        assert 0.0 <= results.summary[algorithm]["overall"]["mean"] <= math.sqrt(2)
        assert results.summary[algorithm]["n_excluded"] == 0


MARKS = (EndpointMark.TAIL, EndpointMark.ARROW, EndpointMark.CIRCLE)


def _oracle_truth(seed_seq):
    rng = np.random.default_rng(seed_seq)
    m = random_mixture(rng, int(rng.integers(4, 8)), 2, n_latent=int(rng.integers(0, 2)),
                       n_selection=int(rng.integers(0, 2)))
    return oracle_ground_truth(m), rng


def _random_estimate(truth, rng):
    est = MixedGraph(truth.graph.vertices)
    for u, v in truth.graph.edges():
        est.add_edge(u, v, MARKS[rng.integers(3)], MARKS[rng.integers(3)])
    return est


def _relabel(graph, mapping):
    waves = {mapping[x]: graph.wave(x) for x in graph.labels}
    out = MixedGraph(make_vertices([mapping[x] for x in graph.labels], waves=waves))
    for u, v in graph.edges():
        out.add_edge(mapping[u], mapping[v], graph.mark_at(u, v), graph.mark_at(v, u))
    return out


@pytest.mark.parametrize("seed_seq", np.random.SeedSequence(77).spawn(6))
@pytest.mark.parametrize("min_wave", [METRIC_MIN_WAVE, None])
def test_scores_ignore_vertex_names(seed_seq, min_wave):
    truth, rng = _oracle_truth(seed_seq)
    est = _random_estimate(truth, rng)
    labels = truth.labels
    mapping = {x: f"Z{k}" for x, k in zip(labels, rng.permutation(len(labels)) + 1)}
    renamed = GroundTruthMixed(_relabel(truth.graph, mapping),
                               {(mapping[a], mapping[b]): t for (a, b), t in truth.truth.items()},
                               truth.skeleton_defined)

    before = score_endpoints(est, truth, min_wave)
    after = score_endpoints(_relabel(est, mapping), renamed, min_wave)
    assert after == before
    assert after.overall == before.overall


@pytest.mark.parametrize("seed_seq", np.random.SeedSequence(78).spawn(6))
@pytest.mark.parametrize("min_wave", [METRIC_MIN_WAVE, None])
def test_correcting_an_endpoint_never_raises_overall(seed_seq, min_wave):
    truth, rng = _oracle_truth(seed_seq)
    est = _random_estimate(truth, rng)
    for u, v in est.edges():
        for vertex, other in ((u, v), (v, u)):
            expected = truth.truth_at(vertex, other)
            if expected is None or est.mark_at(vertex, other) == expected.mark:
                continue
            before = score_endpoints(est, truth, min_wave).overall
            est.set_mark(vertex, other, expected.mark)
            assert score_endpoints(est, truth, min_wave).overall <= before + 1e-12
