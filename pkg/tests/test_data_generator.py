import os

import numpy as np
import pandas as pd
import pytest

from data_generator import (
    DiscreteMixture, MixtureSem, STANDIN_PROFILES, SynthConfig, assign_edge_blocks, build_mixture_sem,
    generate_instance, generate_standin, random_discrete_mixture, random_master_dag, sample_dataset, save_instance,
)
from graph_core import InputError
from graph_io import read_ground_truth, read_waves

SMALL = dict(p=6, n_waves=2, q_range=(2, 3), n_samples=300, n_latents_range=(0, 1), n_selection_range=(0, 1))


class TestSynthConfig:
    def test_defaults_split_into_waves(self):
        cfg = SynthConfig()
        assert cfg.wave_size == 8
        assert cfg.wave_of("X8") == 1 and cfg.wave_of("X9") == 2 and cfg.wave_of("X24") == 3

    @pytest.mark.parametrize("kwargs", [
        {"p": 10, "n_waves": 3},
        {"n_waves": 1, "p": 4},
        {"q_range": (3, 2)},
        {"q_range": (0, 2)},
        {"coeff_range": (0.0, 1.0)},
        {"n_latents_range": (0, 12), "n_selection_range": (0, 12)},
        {"n_samples": 0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(InputError):
            SynthConfig(**kwargs)


def test_master_dag_is_forward_in_time_with_wave_links(rng):
    cfg = SynthConfig(p=9, n_waves=3)
    dag, coefficients, linking = random_master_dag(cfg, rng)
    assert ("X1", "X4") in linking and ("X6", "X9") in linking
    assert set(linking) <= dag.edges
    assert all(cfg.wave_of(u) <= cfg.wave_of(v) for u, v in dag.edges)
    assert all(0.25 <= abs(c) <= 1.0 for c in coefficients.values())
    assert dag.vertex("X5").wave == 2


def test_order_inside_a_wave_is_random():
    cfg = SynthConfig()
    against_labels = 0
    for seed in range(10):
        dag, _, _ = random_master_dag(cfg, np.random.default_rng(seed))
        against_labels += sum(cfg.wave_of(u) == cfg.wave_of(v) and int(u[1:]) > int(v[1:]) for u, v in dag.edges)
    assert against_labels > 0


def test_expected_master_dag_edge_count():
    # 24 expected over all 276 pairs at the defaults; wave-link pairs are left out of the count
    cfg = SynthConfig()
    reps = 300
    counts = []
    for seed in range(reps):
        dag, _, linking = random_master_dag(cfg, np.random.default_rng(seed))
        counts.append(len(dag.edges - set(linking)))
    n_pairs = cfg.p * (cfg.p - 1) // 2 - len(linking)
    prob = cfg.expected_neighborhood / (cfg.p - 1)
    assert n_pairs * prob + len(linking) * prob == pytest.approx(24.0)
    se = np.sqrt(n_pairs * prob * (1 - prob) / reps)
    assert abs(np.mean(counts) - n_pairs * prob) < 3 * se


class TestSampledDistribution:
    def test_marginal_means_are_zero(self):
        cfg = SynthConfig(n_selection_range=(0, 0))
        rng = np.random.default_rng(21)
        sem = build_mixture_sem(cfg, rng)
        n = 20000
        data = sample_dataset(sem, n, rng).data
        assert len(data) == n
        z = data.mean() / (data.std() / np.sqrt(n))
        assert (z.abs() < 5).all(), z[z.abs() >= 5]

    def test_single_component_covariance_matches_linear_sem(self):
        cfg = SynthConfig(p=6, n_waves=2, q_range=(1, 1), n_latents_range=(0, 0), n_selection_range=(0, 0))
        rng = np.random.default_rng(22)
        sem = build_mixture_sem(cfg, rng)
        sem.mixing_probs = {t: 1.0 for t in sem.mixing_probs}

        labels = cfg.labels()
        index = {x: k for k, x in enumerate(labels)}
        b = np.zeros((cfg.p, cfg.p))
        for (u, v), weight in sem.coefficients.items():
            b[index[v], index[u]] = weight
        inverse = np.linalg.inv(np.eye(cfg.p) - b)
        expected = inverse @ inverse.T

        data = sample_dataset(sem, 100_000, rng).data[labels]
        sample = np.cov(data.to_numpy(), rowvar=False)
        scale = np.sqrt(np.outer(np.diag(expected), np.diag(expected)))
        assert np.all(np.abs(sample - expected) <= 0.05 * scale)


def test_edge_blocks_partition_the_edges(rng):
    edges = [(f"X{i}", f"X{i + 1}") for i in range(1, 11)]
    blocks = assign_edge_blocks(edges, 3, rng)
    assert list(blocks) == ["T1", "T2", "T3"]
    assert sorted(e for block in blocks.values() for e in block) == sorted(edges)
    assert sorted(len(b) for b in blocks.values()) == [3, 3, 4]
    with pytest.raises(InputError):
        assign_edge_blocks(edges, 0, rng)


class TestMixtureSem:
    def _sem(self, rng, **kwargs):
        return build_mixture_sem(SynthConfig(**{**SMALL, **kwargs}), rng)

    def test_partition_is_checked(self, rng):
        sem = self._sem(rng)
        blocks = dict(sem.edge_blocks)
        first, second = list(blocks)[:2]
        if blocks[first]:
            blocks[second] = blocks[second] + blocks[first][:1]
            with pytest.raises(InputError):
                MixtureSem(sem.master_dag, sem.coefficients, blocks, sem.always_on_edges, sem.mixing_probs,
                           sem.waves)
        with pytest.raises(InputError):
            MixtureSem(sem.master_dag, sem.coefficients, sem.edge_blocks, [], sem.mixing_probs, sem.waves)
        with pytest.raises(InputError):
            MixtureSem(sem.master_dag, sem.coefficients, sem.edge_blocks, sem.always_on_edges,
                       {t: 0.0 for t in sem.t_names}, sem.waves)

    def test_realized_mixture_has_one_component_per_assignment(self, rng):
        sem = self._sem(rng, q_range=(2, 2))
        m = sem.to_mixture_graph()
        assert m.q == 4
        assert m.t_names == ["T1", "T2"]
        fused = sem.fused_graph()
        assert set(sem.master_dag.edges) <= fused.edges
        assert fused.is_acyclic()

    def test_large_q_cannot_be_realized(self, rng):
        sem = build_mixture_sem(SynthConfig(q_range=(7, 7)), rng)
        with pytest.raises(InputError):
            sem.to_mixture_graph()


class TestGenerateInstance:
    def test_is_reproducible(self):
        cfg = SynthConfig(**SMALL, seed=5)
        _, a, truth_a = generate_instance(cfg)
        _, b, truth_b = generate_instance(cfg)
        pd.testing.assert_frame_equal(a.data, b.data)
        assert truth_a.graph == truth_b.graph
        _, c, _ = generate_instance(cfg, seed=6)
        assert not a.data.equals(c.data)

    def test_hidden_columns_are_dropped(self):
        cfg = SynthConfig(**{**SMALL, "n_latents_range": (1, 1), "n_selection_range": (1, 1)}, seed=3)
        sem, dataset, truth = generate_instance(cfg)
        hidden = set(sem.latent) | set(sem.selection)
        assert len(hidden) == 2
        assert not hidden & set(dataset.data.columns)
        assert list(dataset.data.columns) == sem.observed
        assert set(dataset.waves) == set(sem.observed)
        assert truth.labels == sem.observed
        assert not truth.skeleton_defined
        assert list(dataset.provenance.columns) == sem.t_names
        assert len(dataset.provenance) == len(dataset.data) == dataset.manifest["n_rows"]

    def test_selection_truncates_at_percentile(self):
        cfg = SynthConfig(**{**SMALL, "n_samples": 1000, "n_selection_range": (1, 1),
                             "truncation_percentile_range": (50.0, 50.0)}, seed=2)
        _, dataset, _ = generate_instance(cfg)
        assert dataset.manifest["n_generated"] == 1000
        assert len(dataset.data) == 500

    def test_oracle_skeleton_truth(self):
        cfg = SynthConfig(**{**SMALL, "q_range": (1, 2), "n_latents_range": (0, 0)}, seed=4)
        _, dataset, truth = generate_instance(cfg, oracle_skeleton=True)
        assert truth.skeleton_defined
        assert truth.labels == list(dataset.data.columns)


class TestDiscreteMixture:
    def test_joint_table_marginalizes_to_one(self, rng):
        dm = random_discrete_mixture(rng, 5, 3)
        table = dm.joint_table()
        assert table.probs.shape == (2,) * 5 + (3,)
        assert table.probs.sum() == pytest.approx(1.0)
        assert table.probs.sum(axis=tuple(range(5))) == pytest.approx(dm.t_probs)

    def test_only_mixture_children_vary(self, rng):
        dm = random_discrete_mixture(rng, 5, 2)
        t = dm.mixture.t_names[0]
        children = {x for comp in dm.mixture.components for x in comp.children(t)}
        for x in dm.variables:
            if x not in children:
                assert dm.cpts[0][x] is dm.cpts[1][x]

    def test_validation(self, rng):
        dm = random_discrete_mixture(rng, 4, 2)
        with pytest.raises(InputError):
            DiscreteMixture(dm.mixture, dm.cpts[:1], dm.t_probs)


class TestStandins:
    def test_fhs_schema(self):
        dataset, document = generate_standin("fhs", n=200, seed=1)
        per_wave = STANDIN_PROFILES["fhs"]["per_wave"]
        assert dataset.data.shape == (200, 3 * len(per_wave))
        assert dataset.waves["bmi_1"] == 1 and dataset.waves["bmi_3"] == 3
        relations = {(r["cause"], r["effect"]) for r in document["relations"]}
        assert ("cigarettes_2", "heart_rate_2") in relations
        assert set(dataset.provenance["T"]) <= {0, 1}

    def test_stard_static_variables(self):
        dataset, document = generate_standin("stard", n=300, seed=1, n_waves=2)
        assert dataset.waves["age"] == 1 and dataset.waves["gender"] == 1
        assert set(dataset.data["gender"].unique()) <= {0.0, 1.0}
        relations = {(r["cause"], r["effect"]) for r in document["relations"]}
        assert ("age", "sleep_2") in relations

    def test_reproducible_and_validated(self):
        a, _ = generate_standin("fhs", n=100, seed=9)
        b, _ = generate_standin("fhs", n=100, seed=9)
        pd.testing.assert_frame_equal(a.data, b.data)
        with pytest.raises(InputError):
            generate_standin("ukb")


def test_save_instance(tmp_path):
    cfg = SynthConfig(**SMALL, seed=8)
    _, dataset, truth = generate_instance(cfg)
    paths = save_instance(dataset, str(tmp_path / "out"), "syn", truth=truth, relations={"relations": []})
    assert set(paths) == {"data", "waves", "manifest", "truth", "relations"}
    assert all(os.path.exists(p) for p in paths.values())
    saved = pd.read_csv(paths["data"])
    assert list(saved.columns) == list(dataset.data.columns)
    np.testing.assert_allclose(saved.values, dataset.data.values, rtol=1e-8)
    assert read_waves(paths["waves"]).to_dict() == dataset.waves
    assert read_ground_truth(paths["truth"]).graph == truth.graph
