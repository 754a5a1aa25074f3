"""
Script to generate synthetic longitudinal datasets from mixtures of DAGs
Linear-Gaussian mixtures with block-randomized edges, discrete-CPT mixtures with exact
joint tables, and stand-ins shaped like the two real cohort datasets
"""
import logging
import os
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ci_tests import JointTable
from cim import oracle_ground_truth
from config import DATA_DIR, RANDOM_SEED, SYNTH_DEFAULTS
from graph_core import Dag, InputError, Role, VertexId, canonical_labels, make_vertices
from graph_io import write_ground_truth, write_json, write_waves
from mixture import FusedGraph, GroundTruthMixed, MixtureGraph, ground_truth_endpoints, random_mixture

logger = logging.getLogger(__name__)

Edge = Tuple[str, str]
MAX_REALIZED_COMPONENTS = 6  # 2**6 components is the largest mixture graph built for oracle truth
MAX_REGENERATIONS = 10


@dataclass
class SynthConfig:
    """Synthetic benchmark parameters"""
    p: int = SYNTH_DEFAULTS["p"]
    n_waves: int = SYNTH_DEFAULTS["n_waves"]
    expected_neighborhood: float = SYNTH_DEFAULTS["expected_neighborhood"]
    q_range: Tuple[int, int] = SYNTH_DEFAULTS["q_range"]
    coeff_range: Tuple[float, float] = SYNTH_DEFAULTS["coeff_range"]
    n_samples: int = SYNTH_DEFAULTS["n_samples"]
    n_latents_range: Tuple[int, int] = SYNTH_DEFAULTS["n_latents_range"]
    n_selection_range: Tuple[int, int] = SYNTH_DEFAULTS["n_selection_range"]
    truncation_percentile_range: Tuple[float, float] = SYNTH_DEFAULTS["truncation_percentile_range"]
    seed: int = RANDOM_SEED

    def __post_init__(self):
        if self.n_waves < 2 or self.p % self.n_waves:
            raise InputError(f"p={self.p} must split evenly into n_waves={self.n_waves} >= 2 waves")
        for name in ("q_range", "coeff_range", "n_latents_range", "n_selection_range",
                     "truncation_percentile_range"):
            low, high = getattr(self, name)
            if low > high:
                raise InputError(f"{name} is empty: {low} > {high}")
        if self.q_range[0] < 1 or self.coeff_range[0] <= 0:
            raise InputError("q must be at least 1 and coefficient magnitudes positive")
        if self.n_latents_range[1] + self.n_selection_range[1] >= self.p:
            raise InputError("Latent and selection counts leave no observed variables")
        if self.n_samples < 1:
            raise InputError("n_samples must be positive")

    @property
    def wave_size(self) -> int:
        return self.p // self.n_waves

    def labels(self) -> List[str]:
        return [f"X{i}" for i in range(1, self.p + 1)]

    def wave_of(self, label: str) -> int:
        return (int(label[1:]) - 1) // self.wave_size + 1


@dataclass
class MixtureSem:
    """
    Linear-Gaussian mixture: each Ti switches one block of master-DAG edges on with probability
    mixing_probs[Ti]; wave-linking edges are always on.
    """
    master_dag: Dag
    coefficients: Dict[Edge, float]
    edge_blocks: Dict[str, List[Edge]]
    always_on_edges: List[Edge]
    mixing_probs: Dict[str, float]
    waves: Dict[str, int]
    latent: List[str] = field(default_factory=list)
    selection: List[str] = field(default_factory=list)
    truncation_percentiles: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        blocked = [e for block in self.edge_blocks.values() for e in block]
        if len(blocked) != len(set(blocked)):
            raise InputError("Edge blocks overlap")
        if set(blocked) | set(self.always_on_edges) != set(self.master_dag.edges) \
                or set(blocked) & set(self.always_on_edges):
            raise InputError("Edge blocks and always-on edges must partition the master DAG's edges")
        for t, prob in self.mixing_probs.items():
            if not 0 < prob <= 1:
                raise InputError(f"Mixing probability of {t} must lie in (0, 1], got {prob}")
        if set(self.latent) & set(self.selection):
            raise InputError("Selection variables cannot be latent")

    @property
    def t_names(self) -> List[str]:
        return list(self.edge_blocks)

    @property
    def q(self) -> int:
        return len(self.edge_blocks)

    @property
    def observed(self) -> List[str]:
        hidden = set(self.latent) | set(self.selection)
        return [x for x in self.master_dag.labels if x not in hidden]

    def _roles(self) -> Dict[str, str]:
        roles = {x: Role.OBSERVED.value for x in self.master_dag.labels}
        roles.update({x: Role.LATENT.value for x in self.latent})
        roles.update({x: Role.SELECTION.value for x in self.selection})
        roles.update({t: Role.MIXTURE.value for t in self.t_names})
        return roles

    def _vertices(self) -> List[VertexId]:
        return make_vertices(self._roles(), self._roles(), {x: self.waves[x] for x in self.observed})

    def _t_edges(self) -> List[Edge]:
        return sorted({(t, v) for t, block in self.edge_blocks.items() for _, v in block})

    def fused_graph(self) -> FusedGraph:
        """Union of every realizable DAG, with each Ti pointing at the heads of its block"""
        return FusedGraph(self._vertices(), list(self.master_dag.edges) + self._t_edges())

    def to_mixture_graph(self) -> MixtureGraph:
        """One component per instantiation of T; only feasible for small q"""
        if self.q > MAX_REALIZED_COMPONENTS:
            raise InputError(f"Cannot realize 2**{self.q} components (at most q={MAX_REALIZED_COMPONENTS})")
        vertices = self._vertices()
        t_edges = self._t_edges()
        components = []
        for assignment in product((0, 1), repeat=self.q):
            edges = list(self.always_on_edges) + t_edges
            for t, on in zip(self.t_names, assignment):
                if on:
                    edges += self.edge_blocks[t]
            components.append(Dag(vertices, edges))
        return MixtureGraph(components, self.t_names)


@dataclass
class Dataset:
    """Observed samples with wave tags; provenance holds the realized T per row"""
    data: pd.DataFrame
    waves: Dict[str, int]
    provenance: pd.DataFrame
    manifest: Dict = field(default_factory=dict)


def random_master_dag(cfg: SynthConfig, rng: np.random.Generator) -> Tuple[Dag, Dict[Edge, float], List[Edge]]:
    """
    Random DAG over X1..Xp. The topological order is drawn at random inside each wave block and
    the blocks follow wave order, so no edge points back in time. Each forward pair is kept with
    probability expected_neighborhood / (p - 1); the wave-linking edges (nth variable of one wave ->
    nth variable of the next) are added on top. Returns the DAG, its coefficients and the
    wave-linking edges.
    """
    labels = cfg.labels()
    order = []
    for w in range(cfg.n_waves):
        block = labels[w * cfg.wave_size:(w + 1) * cfg.wave_size]
        order.extend(block[k] for k in rng.permutation(cfg.wave_size))
    prob = cfg.expected_neighborhood / (cfg.p - 1)
    edges = {(order[i], order[j]) for i in range(cfg.p) for j in range(i + 1, cfg.p) if rng.random() < prob}
    linking = [
        (labels[w * cfg.wave_size + n], labels[(w + 1) * cfg.wave_size + n])
        for w in range(cfg.n_waves - 1) for n in range(cfg.wave_size)
    ]
    edges |= set(linking)
    waves = {x: cfg.wave_of(x) for x in labels}
    dag = Dag.from_edges(sorted(edges), labels=labels, waves=waves)

    low, high = cfg.coeff_range
    coefficients = {}
    for e in dag.sorted_edges():
        coefficients[e] = float(rng.choice([-1.0, 1.0]) * rng.uniform(low, high))
    return dag, coefficients, linking


def assign_edge_blocks(edges: List[Edge], q: int, rng: np.random.Generator) -> Dict[str, List[Edge]]:
    """Random partition of the edges into q blocks of near-equal size; block i belongs to Ti"""
    if q < 1:
        raise InputError("Need at least one block")
    order = rng.permutation(len(edges))
    blocks = np.array_split(order, q)
    return {f"T{i}": sorted(edges[k] for k in block) for i, block in enumerate(blocks, start=1)}


def build_mixture_sem(cfg: SynthConfig, rng: np.random.Generator) -> MixtureSem:
    dag, coefficients, linking = random_master_dag(cfg, rng)
    q = int(rng.integers(cfg.q_range[0], cfg.q_range[1] + 1))
    randomizable = [e for e in dag.sorted_edges() if e not in set(linking)]
    blocks = assign_edge_blocks(randomizable, q, rng)
    mixing_probs = {t: float(rng.uniform(1e-3, 1.0)) for t in blocks}

    labels = cfg.labels()
    n_latent = int(rng.integers(cfg.n_latents_range[0], cfg.n_latents_range[1] + 1))
    latent = sorted(rng.choice(labels, size=n_latent, replace=False).tolist()) if n_latent else []
    eligible = [x for x in labels if x not in latent]
    n_selection = int(rng.integers(cfg.n_selection_range[0], cfg.n_selection_range[1] + 1))
    selection = sorted(rng.choice(eligible, size=n_selection, replace=False).tolist()) if n_selection else []
    low, high = cfg.truncation_percentile_range
    percentiles = {s: float(rng.uniform(low, high)) for s in selection}

    return MixtureSem(
        master_dag=dag, coefficients=coefficients, edge_blocks=blocks, always_on_edges=sorted(linking),
        mixing_probs=mixing_probs, waves={x: cfg.wave_of(x) for x in labels},
        latent=latent, selection=selection, truncation_percentiles=percentiles,
    )


def sample_dataset(sem: MixtureSem, n: int, rng: np.random.Generator) -> Dataset:
    """
    Draw T per row, realize the active edges and sample the linear SEM in topological order.
    Latent and selection columns are dropped; rows in the bottom percentile of any selection
    variable are removed (thresholds computed on all rows).
    """
    t_names = sem.t_names
    t_values = (rng.random((n, len(t_names))) < np.array([sem.mixing_probs[t] for t in t_names])).astype(int)
    block_of = {e: k for k, t in enumerate(t_names) for e in sem.edge_blocks[t]}

    values: Dict[str, np.ndarray] = {}
    for v in sem.master_dag.topological_order():
        column = rng.standard_normal(n)
        for u in sorted(sem.master_dag.parents(v)):
            weight = sem.coefficients[(u, v)]
            k = block_of.get((u, v))
            active = 1 if k is None else t_values[:, k]
            column = column + weight * active * values[u]
        values[v] = column

    keep = np.ones(n, dtype=bool)
    for s in sem.selection:
        threshold = np.percentile(values[s], sem.truncation_percentiles[s])
        keep &= values[s] >= threshold

    observed = sem.observed
    data = pd.DataFrame({x: values[x][keep] for x in observed})
    provenance = pd.DataFrame(t_values[keep], columns=t_names)
    manifest = {
        "q": sem.q,
        "latent": list(sem.latent),
        "selection": list(sem.selection),
        "truncation_percentiles": dict(sem.truncation_percentiles),
        "mixing_probs": dict(sem.mixing_probs),
        "n_generated": n,
        "n_rows": int(keep.sum()),
    }
    return Dataset(data, {x: sem.waves[x] for x in observed}, provenance, manifest)


def ground_truth_for_instance(sem: MixtureSem, oracle_skeleton: bool = False, n_jobs: int = 1) -> GroundTruthMixed:
    """
    Ancestral endpoint truth of the instance's fused graph. Without an oracle skeleton every
    observed pair is scored; with one (small q only) the truth skeleton comes from oracle-mode
    skeleton discovery on the realized mixture graph.
    """
    fused = sem.fused_graph()
    waves = {x: sem.waves[x] for x in sem.observed}
    if oracle_skeleton:
        return oracle_ground_truth(sem.to_mixture_graph(), waves, n_jobs=n_jobs)
    return ground_truth_endpoints(fused, sem.observed, sem.latent + sem.t_names, sem.selection, waves)


def generate_instance(cfg: SynthConfig, seed: Optional[int] = None,
                      oracle_skeleton: bool = False) -> Tuple[MixtureSem, Dataset, GroundTruthMixed]:
    """One seeded benchmark instance; data are regenerated from a fresh stream if truncation empties them"""
    seed = cfg.seed if seed is None else seed
    seed_seq = np.random.SeedSequence(seed)
    rng = np.random.default_rng(seed_seq)
    sem = build_mixture_sem(cfg, rng)
    dataset = sample_dataset(sem, cfg.n_samples, rng)
    regenerations = 0
    while dataset.data.empty:
        regenerations += 1
        if regenerations > MAX_REGENERATIONS:
            raise InputError(f"Selection truncation removed every row {MAX_REGENERATIONS} times (seed {seed})")
        logger.warning("Instance %d lost every row to selection; regenerating (attempt %d)", seed, regenerations)
        dataset = sample_dataset(sem, cfg.n_samples, np.random.default_rng(seed_seq.spawn(1)[0]))
    dataset.manifest.update({"seed": seed, "p": cfg.p, "n_waves": cfg.n_waves, "regenerations": regenerations})
    truth = ground_truth_for_instance(sem, oracle_skeleton=oracle_skeleton)
    return sem, dataset, truth


@dataclass
class DiscreteMixture:
    """
    Binary-CPT mixture over a MixtureGraph with one mixture variable T taking q values.
    cpts[j][x] holds P(x = 1 | parents of x in component j other than T), indexed by the
    parents in canonical order; vertices that are not children of T share one table.
    """
    mixture: MixtureGraph
    cpts: List[Dict[str, np.ndarray]]
    t_probs: np.ndarray

    def __post_init__(self):
        if len(self.mixture.t_names) != 1:
            raise InputError("Discrete mixtures support exactly one mixture variable")
        if len(self.cpts) != self.mixture.q or len(self.t_probs) != self.mixture.q:
            raise InputError("Need one CPT set and one probability per component")

    @property
    def variables(self) -> List[str]:
        return [x for x in self.mixture.base_labels if x not in self.mixture.t_names]

    def parents(self, j: int, x: str) -> List[str]:
        t = self.mixture.t_names[0]
        comp = self.mixture.components[j]
        return [p for p in comp.labels if p in comp.parents(x) and p != t]

    def joint_table(self) -> JointTable:
        """Exact joint over the variables and T by enumeration"""
        variables = self.variables
        k = len(variables)
        grid = np.indices((2,) * k).reshape(k, -1)
        position = {x: i for i, x in enumerate(variables)}
        columns = []
        for j in range(self.mixture.q):
            prob = np.full(grid.shape[1], float(self.t_probs[j]))
            for x in variables:
                pa = self.parents(j, x)
                p_one = self.cpts[j][x][tuple(grid[position[p]] for p in pa)] if pa else self.cpts[j][x]
                prob = prob * np.where(grid[position[x]] == 1, p_one, 1 - p_one)
            columns.append(prob)
        probs = np.stack(columns, axis=-1).reshape((2,) * k + (self.mixture.q,))
        return JointTable(variables + list(self.mixture.t_names), probs)


def _random_cpt(rng: np.random.Generator, n_parents: int):
    if n_parents:
        return rng.uniform(0.1, 0.9, size=(2,) * n_parents)
    return float(rng.uniform(0.1, 0.9))


def random_discrete_mixture(rng: np.random.Generator, n_variables: int, q: int,
                            n_latent: int = 0) -> DiscreteMixture:
    """Random binary mixture; T's children get per-component CPTs, every other vertex one shared CPT"""
    m = random_mixture(rng, n_variables - n_latent, q, n_latent=n_latent, n_waves=2)
    t = m.t_names[0]
    t_children = {x for comp in m.components for x in comp.children(t)}
    shared: Dict[str, np.ndarray] = {}
    cpts = []
    for comp in m.components:
        tables = {}
        for x in m.base_labels:
            if x == t:
                continue
            n_parents = len([p for p in comp.parents(x) if p != t])
            if x in t_children:
                tables[x] = _random_cpt(rng, n_parents)
            else:
                if x not in shared:
                    shared[x] = _random_cpt(rng, n_parents)
                tables[x] = shared[x]
        cpts.append(tables)
    t_probs = rng.dirichlet(np.ones(q))
    return DiscreteMixture(m, cpts, t_probs)


# Stand-ins shaped like the two cohort studies: per-wave variables, static wave-1 variables,
# known relations (applied within every wave; static causes point at every wave), and edges
# whose direction or presence switches with a hidden subgroup T.
STANDIN_PROFILES = {
    "fhs": {
        "n": 2019,
        "per_wave": ["age", "bmi", "cigarettes", "heart_rate", "systolic", "diastolic", "cholesterol", "glucose"],
        "static": [],
        "relations": [("cigarettes", "heart_rate"), ("age", "systolic"), ("age", "cholesterol"),
                      ("bmi", "cigarettes"), ("systolic", "diastolic"), ("diastolic", "systolic")],
        "switched": [("systolic", "diastolic")],
    },
    "stard": {
        "n": 2043,
        "per_wave": ["sleep", "sad_mood", "appetite", "concentration", "self_outlook", "suicidal_ideation",
                     "interest", "energy", "psychomotor"],
        "static": ["age", "gender"],
        "relations": [("sleep", "energy"), ("sleep", "concentration"), ("sad_mood", "suicidal_ideation"),
                      ("sad_mood", "self_outlook"), ("energy", "psychomotor"), ("appetite", "energy"),
                      ("interest", "concentration"), ("age", "sleep")],
        "switched": [("sad_mood", "interest")],
    },
}


def _standin_label(name: str, wave: int) -> str:
    return f"{name}_{wave}"


def generate_standin(profile: str, n: Optional[int] = None, seed: int = RANDOM_SEED,
                     n_waves: int = 3) -> Tuple[Dataset, Dict]:
    """
    Simulated cohort with the named profile's schema. Returns the dataset and the known-relation
    document ({"relations": [{"cause", "effect"}]}) used as truth.
    """
    if profile not in STANDIN_PROFILES:
        raise InputError(f"Unknown profile '{profile}'; choose from {', '.join(STANDIN_PROFILES)}")
    spec = STANDIN_PROFILES[profile]
    n = spec["n"] if n is None else n
    rng = np.random.default_rng(seed)

    waves = {x: 1 for x in spec["static"]}
    for w in range(1, n_waves + 1):
        waves.update({_standin_label(x, w): w for x in spec["per_wave"]})

    switched = spec["switched"]
    # edges present in both subgroups; a pair in `switched` points the other way when T=0
    common, relations = set(), []
    for cause, effect in spec["relations"]:
        if cause in spec["static"]:
            pairs = [(cause, _standin_label(effect, w)) for w in range(1, n_waves + 1)]
        else:
            pairs = [(_standin_label(cause, w), _standin_label(effect, w)) for w in range(1, n_waves + 1)]
        relations += pairs
        common.update(pairs)
    for w in range(1, n_waves):
        common.update((_standin_label(x, w), _standin_label(x, w + 1)) for x in spec["per_wave"])
    common -= {(_standin_label(a, w), _standin_label(b, w)) for a, b in switched for w in range(1, n_waves + 1)}
    common -= {(_standin_label(b, w), _standin_label(a, w)) for a, b in switched for w in range(1, n_waves + 1)}

    groups = []
    for on in (1, 0):
        edges = set(common)
        for a, b in switched:
            for w in range(1, n_waves + 1):
                edges.add((_standin_label(a, w), _standin_label(b, w)) if on
                          else (_standin_label(b, w), _standin_label(a, w)))
        groups.append(Dag.from_edges(sorted(edges), labels=list(waves)))

    all_edges = sorted(set(groups[0].edges) | set(groups[1].edges))
    coefficients = {e: float(rng.choice([-1.0, 1.0]) * rng.uniform(0.25, 1.0)) for e in all_edges}
    t = (rng.random(n) < 0.5).astype(int)
    labels = canonical_labels(waves)
    values = {x: np.zeros(n) for x in labels}
    for on, dag in zip((1, 0), groups):
        rows = t == on
        m = int(rows.sum())
        sampled: Dict[str, np.ndarray] = {}
        for v in dag.topological_order():
            if v == "gender":
                column = (rng.random(m) < 0.5).astype(float)
            else:
                column = rng.standard_normal(m)
                for u in sorted(dag.parents(v)):
                    column = column + coefficients[(u, v)] * sampled[u]
            sampled[v] = column
        for x in labels:
            values[x][rows] = sampled[x]

    data = pd.DataFrame({x: values[x] for x in labels})
    manifest = {"profile": profile, "seed": seed, "n_rows": n, "n_waves": n_waves}
    dataset = Dataset(data, waves, pd.DataFrame({"T": t}), manifest)
    document = {"relations": [{"cause": c, "effect": e} for c, e in relations]}
    return dataset, document


def save_instance(dataset: Dataset, out_dir: str, prefix: str,
                  truth: Optional[GroundTruthMixed] = None, relations: Optional[Dict] = None) -> Dict[str, str]:
    """Write data CSV, waves JSON, manifest JSON and the truth file(s); returns the written paths"""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "data": os.path.join(out_dir, f"{prefix}_data.csv"),
        "waves": os.path.join(out_dir, f"{prefix}_waves.json"),
        "manifest": os.path.join(out_dir, f"{prefix}_manifest.json"),
    }
    dataset.data.to_csv(paths["data"], index=False, float_format="%.10g")
    write_waves(dataset.waves, paths["waves"])
    write_json(dataset.manifest, paths["manifest"])
    if truth is not None:
        paths["truth"] = os.path.join(out_dir, f"{prefix}_truth.txt")
        write_ground_truth(truth, paths["truth"])
    if relations is not None:
        paths["relations"] = os.path.join(out_dir, f"{prefix}_relations.json")
        write_json(relations, paths["relations"])
    return paths


if __name__ == "__main__":
    cfg = SynthConfig()

    print(f"Generating synthetic mixture instance (p={cfg.p}, n={cfg.n_samples}, seed={cfg.seed})...")
    sem, dataset, truth = generate_instance(cfg)
    save_instance(dataset, DATA_DIR, "synthetic", truth=truth)
    print(f"✓ Generated {len(dataset.data)} records over {dataset.data.shape[1]} observed variables (q={sem.q})")

    for profile in STANDIN_PROFILES:
        print(f"\nGenerating {profile} stand-in...")
        standin, relations = generate_standin(profile, seed=cfg.seed)
        save_instance(standin, DATA_DIR, profile, relations=relations)
        print(f"✓ Generated {len(standin.data)} records")

    print("\n✓ Datasets generated successfully!")
