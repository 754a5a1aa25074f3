"""
Property audit for the oracle machinery
Runs seeded property suites (d-separation deciders, Markov property, fused vs. mixture graph,
CIM soundness, indistinguishable pairs, order independence) and writes a text report
"""
import logging
import os
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed

from ci_tests import FisherZTest, OracleCiTest, ci_residual
from cim import WaveAssignment, oracle_ground_truth, run_cim, run_cim_steps
from config import EXACT_TOLERANCE, N_JOBS, RANDOM_SEED, REPORTS_DIR
from data_generator import SynthConfig, generate_instance, random_discrete_mixture
from graph_core import (
    Dag, EndpointMark, InputError, ancestors, d_separated_moral, d_separated_paths,
)
from mixture import (
    build_fused_graph, build_indistinguishable_pair, fused_implies_mixture_check, grouped_d_separated,
    random_disjoint_sets, random_mixture,
)

logger = logging.getLogger(__name__)

SUITE_SIZES = {
    "full": {"dsep_random": 500, "markov": 100, "fused_separation": 500, "fused_separation_trials": 50,
             "soundness": 200, "indistinguishable": 50, "order": 50},
    "fast": {"dsep_random": 100, "markov": 10, "fused_separation": 50, "fused_separation_trials": 20,
             "soundness": 20, "indistinguishable": 5, "order": 3},
}


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _merge(name: str, parts: List[SuiteResult]) -> SuiteResult:
    merged = SuiteResult(name)
    for part in parts:
        merged.checked += part.checked
        merged.violations.extend(part.violations)
    return merged


def random_dag(rng: np.random.Generator, n: int, edge_prob: float = 0.35) -> Dag:
    labels = [f"V{i}" for i in range(1, n + 1)]
    order = [labels[k] for k in rng.permutation(n)]
    edges = [(u, v) for i, u in enumerate(order) for v in order[i + 1:] if rng.random() < edge_prob]
    return Dag.from_edges(edges, labels=labels)


def all_dags(n: int) -> List[Dag]:
    """Every DAG on n labelled vertices"""
    labels = [f"V{i}" for i in range(1, n + 1)]
    pairs = list(combinations(labels, 2))
    dags = []
    for choice in product((0, 1, 2), repeat=len(pairs)):
        edges = [(u, v) if c == 1 else (v, u) for (u, v), c in zip(pairs, choice) if c]
        try:
            dags.append(Dag.from_edges(edges, labels=labels))
        except InputError:
            continue
    return dags


def dsep_equivalence_suite(rng: np.random.Generator, exhaustive_vertices: int = 4,
                           random_checks: int = 500, random_vertices: int = 8) -> SuiteResult:
    result = SuiteResult("d-separation deciders agree")
    for g in all_dags(exhaustive_vertices):
        labels = g.labels
        for slots in product(range(4), repeat=len(labels)):
            a = {x for x, s in zip(labels, slots) if s == 0}
            b = {x for x, s in zip(labels, slots) if s == 1}
            c = {x for x, s in zip(labels, slots) if s == 2}
            if not a or not b:
                continue
            result.checked += 1
            if d_separated_paths(g, a, b, c) != d_separated_moral(g, a, b, c):
                result.violations.append(f"{sorted(g.edges)}: {sorted(a)} | {sorted(b)} | {sorted(c)}")
    for _ in range(random_checks):
        g = random_dag(rng, random_vertices)
        a, b, c = random_disjoint_sets(rng, g.labels)
        result.checked += 1
        if d_separated_paths(g, a, b, c) != d_separated_moral(g, a, b, c):
            result.violations.append(f"{sorted(g.edges)}: {sorted(a)} | {sorted(b)} | {sorted(c)}")
    return result


def markov_instance(seed_seq: np.random.SeedSequence, set_queries: int = 20) -> SuiteResult:
    """Grouped d-separation must imply exact independence in the enumerated mixture distribution"""
    rng = np.random.default_rng(seed_seq)
    n_variables = int(rng.integers(3, 7))
    dm = random_discrete_mixture(rng, n_variables, q=int(rng.integers(2, 4)), n_latent=int(rng.integers(0, 2)))
    table = dm.joint_table()
    m, labels = dm.mixture, dm.variables
    result = SuiteResult("markov")

    queries = []
    for a, b in combinations(labels, 2):
        rest = [x for x in labels if x not in (a, b)]
        for size in range(len(rest) + 1):
            queries += [({a}, {b}, set(c)) for c in combinations(rest, size)]
    queries += [random_disjoint_sets(rng, labels) for _ in range(set_queries)]

    for a, b, c in queries:
        if not grouped_d_separated(m, a, b, c):
            continue
        result.checked += 1
        residual = ci_residual(table, sorted(a), sorted(b), sorted(c))
        if residual > EXACT_TOLERANCE:
            result.violations.append(f"{m!r}: {sorted(a)} _||_ {sorted(b)} | {sorted(c)} residual {residual:.3g}")
    return result


def fused_separation_instance(seed_seq: np.random.SeedSequence, trials: int) -> SuiteResult:
    rng = np.random.default_rng(seed_seq)
    m = random_mixture(rng, int(rng.integers(2, 7)), int(rng.integers(1, 4)),
                       n_latent=int(rng.integers(0, 2)), n_selection=int(rng.integers(0, 2)))
    violations = fused_implies_mixture_check(m, trials, rng)
    return SuiteResult("fused_separation", trials, [f"{m!r}: {sorted(a)} | {sorted(b)} | {sorted(c)}"
                                               for a, b, c in violations])


def soundness_instance(seed_seq: np.random.SeedSequence) -> SuiteResult:
    """Oracle CIM: no contradictions, separating-set members are ancestors, later waves get arrowheads"""
    rng = np.random.default_rng(seed_seq)
    m = random_mixture(rng, int(rng.integers(3, 11)), int(rng.integers(2, 4)),
                       n_latent=int(rng.integers(0, 3)), n_selection=int(rng.integers(0, 2)))
    waves = WaveAssignment(m.waves())
    truth = oracle_ground_truth(m, waves)
    steps = run_cim_steps(OracleCiTest(m), waves)
    est = steps.graph
    result = SuiteResult("soundness", 1)

    for vertex, other, mark in truth.contradictions(est):
        result.violations.append(f"{m!r}: {mark.value} at {vertex} on {other}–{vertex}")
    if est.skeleton() != truth.graph.skeleton():
        result.violations.append(f"{m!r}: skeleton differs from the oracle skeleton")

    fused = build_fused_graph(m)
    selection = set(m.selection)
    recorded = [((i, k), w) for (i, k), w in steps.sep.items()]
    recorded += [((i, k), w) for (i, _, k), w in steps.sep2.items() if w]
    for (i, k), w in recorded:
        outside = set(w) - ancestors(fused, {i, k} | selection)
        if outside:
            result.violations.append(f"{m!r}: separating set of {i}, {k} holds non-ancestors {sorted(outside)}")

    for u, v in est.edges():
        if waves[u] != waves[v]:
            later, earlier = (v, u) if waves[v] > waves[u] else (u, v)
            if est.mark_at(later, earlier) != EndpointMark.ARROW:
                result.violations.append(f"{m!r}: no arrowhead at later-wave {later} on {earlier}–{later}")
    return result


def indistinguishable_instance(seed_seq: np.random.SeedSequence, max_attempts: int = 50) -> SuiteResult:
    """Observed CI relations agree between a mixture and its constructed partner"""
    rng = np.random.default_rng(seed_seq)
    for _ in range(max_attempts):
        m1 = random_mixture(rng, int(rng.integers(2, 6)), int(rng.integers(1, 4)),
                            n_latent=int(rng.integers(0, 2)), n_selection=int(rng.integers(0, 2)))
        f1 = build_fused_graph(m1)
        candidates = [(oi, oj) for oi in m1.observed for oj in m1.observed
                      if oi != oj and oi not in ancestors(f1, {oj} | set(m1.selection))]
        if candidates:
            break
    else:
        return SuiteResult("indistinguishable", 0, ["no admissible pair found"])
    oi, oj = candidates[int(rng.integers(len(candidates)))]
    m2 = build_indistinguishable_pair(m1, oi, oj)
    result = SuiteResult("indistinguishable", 1)

    ci1, ci2 = OracleCiTest(m1), OracleCiTest(m2)
    observed = m1.observed
    for a, b in combinations(observed, 2):
        rest = [x for x in observed if x not in (a, b)]
        for size in range(len(rest) + 1):
            for w in combinations(rest, size):
                if ci1.test(a, b, w).independent != ci2.test(a, b, w).independent:
                    result.violations.append(f"{m1!r} ({oi} -> {oj}): {a} _||_ {b} | {list(w)} differs")

    if oi not in ancestors(build_fused_graph(m2), {oj}):
        result.violations.append(f"{m1!r}: {oi} is not an ancestor of {oj} in the partner")
    waves = WaveAssignment(m1.waves())
    if run_cim(ci1, waves) != run_cim(ci2, waves):
        result.violations.append(f"{m1!r} ({oi} -> {oj}): CIM outputs differ")
    return result


def order_instance(seed: int) -> SuiteResult:
    """Permuting the column order leaves the CIM output unchanged"""
    cfg = SynthConfig(p=9, n_waves=3, q_range=(2, 4), n_samples=600, n_latents_range=(0, 1),
                      n_selection_range=(0, 1), seed=seed)
    _, dataset, _ = generate_instance(cfg)
    rng = np.random.default_rng(seed)
    columns = list(dataset.data.columns)
    shuffled = [columns[k] for k in rng.permutation(len(columns))]
    first = run_cim(FisherZTest(dataset.data), dataset.waves, max_cond_size=3)
    second = run_cim(FisherZTest(dataset.data[shuffled]), dataset.waves, max_cond_size=3)
    result = SuiteResult("order", 1)
    if first != second:
        result.violations.append(f"seed {seed}: output depends on column order {shuffled}")
    return result


class PropertyAuditor:
    """Runs the oracle property suites and reports violations"""

    def __init__(self, seed: int = RANDOM_SEED, n_jobs: int = N_JOBS, reports_dir: str = REPORTS_DIR):
        self.seed = seed
        self.n_jobs = n_jobs
        self.reports_dir = reports_dir

    def _children(self, offset: int, count: int) -> List[np.random.SeedSequence]:
        return np.random.SeedSequence([self.seed, offset]).spawn(count)

    def _parallel(self, function, args) -> List[SuiteResult]:
        return Parallel(n_jobs=self.n_jobs)(delayed(function)(*a) for a in args)

    def run_all(self, scale: str = "full", suites: Optional[List[str]] = None) -> Dict[str, SuiteResult]:
        if scale not in SUITE_SIZES:
            raise InputError(f"Unknown audit scale '{scale}'; choose from {', '.join(SUITE_SIZES)}")
        sizes = SUITE_SIZES[scale]
        wanted = suites or ["dsep", "markov", "fused_separation", "soundness", "indistinguishable", "order"]
        results = {}
        if "dsep" in wanted:
            rng = np.random.default_rng(self._children(0, 1)[0])
            results["dsep"] = dsep_equivalence_suite(rng, random_checks=sizes["dsep_random"])
        if "markov" in wanted:
            results["markov"] = _merge("Markov property on discrete mixtures", self._parallel(
                markov_instance, [(s,) for s in self._children(1, sizes["markov"])]))
        if "fused_separation" in wanted:
            results["fused_separation"] = _merge("fused-graph separation implies mixture separation", self._parallel(
                fused_separation_instance, [(s, sizes["fused_separation_trials"]) for s in self._children(2, sizes["fused_separation"])]))
        if "soundness" in wanted:
            results["soundness"] = _merge("oracle CIM soundness", self._parallel(
                soundness_instance, [(s,) for s in self._children(3, sizes["soundness"])]))
        if "indistinguishable" in wanted:
            results["indistinguishable"] = _merge("indistinguishable pairs", self._parallel(
                indistinguishable_instance, [(s,) for s in self._children(4, sizes["indistinguishable"])]))
        if "order" in wanted:
            results["order"] = _merge("column-order independence", self._parallel(
                order_instance, [(self.seed + k,) for k in range(sizes["order"])]))
        for key, result in results.items():
            if not result.passed:
                logger.warning("Suite %s: %d violation(s)", key, len(result.violations))
        return results

    def generate_audit_report(self, results: Dict[str, SuiteResult], output_file: str = "oracle_check_report.txt") -> str:
        report = []
        report.append("=" * 80)
        report.append("MIXTURE CAUSAL DISCOVERY - ORACLE PROPERTY REPORT")
        report.append("=" * 80)
        report.append(f"Seed: {self.seed}")
        report.append("\n")

        for key, result in results.items():
            report.append(f"{result.name.upper()} [{key}]")
            report.append("-" * 80)
            report.append(f"Checks: {result.checked}")
            report.append(f"Violations: {len(result.violations)}")
            for line in result.violations[:20]:
                report.append(f"  {line}")
            if len(result.violations) > 20:
                report.append(f"  ... {len(result.violations) - 20} more")
            report.append("")

        passed = all(r.passed for r in results.values())
        report.append("=" * 80)
        report.append("ALL SUITES PASSED" if passed else "VIOLATIONS FOUND")
        report.append("=" * 80)

        report_text = "\n".join(report)
        os.makedirs(self.reports_dir, exist_ok=True)
        path = os.path.join(self.reports_dir, output_file)
        with open(path, "w") as f:
            f.write(report_text + "\n")
        print(report_text)
        print(f"\n✓ Audit report saved to {path}")
        return report_text
