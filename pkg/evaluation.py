"""
Evaluation framework for mixture causal discovery
Endpoint-level sensitivity, fallout and overall distance, bootstrap comparison of algorithms,
and the synthetic benchmark
"""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ci_tests import CiTestError, make_ci_test
from cim import OrientationConflictError, WaveAssignment, pc_stable_baseline, run_cim
from config import ALPHA, MAX_COND_SIZE, METRIC_MIN_WAVE, N_JOBS, REPORTS_DIR
from data_generator import SynthConfig, generate_instance
from graph_core import EndpointMark, InputError, MixedGraph, canonical_labels, make_vertices
from mixture import EndpointTruth, GroundTruthMixed, MixtureGraph

logger = logging.getLogger(__name__)

ALGORITHMS: Dict[str, Callable[..., MixedGraph]] = {"cim": run_cim, "pc": pc_stable_baseline}


@dataclass
class EndpointConfusion:
    """Tail decisions against the truth: tails are positives, arrowheads negatives"""
    tp: int = 0
    fp: int = 0
    p: int = 0
    n: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.p, self.n) < 0 or self.tp > self.p or self.fp > self.n:
            raise InputError(f"Inconsistent confusion counts: {self}")

    @property
    def sensitivity(self) -> float:
        return self.tp / self.p if self.p else 0.0

    @property
    def fallout(self) -> float:
        return self.fp / self.n if self.n else 0.0

    @property
    def overall(self) -> float:
        return overall_distance(self.sensitivity, self.fallout)


@dataclass
class MetricsReport:
    algorithm: str
    confusion: EndpointConfusion
    metadata: Dict = field(default_factory=dict)
    skeleton: Optional[Dict[str, float]] = None

    @property
    def sensitivity(self) -> float:
        return self.confusion.sensitivity

    @property
    def fallout(self) -> float:
        return self.confusion.fallout

    @property
    def overall(self) -> float:
        return self.confusion.overall

    def to_dict(self) -> Dict:
        return {
            "algorithm": self.algorithm,
            "sensitivity": self.sensitivity,
            "fallout": self.fallout,
            "overall": self.overall,
            "counts": asdict(self.confusion),
            "skeleton": self.skeleton,
            "metadata": self.metadata,
        }


@dataclass
class ReplicateReport:
    """One algorithm on one replicate; metrics is None when the replicate was excluded"""
    algorithm: str
    replicate: int
    metrics: Optional[MetricsReport] = None
    error: Optional[str] = None
    seed: Optional[int] = None

    @property
    def excluded(self) -> bool:
        return self.metrics is None

    def to_row(self) -> Dict:
        row = {"algorithm": self.algorithm, "replicate": self.replicate, "excluded": self.excluded}
        if self.seed is not None:
            row["seed"] = self.seed
        if self.metrics is None:
            row["error"] = self.error
            return row
        row.update({"sensitivity": self.metrics.sensitivity, "fallout": self.metrics.fallout,
                    "overall": self.metrics.overall, **asdict(self.metrics.confusion)})
        return row


@dataclass
class ComparisonReport:
    """Per-algorithm summaries over replicates (bootstrap or benchmark)"""
    summary: Dict[str, Dict]
    replicates: List[ReplicateReport]
    metadata: Dict = field(default_factory=dict)

    @classmethod
    def from_replicates(cls, replicates: List[ReplicateReport], algorithms: Sequence[str],
                        metadata: Optional[Dict] = None) -> "ComparisonReport":
        summary = {}
        for algorithm in algorithms:
            runs = [r for r in replicates if r.algorithm == algorithm]
            kept = [r.metrics for r in runs if not r.excluded]
            summary[algorithm] = {
                metric: summarize([getattr(m, metric) for m in kept]) for metric in ("sensitivity", "fallout", "overall")
            }
            summary[algorithm]["n_replicates"] = len(kept)
            summary[algorithm]["n_excluded"] = len(runs) - len(kept)
        return cls(summary, replicates, dict(metadata or {}))

    def rows(self) -> List[Dict]:
        return [r.to_row() for r in self.replicates]

    def to_dict(self) -> Dict:
        return {"summary": self.summary, "replicates": self.rows(), "metadata": self.metadata}


def overall_distance(sensitivity: float, fallout: float) -> float:
    """Euclidean distance from the ideal corner (sensitivity 1, fallout 0)"""
    for name, value in (("sensitivity", sensitivity), ("fallout", fallout)):
        if not 0.0 <= value <= 1.0:
            raise InputError(f"{name} must lie in [0, 1], got {value}")
    return math.sqrt((1.0 - sensitivity) ** 2 + fallout ** 2)


def score_endpoints(est: MixedGraph, truth: GroundTruthMixed,
                    min_wave: Optional[int] = METRIC_MIN_WAVE) -> EndpointConfusion:
    """
    Count tail decisions on edges present in both est and the truth skeleton, at endpoints whose
    vertex lies in wave min_wave or later (all endpoints when min_wave is None). Circles abstain:
    they count toward P or N but never as TP or FP.
    """
    if set(est.labels) != set(truth.labels):
        raise InputError(f"Estimate and truth disagree on variables: {sorted(set(est.labels) ^ set(truth.labels))}")
    tp = fp = p = n = 0
    for u, v in est.edges():
        if not truth.graph.is_adjacent(u, v):
            continue
        for vertex, other in ((u, v), (v, u)):
            expected = truth.truth_at(vertex, other)
            if expected is None:
                continue
            if min_wave is not None:
                wave = truth.wave(vertex)
                if wave is None or wave < min_wave:
                    continue
            tail = est.mark_at(vertex, other) == EndpointMark.TAIL
            if expected.mark == EndpointMark.TAIL:
                p += 1
                tp += tail
            else:
                n += 1
                fp += tail
    return EndpointConfusion(tp, fp, p, n)


def skeleton_f1(est: MixedGraph, truth: GroundTruthMixed) -> Optional[Dict[str, float]]:
    """Adjacency precision, recall and F1; None when the truth has no skeleton"""
    if not truth.skeleton_defined:
        return None
    found, expected = est.skeleton(), truth.graph.skeleton()
    hits = len(found & expected)
    precision = hits / len(found) if found else 1.0
    recall = hits / len(expected) if expected else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def relation_truth(relations: Union[str, Mapping], waves: Mapping[str, int]) -> GroundTruthMixed:
    """
    Truth from known cause -> effect relations: a tail at each cause on its cause–effect pair,
    and an arrowhead at the later endpoint of every cross-wave pair. Only those endpoints are scored.
    """
    if isinstance(relations, str):
        if not os.path.exists(relations):
            raise InputError(f"Relation file not found: {relations}")
        with open(relations) as f:
            relations = json.load(f)
    try:
        pairs = [(str(r["cause"]), str(r["effect"])) for r in relations["relations"]]
    except (KeyError, TypeError):
        raise InputError("Relation document must look like {'relations': [{'cause': ..., 'effect': ...}]}")

    labels = canonical_labels(waves)
    truth: Dict = {}
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            if waves[a] < waves[b]:
                truth[(a, b)] = EndpointTruth(EndpointMark.ARROW, arrow_allowed=True, tail_allowed=False)
            elif waves[b] < waves[a]:
                truth[(b, a)] = EndpointTruth(EndpointMark.ARROW, arrow_allowed=True, tail_allowed=False)
    for cause, effect in pairs:
        for x in (cause, effect):
            if x not in waves:
                raise InputError(f"Relation names unknown variable '{x}'")
        if waves[cause] > waves[effect]:
            raise InputError(f"Relation {cause} -> {effect} points back in time")
        truth[(effect, cause)] = EndpointTruth(EndpointMark.TAIL, arrow_allowed=False, tail_allowed=True)

    graph = MixedGraph(make_vertices(labels, waves=dict(waves)))
    for other, vertex in truth:
        u, v = canonical_labels((other, vertex))
        if not graph.is_adjacent(u, v):
            graph.add_edge(u, v, EndpointMark.CIRCLE, EndpointMark.CIRCLE)
        graph.set_mark(vertex, other, truth[(other, vertex)].mark)
    return GroundTruthMixed(graph, truth, skeleton_defined=False)


def run_algorithm(algorithm: str, data: Optional[pd.DataFrame], waves: Mapping[str, int], ci_test: str,
                  alpha: float = ALPHA, max_cond_size: Optional[int] = MAX_COND_SIZE,
                  mixture: Optional[MixtureGraph] = None, n_jobs: int = 1) -> MixedGraph:
    if algorithm not in ALGORITHMS:
        raise InputError(f"Unknown algorithm '{algorithm}'; choose from {', '.join(ALGORITHMS)}")
    ci = make_ci_test(ci_test, data=data, mixture=mixture, alpha=alpha)
    if ci_test == "oracle":
        max_cond_size = None
    return ALGORITHMS[algorithm](ci, waves, max_cond_size=max_cond_size, n_jobs=n_jobs)


def _run_replicate(replicate: int, seed_seq: np.random.SeedSequence, data: Optional[pd.DataFrame],
                   run_waves: Dict[str, int], truth: GroundTruthMixed, algorithms: Sequence[str], ci_test: str,
                   alpha: float, max_cond_size: Optional[int], min_wave: Optional[int],
                   mixture: Optional[MixtureGraph]) -> List[ReplicateReport]:
    sample = data
    if data is not None:
        rng = np.random.default_rng(seed_seq)
        sample = data.iloc[rng.integers(0, len(data), size=len(data))].reset_index(drop=True)
    reports = []
    for algorithm in algorithms:
        try:
            est = run_algorithm(algorithm, sample, run_waves, ci_test, alpha, max_cond_size, mixture)
            confusion = score_endpoints(est, truth, min_wave)
        except (CiTestError, OrientationConflictError, InputError, np.linalg.LinAlgError) as e:
            logger.warning("Replicate %d of %s excluded: %s", replicate, algorithm, e)
            reports.append(ReplicateReport(algorithm, replicate, error=str(e)))
            continue
        reports.append(ReplicateReport(algorithm, replicate, MetricsReport(algorithm, confusion)))
    return reports


def summarize(values: Sequence[float]) -> Dict[str, float]:
    """Mean with a 95% normal-approximation confidence interval"""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return {"mean": float("nan"), "ci_low": float("nan"), "ci_high": float("nan")}
    mean = float(values.mean())
    half = 1.96 * float(values.std(ddof=1)) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return {"mean": mean, "ci_low": mean - half, "ci_high": mean + half}


class Evaluator:
    """Scores discovery algorithms against a ground truth"""

    def __init__(self, truth: GroundTruthMixed, ci_test: str = "fisher-z", alpha: float = ALPHA,
                 max_cond_size: Optional[int] = MAX_COND_SIZE, min_wave: Optional[int] = METRIC_MIN_WAVE,
                 n_jobs: int = N_JOBS, mixture: Optional[MixtureGraph] = None, reports_dir: str = REPORTS_DIR):
        self.truth = truth
        self.ci_test = ci_test
        self.alpha = alpha
        self.max_cond_size = max_cond_size
        self.min_wave = min_wave
        self.n_jobs = n_jobs
        self.mixture = mixture
        self.reports_dir = reports_dir

    def evaluate_graph(self, est: MixedGraph, algorithm: str, metadata: Optional[Dict] = None) -> MetricsReport:
        confusion = score_endpoints(est, self.truth, self.min_wave)
        return MetricsReport(algorithm, confusion, dict(metadata or {}), skeleton_f1(est, self.truth))

    def bootstrap_compare(self, data: Optional[pd.DataFrame], waves: Mapping[str, int], algorithms: Sequence[str],
                          B: int, seed: int) -> ComparisonReport:
        """
        B row resamples (with replacement); every algorithm runs on each with the same wave map.
        Failed replicates are excluded and counted.
        """
        if B < 1:
            raise InputError("The bootstrap needs at least one replicate")
        for algorithm in algorithms:
            if algorithm not in ALGORITHMS:
                raise InputError(f"Unknown algorithm '{algorithm}'; choose from {', '.join(ALGORITHMS)}")
        run_waves = WaveAssignment(waves)
        run_waves.require_covers(self.truth.labels)
        children = np.random.SeedSequence(seed).spawn(B)
        batches = Parallel(n_jobs=self.n_jobs)(
            delayed(_run_replicate)(b, children[b], data, run_waves.to_dict(), self.truth, list(algorithms),
                                    self.ci_test, self.alpha, self.max_cond_size, self.min_wave, self.mixture)
            for b in range(B)
        )
        replicates = [report for batch in batches for report in batch]
        return ComparisonReport.from_replicates(replicates, algorithms, {
            "B": B, "seed": seed, "ci_test": self.ci_test, "alpha": self.alpha,
            "max_cond_size": self.max_cond_size, "n": None if data is None else len(data),
            "scored_endpoints": self._mask_note(),
        })

    def _mask_note(self) -> str:
        if self.min_wave is None:
            return "all endpoints listed in the truth"
        return f"endpoints at vertices in wave {self.min_wave} or later"

    def save_report(self, report: Union[MetricsReport, ComparisonReport],
                    output_file: str = "evaluation_report.json") -> str:
        os.makedirs(self.reports_dir, exist_ok=True)
        path = os.path.join(self.reports_dir, output_file)
        with open(path, "w") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        print(f"✓ Evaluation report saved to {path}")
        return path

    def save_csv(self, report: ComparisonReport, output_file: str = "evaluation_replicates.csv") -> str:
        """One row per algorithm per replicate, for external plotting"""
        os.makedirs(self.reports_dir, exist_ok=True)
        path = os.path.join(self.reports_dir, output_file)
        columns = ["algorithm", "replicate", "excluded", "sensitivity", "fallout", "overall", "tp", "fp", "p", "n"]
        pd.DataFrame(report.rows()).reindex(columns=columns).to_csv(path, index=False)
        print(f"✓ Replicate table saved to {path}")
        return path


def synthetic_benchmark(cfg: SynthConfig, repetitions: int, algorithms: Sequence[str] = ("cim", "pc"),
                        ci_test: str = "fisher-z", alpha: float = ALPHA,
                        max_cond_size: Optional[int] = MAX_COND_SIZE, n_jobs: int = N_JOBS) -> ComparisonReport:
    """Seeded repetitions of the synthetic protocol; each instance is scored in waves 2 and later"""
    replicates = []
    for r in range(repetitions):
        seed = cfg.seed + r
        _, dataset, truth = generate_instance(cfg, seed=seed)
        for algorithm in algorithms:
            est = run_algorithm(algorithm, dataset.data, dataset.waves, ci_test, alpha, max_cond_size, n_jobs=n_jobs)
            metrics = MetricsReport(algorithm, score_endpoints(est, truth, METRIC_MIN_WAVE), {"seed": seed})
            replicates.append(ReplicateReport(algorithm, r, metrics, seed=seed))
        logger.info("Benchmark repetition %d/%d done", r + 1, repetitions)
    return ComparisonReport.from_replicates(replicates, algorithms, {
        "repetitions": repetitions, "seed": cfg.seed, "p": cfg.p, "n": cfg.n_samples,
        "ci_test": ci_test, "alpha": alpha, "max_cond_size": max_cond_size,
    })
