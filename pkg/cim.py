"""
Causal Inference over Mixtures (CIM) for longitudinal data
Wave-restricted PC-stable skeleton discovery, arrowheads from waves and prior knowledge,
tails from minimal separating sets, transitive tails, and the PC-stable baseline
"""
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple

from joblib import Parallel, delayed

from ci_tests import CiDecision, CiTest, OracleCiTest
from graph_core import (
    EndpointMark, InputError, MixedGraph, Role, VertexId, canonical_labels, label_key,
)
from mixture import GroundTruthMixed, MixtureGraph, build_fused_graph, ground_truth_endpoints

logger = logging.getLogger(__name__)

TAIL, ARROW, CIRCLE = EndpointMark.TAIL, EndpointMark.ARROW, EndpointMark.CIRCLE


class OrientationConflictError(RuntimeError):
    """An orientation contradicts a mark already placed"""


class WaveAssignment(Mapping):
    """Observed variable -> wave index (1-based)"""

    def __init__(self, waves: Mapping):
        self._waves: Dict[str, int] = {}
        for label, wave in waves.items():
            if isinstance(wave, bool) or int(wave) != wave or int(wave) < 1:
                raise InputError(f"Wave of {label} must be a positive integer, got {wave!r}")
            self._waves[str(label)] = int(wave)

    def __getitem__(self, label: str) -> int:
        return self._waves[label]

    def __iter__(self) -> Iterator[str]:
        return iter(self._waves)

    def __len__(self) -> int:
        return len(self._waves)

    def __repr__(self):
        return f"WaveAssignment({self._waves})"

    @property
    def n_waves(self) -> int:
        return len(set(self._waves.values()))

    def require_covers(self, labels: Iterable[str], minimum_waves: int = 2):
        missing = [x for x in labels if x not in self._waves]
        if missing:
            raise InputError(f"No wave assigned to: {sorted(missing, key=label_key)}")
        waves = {self._waves[x] for x in labels}
        if len(waves) < minimum_waves:
            raise InputError(f"Need at least {minimum_waves} waves, got {sorted(waves)}")

    def merged(self, group: Iterable[int]) -> "WaveAssignment":
        """Merge the listed waves into one and renumber waves consecutively"""
        group = set(group)
        if not group:
            return WaveAssignment(self._waves)
        target = min(group)
        collapsed = {x: target if w in group else w for x, w in self._waves.items()}
        rank = {w: k for k, w in enumerate(sorted(set(collapsed.values())), start=1)}
        return WaveAssignment({x: rank[w] for x, w in collapsed.items()})

    def to_dict(self) -> Dict[str, int]:
        return dict(self._waves)


class SepMap:
    """Symmetric (Oi, Oj) -> first separating set found"""

    def __init__(self):
        self._sets: Dict[FrozenSet[str], Tuple[str, ...]] = {}

    def record(self, i: str, j: str, w: Iterable[str]):
        self._sets.setdefault(frozenset((i, j)), tuple(w))

    def get(self, i: str, j: str) -> Optional[Tuple[str, ...]]:
        return self._sets.get(frozenset((i, j)))

    def items(self):
        for pair, w in self._sets.items():
            yield tuple(sorted(pair, key=label_key)), w

    def __len__(self):
        return len(self._sets)


class Sep2Map:
    """Ordered triple (Oi, Oj, Ok) -> minimal separating set of Oi, Ok containing Oj (empty if none)"""

    def __init__(self):
        self._sets: Dict[Tuple[str, str, str], Tuple[str, ...]] = {}

    def record(self, i: str, j: str, k: str, w: Iterable[str]):
        self._sets[(i, j, k)] = tuple(w)

    def has(self, i: str, j: str, k: str) -> bool:
        return (i, j, k) in self._sets

    def get(self, i: str, j: str, k: str) -> Tuple[str, ...]:
        return self._sets.get((i, j, k), ())

    def items(self):
        return self._sets.items()

    def __len__(self):
        return len(self._sets)


@dataclass(frozen=True)
class PriorKnowledge:
    """Assertions (not_ancestor, of): `not_ancestor` cannot be an ancestor of `of`"""
    forbidden: FrozenSet[Tuple[str, str]] = frozenset()

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[str, str]]) -> "PriorKnowledge":
        return cls(frozenset((str(a), str(b)) for a, b in pairs))

    def forbids(self, ancestor: str, descendant: str) -> bool:
        return (ancestor, descendant) in self.forbidden

    def labels(self) -> set:
        return {x for pair in self.forbidden for x in pair}


@dataclass
class CimResult:
    graph: MixedGraph
    sep: SepMap
    sep2: Sep2Map = field(default_factory=Sep2Map)


def _log_entry(step: str, i: str, j: str, w: Tuple[str, ...], decision: CiDecision) -> dict:
    return {
        "step": step, "i": i, "j": j, "w": list(w),
        "independent": bool(decision.independent), "statistic": float(decision.statistic),
        "p_value": float(decision.p_value), "degenerate": bool(decision.degenerate),
    }


def _prepare(ci: CiTest, waves: Mapping) -> Tuple[List[str], WaveAssignment]:
    waves = waves if isinstance(waves, WaveAssignment) else WaveAssignment(waves)
    variables = canonical_labels(ci.variables)
    waves.require_covers(variables)
    return variables, waves


def wave_adjacency(est: MixedGraph, waves: Mapping, v: str, a: int, b: int) -> List[str]:
    """Neighbours of v whose wave lies between a and b inclusive"""
    low, high = min(a, b), max(a, b)
    return [x for x in est.adjacent(v) if low <= waves[x] <= high]


def _search_pair(ci: CiTest, i: str, j: str, candidates: List[str], level: int):
    entries = []
    for w in combinations(candidates, level):
        decision = ci.test(i, j, w)
        entries.append(_log_entry("skeleton", i, j, w, decision))
        if decision.independent:
            return w, entries
    return None, entries


def cim_skeleton(ci: CiTest, waves: Mapping, max_cond_size: Optional[int] = None, n_jobs: int = 1,
                 log: Optional[list] = None) -> Tuple[MixedGraph, SepMap]:
    """
    Level-wise edge deletion starting from the complete circle graph. For the ordered pair
    (Oi, Oj) conditioning sets come from Oi's neighbours between the two waves; deletions
    are applied at the end of each level.
    """
    variables, waves = _prepare(ci, waves)
    vertices = [VertexId(k, x, Role.OBSERVED, waves[x]) for k, x in enumerate(variables)]
    est = MixedGraph.complete(vertices, CIRCLE)
    sep = SepMap()

    level = 0
    while True:
        tasks = []
        for i in variables:
            for j in est.adjacent(i):
                candidates = [x for x in wave_adjacency(est, waves, i, waves[i], waves[j]) if x != j]
                if len(candidates) >= level:
                    tasks.append((i, j, candidates))
        if not tasks:
            break

        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_search_pair)(ci, i, j, candidates, level) for i, j, candidates in tasks
        )
        removals = []
        for (i, j, _), (w, entries) in zip(tasks, results):
            if log is not None:
                log.extend(entries)
            if w is not None:
                sep.record(i, j, w)
                removals.append((i, j))
        for i, j in removals:
            if est.is_adjacent(i, j):
                est.remove_edge(i, j)
        logger.info("Skeleton level %d: %d ordered pairs tested, %d edges left",
                    level, len(tasks), len(est.edges()))

        if max_cond_size is not None and level >= max_cond_size:
            break
        level += 1
    return est, sep


def _place(est: MixedGraph, vertex: str, other: str, mark: EndpointMark):
    current = est.mark_at(vertex, other)
    if current == CIRCLE:
        est.set_mark(vertex, other, mark)
    elif current != mark:
        raise OrientationConflictError(
            f"Cannot place {mark.value} at {vertex} on {other}–{vertex}: already {current.value}"
        )


def orient_waves(est: MixedGraph, waves: Mapping, pk: Optional[PriorKnowledge] = None) -> MixedGraph:
    """Arrowheads at the later-wave endpoint of cross-wave edges and at forbidden ancestors"""
    pk = pk or PriorKnowledge()
    unknown = pk.labels() - set(est.labels)
    if unknown:
        raise InputError(f"Prior knowledge names unknown variable(s): {sorted(unknown, key=label_key)}")
    for u, v in est.edges():
        for near, far in ((u, v), (v, u)):
            if waves[near] < waves[far] or pk.forbids(far, near):
                _place(est, far, near, ARROW)
    return est


def _minimal_set_containing(ci: CiTest, i: str, k: str, j: str, candidates: List[str],
                            max_size: Optional[int], log: Optional[list]) -> Optional[Tuple[str, ...]]:
    seen: Dict[Tuple[str, ...], bool] = {}

    def independent(w: Tuple[str, ...]) -> bool:
        if w not in seen:
            decision = ci.test(i, k, w)
            seen[w] = decision.independent
            if log is not None:
                log.append(_log_entry("sep2", i, k, w, decision))
        return seen[w]

    others = [x for x in candidates if x != j]
    limit = len(others) if max_size is None else min(len(others), max(max_size - 1, 0))
    for size in range(limit + 1):
        for extra in combinations(others, size):
            w = tuple(sorted((j, *extra), key=candidates.index))
            if not independent(w):
                continue
            if not any(independent(v) for r in range(len(w)) for v in combinations(w, r)):
                return w
    return None


def find_sep2(est: MixedGraph, ci: CiTest, waves: Mapping, sep: SepMap,
              max_cond_size: Optional[int] = None, log: Optional[list] = None) -> Sep2Map:
    """
    For each unshielded Oi *-> Oj *-* Ok whose recorded separating set misses Oj, look for a
    minimal separating set of Oi and Ok that contains Oj, from Oi's side first.
    """
    sep2 = Sep2Map()
    for j in est.labels:
        neighbours = est.adjacent(j)
        for i in neighbours:
            if est.mark_at(j, i) != ARROW:
                continue
            for k in neighbours:
                if k == i or est.is_adjacent(i, k):
                    continue
                recorded = sep.get(i, k)
                if recorded is None or j in recorded:
                    continue
                found = None
                for source, target in ((i, k), (k, i)):
                    candidates = [x for x in wave_adjacency(est, waves, source, waves[i], waves[k]) if x != target]
                    if j in candidates:
                        found = _minimal_set_containing(ci, i, k, j, candidates, max_cond_size, log)
                        if found:
                            break
                sep2.record(i, j, k, found or ())
                if found:
                    logger.debug("Sep2(%s, %s, %s) = %s", i, j, k, list(found))
    return sep2


def orient_tails(est: MixedGraph, sep: SepMap, sep2: Sep2Map) -> MixedGraph:
    """Tail at Oj on Oj–Ok for Oi *-> Oj o-* Ok when Oj belongs to a minimal separating set of Oi, Ok"""
    tails = []
    for j in est.labels:
        neighbours = est.adjacent(j)
        for i in neighbours:
            if est.mark_at(j, i) != ARROW:
                continue
            for k in neighbours:
                if k == i or est.is_adjacent(i, k):
                    continue
                recorded = sep.get(i, k)
                if recorded is None:
                    continue
                if j in recorded or sep2.get(i, j, k):
                    tails.append((j, k))
    for j, k in tails:
        current = est.mark_at(j, k)
        if current == CIRCLE:
            est.set_mark(j, k, TAIL)
        elif current == ARROW:
            logger.info("Orientation conflict: tail requested at %s on %s–%s, keeping arrow", j, j, k)
    return est


def _tail_reachable(est: MixedGraph, start: str) -> set:
    """Vertices reached from start along edges with a tail at the near end"""
    reached, stack = set(), [start]
    while stack:
        x = stack.pop()
        for y in est.adjacent(x):
            if y not in reached and est.mark_at(x, y) == TAIL:
                reached.add(y)
                stack.append(y)
    return reached


def transitive_tails(est: MixedGraph) -> MixedGraph:
    """O1 o-* On becomes O1 -* On whenever a chain O1 -* O2 -* ... -* On exists; repeated to a fixpoint"""
    changed = True
    while changed:
        changed = False
        for u in est.labels:
            reached = None
            for v in est.adjacent(u):
                if est.mark_at(u, v) != CIRCLE:
                    continue
                reached = reached if reached is not None else _tail_reachable(est, u)
                if v in reached:
                    est.set_mark(u, v, TAIL)
                    changed = True
    return est


def run_cim_steps(ci: CiTest, waves: Mapping, pk: Optional[PriorKnowledge] = None,
                  max_cond_size: Optional[int] = None, n_jobs: int = 1,
                  log: Optional[list] = None) -> CimResult:
    variables, waves = _prepare(ci, waves)
    est, sep = cim_skeleton(ci, waves, max_cond_size, n_jobs, log)
    orient_waves(est, waves, pk)
    sep2 = find_sep2(est, ci, waves, sep, max_cond_size, log)
    orient_tails(est, sep, sep2)
    transitive_tails(est)
    return CimResult(est, sep, sep2)


def run_cim(ci: CiTest, waves: Mapping, pk: Optional[PriorKnowledge] = None,
            max_cond_size: Optional[int] = None, n_jobs: int = 1, log: Optional[list] = None) -> MixedGraph:
    return run_cim_steps(ci, waves, pk, max_cond_size, n_jobs, log).graph


def _directed(est: MixedGraph, a: str, b: str) -> bool:
    return est.is_adjacent(a, b) and est.mark_at(a, b) == TAIL and est.mark_at(b, a) == ARROW


def _undirected(est: MixedGraph, a: str, b: str) -> bool:
    return est.is_adjacent(a, b) and est.mark_at(a, b) == TAIL and est.mark_at(b, a) == TAIL


def _orient(est: MixedGraph, a: str, b: str):
    est.set_mark(b, a, ARROW)


def apply_meek_rules(est: MixedGraph) -> MixedGraph:
    """Orient undirected edges with Meek's rules 1-4 until nothing changes"""
    changed = True
    while changed:
        changed = False
        for a in est.labels:
            for b in est.adjacent(a):
                if not _undirected(est, a, b):
                    continue
                neighbours_a = est.adjacent(a)
                # Rule 1: c -> a - b, c and b not adjacent
                if any(_directed(est, c, a) and not est.is_adjacent(c, b) for c in neighbours_a if c != b):
                    _orient(est, a, b)
                    changed = True
                    continue
                # Rule 2: a -> c -> b
                if any(_directed(est, a, c) and _directed(est, c, b) for c in neighbours_a if c != b):
                    _orient(est, a, b)
                    changed = True
                    continue
                # Rule 3: a - c -> b, a - d -> b, c and d not adjacent
                parents = [c for c in neighbours_a if c != b and _undirected(est, a, c) and _directed(est, c, b)]
                if any(not est.is_adjacent(c, d) for c, d in combinations(parents, 2)):
                    _orient(est, a, b)
                    changed = True
                    continue
                # Rule 4: a - d -> c -> b, a adjacent to c, d and b not adjacent
                for c in neighbours_a:
                    if c == b or not _directed(est, c, b):
                        continue
                    if any(_undirected(est, a, d) and _directed(est, d, c) and not est.is_adjacent(d, b)
                           for d in neighbours_a if d not in (b, c)):
                        _orient(est, a, b)
                        changed = True
                        break
    return est


def pc_stable_baseline(ci: CiTest, waves: Mapping, max_cond_size: Optional[int] = None, n_jobs: int = 1,
                       log: Optional[list] = None) -> MixedGraph:
    """
    PC-stable on the same wave-restricted skeleton: colliders from the separating sets,
    cross-wave edges pointing forward in time, then Meek's rules. Only tails and arrows are output.
    """
    variables, waves = _prepare(ci, waves)
    est, sep = cim_skeleton(ci, waves, max_cond_size, n_jobs, log)
    for u, v in est.edges():
        est.set_mark(u, v, TAIL)
        est.set_mark(v, u, TAIL)

    colliders = []
    for j in est.labels:
        for i, k in combinations(est.adjacent(j), 2):
            if est.is_adjacent(i, k):
                continue
            recorded = sep.get(i, k)
            if recorded is not None and j not in recorded:
                colliders.append((i, j, k))
    for i, j, k in colliders:
        est.set_mark(j, i, ARROW)
        est.set_mark(j, k, ARROW)

    for u, v in est.edges():
        for near, far in ((u, v), (v, u)):
            if waves[near] < waves[far]:
                if est.mark_at(near, far) == ARROW:
                    logger.info("Collider orientation points back in time on %s–%s; keeping it", near, far)
                    continue
                est.set_mark(far, near, ARROW)
    return apply_meek_rules(est)


def oracle_ground_truth(m: MixtureGraph, waves: Optional[Mapping] = None, n_jobs: int = 1) -> GroundTruthMixed:
    """Ancestral endpoint truth on the skeleton found by oracle-mode skeleton discovery"""
    waves = WaveAssignment(waves if waves is not None else m.waves())
    skeleton, _ = cim_skeleton(OracleCiTest(m), waves, n_jobs=n_jobs)
    latent = m.labels_with_role(Role.LATENT, Role.MIXTURE)
    return ground_truth_endpoints(build_fused_graph(m), m.observed, latent, m.selection, waves.to_dict(),
                                  adjacency=skeleton.edges())
