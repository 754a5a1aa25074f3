"""
Mixture graphs and fused graphs
Builds the side-by-side mixture graph of q component DAGs, its fused summary graph,
grouped d-separation queries, and the ancestral ground truth over observed variables
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from graph_core import (
    Dag, DirectedGraph, EndpointMark, InputError, MixedGraph, Role, VertexId,
    ancestors, canonical_labels, d_separated_paths, label_key, make_vertices,
)

logger = logging.getLogger(__name__)


def copy_label(label: str, component: int) -> str:
    return f"{label}^{component}"


class MixtureGraph:
    """
    q component DAGs drawn side by side with every mixture vertex merged into one.
    Base labels refer to the shared vertex set; `graph` holds the per-component copies.
    """

    def __init__(self, components: Sequence[Dag], t_names: Iterable[str]):
        if not components:
            raise InputError("A mixture graph needs at least one component")
        for j, comp in enumerate(components, start=1):
            if not isinstance(comp, Dag):
                raise InputError(f"Component {j} is not an acyclic graph")
        labels = set(components[0].labels)
        for j, comp in enumerate(components[1:], start=2):
            if set(comp.labels) != labels:
                raise InputError(f"Component {j} does not share the vertex labels of component 1")
        t_names = canonical_labels(t_names)
        missing = set(t_names) - labels
        if missing:
            raise InputError(f"Mixture variables not present in the components: {sorted(missing)}")
        for j, comp in enumerate(components, start=1):
            for t in t_names:
                if comp.parents(t):
                    raise InputError(f"Mixture variable {t} has parents in component {j}")

        self.components: List[Dag] = list(components)
        self.q = len(components)
        self.t_names: List[str] = t_names
        self.base_vertices: List[VertexId] = [
            VertexId(v.index, v.label, Role.MIXTURE if v.label in t_names else v.role, v.wave)
            for v in components[0].vertices
        ]
        self._build_merged_graph()

    def _build_merged_graph(self):
        t_set = set(self.t_names)
        vertices, prime_map = [], {}
        index = 0
        for v in self.base_vertices:
            if v.label in t_set:
                vertices.append(VertexId(index, v.label, v.role, v.wave))
                prime_map[v.label] = (v.label,)
                index += 1
                continue
            copies = []
            for j in range(1, self.q + 1):
                vertices.append(VertexId(index, copy_label(v.label, j), v.role, v.wave))
                copies.append(copy_label(v.label, j))
                index += 1
            prime_map[v.label] = tuple(copies)

        def node(label, j):
            return label if label in t_set else copy_label(label, j)

        edges = set()
        t_children: Dict[str, Set[str]] = {t: set() for t in self.t_names}
        for j, comp in enumerate(self.components, start=1):
            for u, w in comp.edges:
                edges.add((node(u, j), node(w, j)))
                if u in t_set:
                    t_children[u].add(w)
        # every copy of any child of a mixture variable hangs off that variable
        for t, children in t_children.items():
            for child in children:
                edges.update((t, c) for c in prime_map[child])

        self.prime_map: Dict[str, Tuple[str, ...]] = prime_map
        self.graph = Dag(vertices, edges)

    @property
    def base_labels(self) -> List[str]:
        return [v.label for v in self.base_vertices]

    def labels_with_role(self, *roles: Role) -> List[str]:
        return [v.label for v in self.base_vertices if v.role in roles]

    @property
    def observed(self) -> List[str]:
        return self.labels_with_role(Role.OBSERVED)

    @property
    def selection(self) -> List[str]:
        return self.labels_with_role(Role.SELECTION)

    def roles(self) -> Dict[str, str]:
        return {v.label: v.role.value for v in self.base_vertices}

    def waves(self) -> Dict[str, int]:
        return {v.label: v.wave for v in self.base_vertices if v.wave is not None}

    def primed(self, labels: Iterable[str]) -> Set[str]:
        labels = set(labels)
        unknown = labels - set(self.prime_map)
        if unknown:
            raise InputError(f"Unknown vertex id(s): {sorted(unknown)}")
        return {c for x in labels for c in self.prime_map[x]}

    def __repr__(self):
        return f"MixtureGraph(q={self.q}, t={self.t_names}, {len(self.base_vertices)} base vertices)"


def build_mixture_graph(components: Sequence[Dag], t_names: Iterable[str]) -> MixtureGraph:
    return MixtureGraph(components, t_names)


class FusedGraph(DirectedGraph):
    """Union of the component edge relations over base labels; may be cyclic"""

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self._graph)


def build_fused_graph(m: MixtureGraph) -> FusedGraph:
    edges = set()
    for comp in m.components:
        edges |= comp.edges
    return FusedGraph(m.base_vertices, edges)


def grouped_d_separated(m: MixtureGraph, a: Iterable[str], b: Iterable[str], c: Iterable[str],
                        decider=d_separated_paths) -> bool:
    """d-separation of the primed copy-sets a', b' given c' in the mixture graph"""
    a, b, c = set(a), set(b), set(c)
    if a & b or a & c or b & c:
        raise InputError(f"Vertex sets must be disjoint: a={sorted(a)}, b={sorted(b)}, c={sorted(c)}")
    return decider(m.graph, m.primed(a), m.primed(b), m.primed(c))


def random_disjoint_sets(rng: np.random.Generator, labels: Sequence[str]) -> Tuple[Set[str], Set[str], Set[str]]:
    """Random disjoint (a, b, c) with a and b non-empty"""
    if len(labels) < 2:
        raise InputError("Need at least two vertices to draw a query")
    while True:
        slots = rng.integers(0, 4, size=len(labels))
        a = {x for x, s in zip(labels, slots) if s == 0}
        b = {x for x, s in zip(labels, slots) if s == 1}
        c = {x for x, s in zip(labels, slots) if s == 2}
        if a and b:
            return a, b, c


def fused_implies_mixture_check(m: MixtureGraph, trials: int,
                                rng: Optional[np.random.Generator] = None) -> List[Tuple[Set[str], Set[str], Set[str]]]:
    """Queries separated in the fused graph but not in the mixture graph (expected: none)"""
    rng = rng if rng is not None else np.random.default_rng()
    fused = build_fused_graph(m)
    labels = [x for x in m.base_labels if x not in m.t_names]
    violations = []
    if len(labels) < 2:
        return violations
    for _ in range(trials):
        a, b, c = random_disjoint_sets(rng, labels)
        if d_separated_paths(fused, a, b, c) and not grouped_d_separated(m, a, b, c):
            logger.warning("Fused separation not implied in the mixture graph: %s | %s | %s",
                           sorted(a), sorted(b), sorted(c))
            violations.append((a, b, c))
    return violations


@dataclass(frozen=True)
class EndpointTruth:
    mark: EndpointMark
    arrow_allowed: bool = True
    tail_allowed: bool = True


@dataclass
class GroundTruthMixed:
    """
    Endpoint truth over observed variables.
    `truth[(other, vertex)]` describes the endpoint at `vertex` on the pair other–vertex.
    `graph` carries the truth skeleton (complete when no skeleton is defined).
    """
    graph: MixedGraph
    truth: Dict[Tuple[str, str], EndpointTruth]
    skeleton_defined: bool = True
    notes: List[str] = field(default_factory=list)

    @property
    def labels(self) -> List[str]:
        return self.graph.labels

    def truth_at(self, vertex: str, other: str) -> Optional[EndpointTruth]:
        return self.truth.get((other, vertex))

    def wave(self, label: str) -> Optional[int]:
        return self.graph.wave(label)

    def contradictions(self, est: MixedGraph) -> List[Tuple[str, str, EndpointMark]]:
        """Oriented endpoints of est that disagree with the ancestral truth: (vertex, other, mark)"""
        found = []
        for u, v in est.edges():
            for vertex, other in ((u, v), (v, u)):
                truth = self.truth_at(vertex, other)
                if truth is None:
                    continue
                mark = est.mark_at(vertex, other)
                if mark == EndpointMark.ARROW and not truth.arrow_allowed:
                    found.append((vertex, other, mark))
                elif mark == EndpointMark.TAIL and not truth.tail_allowed:
                    found.append((vertex, other, mark))
        return found


def ground_truth_endpoints(f: DirectedGraph, observed: Iterable[str], latent: Iterable[str],
                           selection: Iterable[str], waves: Dict[str, int],
                           adjacency: Optional[Iterable[Iterable[str]]] = None) -> GroundTruthMixed:
    """
    Ancestral truth of the fused graph: the mark at Oj is a tail iff Oj is an ancestor
    of Oi or S, an arrow is admissible iff Oj is not an ancestor of Oi.
    Without an adjacency the truth graph is complete over the observed variables.
    """
    observed, latent, selection = canonical_labels(observed), set(latent), set(selection)
    mixture_vertices = set(f.labels_with_role(Role.MIXTURE))
    groups = [set(observed), latent - mixture_vertices, selection]
    covered = set().union(*groups) | mixture_vertices
    if covered != set(f.labels) or sum(len(g) for g in groups) != len(set().union(*groups)):
        raise InputError("Observed, latent and selection sets must partition the fused graph's vertices")

    anc_s = ancestors(f, selection)
    anc = {o: ancestors(f, {o}) for o in observed}
    truth = {}
    for oi in observed:
        for oj in observed:
            if oi == oj:
                continue
            tail_allowed = oj in anc[oi] or oj in anc_s
            truth[(oi, oj)] = EndpointTruth(
                EndpointMark.TAIL if tail_allowed else EndpointMark.ARROW,
                arrow_allowed=oj not in anc[oi],
                tail_allowed=tail_allowed,
            )

    graph = MixedGraph(make_vertices(observed, waves={o: waves[o] for o in observed if o in waves}))
    if adjacency is None:
        pairs = [(u, v) for i, u in enumerate(observed) for v in observed[i + 1:]]
    else:
        pairs = [tuple(sorted(pair, key=label_key)) for pair in adjacency]
    for u, v in pairs:
        graph.add_edge(u, v, truth[(v, u)].mark, truth[(u, v)].mark)
    return GroundTruthMixed(graph, truth, skeleton_defined=adjacency is not None)


def build_indistinguishable_pair(m1: MixtureGraph, oi: str, oj: str) -> MixtureGraph:
    """
    Second mixture whose observed CI relations match m1 while oi becomes an ancestor of oj:
    a new latent Lk with oi -> Lk in all but the last component and Lk -> oj in the last,
    plus a new latent mixture variable that is a parent of Lk and oj everywhere.
    """
    f1 = build_fused_graph(m1)
    for label in (oi, oj):
        if label not in m1.observed:
            raise InputError(f"{label} is not an observed vertex")
    if oi == oj:
        raise InputError("oi and oj must differ")
    if oi in ancestors(f1, {oj} | set(m1.selection)):
        raise InputError(f"{oi} is already an ancestor of {oj} or the selection set")

    components = list(m1.components)
    if len(components) == 1:
        components = components * 2

    existing = set(m1.base_labels)
    lk, tl = f"L_{oi}_{oj}", f"T_{oi}_{oj}"
    while lk in existing or tl in existing:
        lk, tl = lk + "_", tl + "_"

    roles = m1.roles()
    roles[lk] = Role.LATENT.value
    roles[tl] = Role.MIXTURE.value
    vertices = make_vertices(roles, roles, m1.waves())

    new_components = []
    for j, comp in enumerate(components, start=1):
        edges = set(comp.edges) | {(tl, lk), (tl, oj)}
        edges.add((lk, oj) if j == len(components) else (oi, lk))
        new_components.append(Dag(vertices, edges))
    logger.debug("Constructed indistinguishable pair for %s -> %s", oi, oj)
    return MixtureGraph(new_components, list(m1.t_names) + [tl])


def random_mixture(rng: np.random.Generator, n_observed: int, q: int, n_latent: int = 0,
                   n_selection: int = 0, n_waves: int = 2, edge_prob: float = 0.3,
                   varying_prob: float = 0.15, mechanism_prob: float = 0.1) -> MixtureGraph:
    """
    Random mixture instance with one latent mixture variable T1 indexing the components.
    Components share a stationary edge set and add their own edges; no edge points from a
    later wave to an earlier one, and every vertex whose parent set varies is a child of T1.
    """
    if n_observed < n_waves:
        raise InputError("Need at least one observed vertex per wave")
    observed = [f"O{i}" for i in range(1, n_observed + 1)]
    latent = [f"L{i}" for i in range(1, n_latent + 1)]
    selection = [f"S{i}" for i in range(1, n_selection + 1)]
    x_labels = observed + latent + selection

    wave_of = {o: 1 + (i * n_waves) // n_observed for i, o in enumerate(observed)}
    for x in latent + selection:
        wave_of[x] = int(rng.integers(1, n_waves + 1))

    def wave_major_order():
        order = []
        for w in range(1, n_waves + 1):
            block = [x for x in x_labels if wave_of[x] == w]
            order.extend(block[i] for i in rng.permutation(len(block)))
        return order

    base = wave_major_order()
    shared = {(u, v) for i, u in enumerate(base) for v in base[i + 1:] if rng.random() < edge_prob}

    component_edges = []
    for _ in range(q):
        graph = nx.DiGraph(shared)
        graph.add_nodes_from(x_labels)
        order = wave_major_order()
        for i, u in enumerate(order):
            for v in order[i + 1:]:
                if (u, v) in shared or (v, u) in shared or rng.random() >= varying_prob:
                    continue
                if not nx.has_path(graph, v, u):
                    graph.add_edge(u, v)
        component_edges.append(set(graph.edges))

    parent_sets = [{x: frozenset(u for u, v in edges if v == x) for x in x_labels} for edges in component_edges]
    t_children = {x for x in x_labels if len({ps[x] for ps in parent_sets}) > 1}
    t_children |= {x for x in x_labels if rng.random() < mechanism_prob}

    roles = {o: Role.OBSERVED.value for o in observed}
    roles.update({x: Role.LATENT.value for x in latent})
    roles.update({x: Role.SELECTION.value for x in selection})
    roles["T1"] = Role.MIXTURE.value
    vertices = make_vertices(roles, roles, {o: wave_of[o] for o in observed})
    components = [Dag(vertices, edges | {("T1", x) for x in t_children}) for edges in component_edges]
    return MixtureGraph(components, ["T1"])


def waves_consistent(m: MixtureGraph) -> bool:
    """No observed vertex of a later wave is an ancestor of one in an earlier wave"""
    fused = build_fused_graph(m)
    waves = m.waves()
    for o in m.observed:
        for a in ancestors(fused, {o}) & set(waves):
            if waves[a] > waves[o]:
                return False
    return True
