"""
Core graph types for mixture-of-DAGs causal discovery
Directed graphs, mixed graphs with endpoint marks, ancestors and d-separation
"""
import logging
import re
from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import networkx as nx

logger = logging.getLogger(__name__)

Edge = Tuple[str, str]


class InputError(ValueError):
    """Malformed graph, query, file or configuration"""


class Role(str, Enum):
    OBSERVED = "observed"
    LATENT = "latent"
    SELECTION = "selection"
    MIXTURE = "mixture"


@dataclass(frozen=True)
class VertexId:
    index: int
    label: str
    role: Role = Role.OBSERVED
    wave: Optional[int] = None


def label_key(label: str):
    """Natural sort key, so X2 sorts before X10"""
    parts = re.split(r"(\d+)", label)
    return tuple(int(p) if i % 2 else p for i, p in enumerate(parts))


def canonical_labels(labels: Iterable[str]) -> List[str]:
    return sorted(set(labels), key=label_key)


def make_vertices(labels: Iterable[str], roles: Optional[Dict[str, str]] = None,
                  waves: Optional[Dict[str, int]] = None) -> List[VertexId]:
    """Build VertexIds in canonical label order"""
    roles = roles or {}
    waves = waves or {}
    vertices = []
    for index, label in enumerate(canonical_labels(labels)):
        role = Role(roles.get(label, Role.OBSERVED))
        wave = waves.get(label)
        vertices.append(VertexId(index, label, role, int(wave) if wave is not None else None))
    return vertices


class DirectedGraph:
    """Directed graph over labelled vertices; cycles allowed"""

    def __init__(self, vertices: Iterable[VertexId], edges: Iterable[Edge]):
        self.vertices: List[VertexId] = sorted(vertices, key=lambda v: v.index)
        self._by_label: Dict[str, VertexId] = {}
        for v in self.vertices:
            if v.label in self._by_label:
                raise InputError(f"Duplicate vertex label: {v.label}")
            self._by_label[v.label] = v
        if len({v.index for v in self.vertices}) != len(self.vertices):
            raise InputError("Vertex indices must be unique")

        self._graph = nx.DiGraph()
        self._graph.add_nodes_from(v.label for v in self.vertices)
        for u, w in edges:
            self._check_known([u, w])
            if u == w:
                raise InputError(f"Self-edge on {u} is not allowed")
            self._graph.add_edge(u, w)

        self._parents = {v: frozenset(self._graph.predecessors(v)) for v in self._graph.nodes}
        self._children = {v: frozenset(self._graph.successors(v)) for v in self._graph.nodes}

    def _check_known(self, labels: Iterable[str]):
        unknown = [x for x in labels if x not in self._by_label]
        if unknown:
            raise InputError(f"Unknown vertex id(s): {sorted(unknown)}")

    @property
    def labels(self) -> List[str]:
        return [v.label for v in self.vertices]

    @property
    def edges(self) -> FrozenSet[Edge]:
        return frozenset(self._graph.edges)

    def sorted_edges(self) -> List[Edge]:
        order = {v.label: v.index for v in self.vertices}
        return sorted(self._graph.edges, key=lambda e: (order[e[0]], order[e[1]]))

    def vertex(self, label: str) -> VertexId:
        self._check_known([label])
        return self._by_label[label]

    def has_vertex(self, label: str) -> bool:
        return label in self._by_label

    def has_edge(self, u: str, v: str) -> bool:
        return self._graph.has_edge(u, v)

    def parents(self, v: str) -> FrozenSet[str]:
        return self._parents[v]

    def children(self, v: str) -> FrozenSet[str]:
        return self._children[v]

    def labels_with_role(self, *roles: Role) -> List[str]:
        return [v.label for v in self.vertices if v.role in roles]

    def to_networkx(self) -> nx.DiGraph:
        return self._graph.copy()

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self.vertices == other.vertices and self.edges == other.edges

    def __repr__(self):
        return f"{type(self).__name__}({len(self.vertices)} vertices, {self._graph.number_of_edges()} edges)"


class Dag(DirectedGraph):
    """Directed acyclic graph; construction rejects cycles"""

    def __init__(self, vertices: Iterable[VertexId], edges: Iterable[Edge]):
        super().__init__(vertices, edges)
        if not nx.is_directed_acyclic_graph(self._graph):
            cycle = nx.find_cycle(self._graph)
            raise InputError(f"Edge set contains a directed cycle: {cycle}")

    @classmethod
    def from_edges(cls, edges: Iterable[Edge], labels: Iterable[str] = (),
                   roles: Optional[Dict[str, str]] = None,
                   waves: Optional[Dict[str, int]] = None) -> "Dag":
        edges = list(edges)
        all_labels = set(labels) | {x for e in edges for x in e}
        if roles:
            all_labels |= set(roles)
        return cls(make_vertices(all_labels, roles, waves), edges)

    def with_edge(self, u: str, v: str) -> "Dag":
        """Return a copy with one more edge; raises InputError if it closes a cycle"""
        return Dag(self.vertices, list(self.edges) + [(u, v)])

    def topological_order(self) -> List[str]:
        order = {v.label: v.index for v in self.vertices}
        return list(nx.lexicographical_topological_sort(self._graph, key=lambda x: order[x]))

    def with_roles(self, roles: Dict[str, Role]) -> "Dag":
        vertices = [replace(v, role=Role(roles.get(v.label, v.role))) for v in self.vertices]
        return Dag(vertices, self.edges)


def ancestors(g: DirectedGraph, ys: Iterable[str]) -> Set[str]:
    """Reflexive ancestor set of ys"""
    ys = set(ys)
    g._check_known(ys)
    result = set(ys)
    stack = list(ys)
    while stack:
        v = stack.pop()
        for p in g.parents(v):
            if p not in result:
                result.add(p)
                stack.append(p)
    return result


def _check_query(g: DirectedGraph, a: Set[str], b: Set[str], c: Set[str]):
    g._check_known(a | b | c)
    if a & b or a & c or b & c:
        raise InputError(f"Vertex sets must be disjoint: a={sorted(a)}, b={sorted(b)}, c={sorted(c)}")


def d_separated_paths(g: DirectedGraph, a: Iterable[str], b: Iterable[str], c: Iterable[str]) -> bool:
    """
    Reachability test for active trails from a given c.
    A collider passes when it is an ancestor of c, a non-collider when it is not in c.
    """
    a, b, c = set(a), set(b), set(c)
    _check_query(g, a, b, c)
    if not a or not b:
        return True

    anc_c = ancestors(g, c)
    # 'up' = entered from a child, 'down' = entered from a parent
    frontier = [(x, "up") for x in a]
    visited = set()
    while frontier:
        v, direction = frontier.pop()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v not in c and v in b:
            return False

        if direction == "up":
            if v not in c:
                frontier.extend((p, "up") for p in g.parents(v))
                frontier.extend((ch, "down") for ch in g.children(v))
        else:
            if v not in c:
                frontier.extend((ch, "down") for ch in g.children(v))
            if v in anc_c:
                frontier.extend((p, "up") for p in g.parents(v))
    return True


def d_separated_moral(g: DirectedGraph, a: Iterable[str], b: Iterable[str], c: Iterable[str]) -> bool:
    """Separation of a and b by c in the moral graph of the smallest ancestral set"""
    a, b, c = set(a), set(b), set(c)
    _check_query(g, a, b, c)
    if not a or not b:
        return True

    ancestral = ancestors(g, a | b | c)
    moral = nx.moral_graph(g.to_networkx().subgraph(ancestral))
    moral.remove_nodes_from(c)
    for component in nx.connected_components(moral):
        if component & a and component & b:
            return False
    return True


SeparationDecider = Callable[..., bool]


def minimal_separating_set_check(g, oi: str, oj: str, w: Iterable[str], s: Iterable[str] = (),
                                 separated: SeparationDecider = d_separated_paths) -> bool:
    """True iff w ∪ s separates oi and oj and no proper subset of w (with s fixed) does"""
    w, s = set(w), set(s)
    if oi in w | s or oj in w | s:
        raise InputError(f"{oi} and {oj} must not be in the conditioning set")
    if not separated(g, {oi}, {oj}, w | s):
        return False
    members = sorted(w, key=label_key)
    for size in range(len(members)):
        for subset in combinations(members, size):
            if separated(g, {oi}, {oj}, set(subset) | s):
                return False
    return True


class EndpointMark(str, Enum):
    TAIL = "tail"
    ARROW = "arrow"
    CIRCLE = "circle"


class MixedGraph:
    """
    Partially oriented graph: at most one edge per vertex pair,
    each edge carrying one mark per endpoint.
    """

    def __init__(self, vertices: Iterable[VertexId]):
        self.vertices: List[VertexId] = sorted(vertices, key=lambda v: v.index)
        self._by_label = {v.label: v for v in self.vertices}
        if len(self._by_label) != len(self.vertices):
            raise InputError("Duplicate vertex label in mixed graph")
        self._order = {v.label: v.index for v in self.vertices}
        self._adjacent: Dict[str, Set[str]] = {v.label: set() for v in self.vertices}
        # (u, v) -> mark at v on the edge u–v
        self._marks: Dict[Edge, EndpointMark] = {}

    @classmethod
    def complete(cls, vertices: Iterable[VertexId], mark: EndpointMark = EndpointMark.CIRCLE) -> "MixedGraph":
        graph = cls(vertices)
        for u, v in combinations(graph.labels, 2):
            graph.add_edge(u, v, mark, mark)
        return graph

    @property
    def labels(self) -> List[str]:
        return [v.label for v in self.vertices]

    def vertex(self, label: str) -> VertexId:
        self._check_known([label])
        return self._by_label[label]

    def wave(self, label: str) -> Optional[int]:
        return self.vertex(label).wave

    def _check_known(self, labels: Iterable[str]):
        unknown = [x for x in labels if x not in self._by_label]
        if unknown:
            raise InputError(f"Unknown vertex id(s): {sorted(unknown)}")

    def sort(self, labels: Iterable[str]) -> List[str]:
        return sorted(labels, key=self._order.__getitem__)

    def add_edge(self, u: str, v: str, mark_u: EndpointMark, mark_v: EndpointMark):
        self._check_known([u, v])
        if u == v:
            raise InputError(f"Self-edge on {u} is not allowed")
        if v in self._adjacent[u]:
            raise InputError(f"Edge {u}–{v} already present")
        self._adjacent[u].add(v)
        self._adjacent[v].add(u)
        self._marks[(v, u)] = EndpointMark(mark_u)
        self._marks[(u, v)] = EndpointMark(mark_v)

    def remove_edge(self, u: str, v: str):
        if not self.is_adjacent(u, v):
            raise InputError(f"No edge {u}–{v}")
        self._adjacent[u].discard(v)
        self._adjacent[v].discard(u)
        del self._marks[(u, v)]
        del self._marks[(v, u)]

    def is_adjacent(self, u: str, v: str) -> bool:
        return v in self._adjacent.get(u, ())

    def adjacent(self, v: str) -> List[str]:
        self._check_known([v])
        return self.sort(self._adjacent[v])

    def mark_at(self, vertex: str, other: str) -> EndpointMark:
        """Mark at `vertex` on the edge between `vertex` and `other`"""
        if not self.is_adjacent(vertex, other):
            raise InputError(f"No edge {other}–{vertex}")
        return self._marks[(other, vertex)]

    def set_mark(self, vertex: str, other: str, mark: EndpointMark):
        if not self.is_adjacent(vertex, other):
            raise InputError(f"No edge {other}–{vertex}")
        self._marks[(other, vertex)] = EndpointMark(mark)

    def edges(self) -> List[Edge]:
        """Edges as (u, v) pairs with u before v in canonical order"""
        pairs = [(u, v) for u in self.labels for v in self._adjacent[u] if self._order[u] < self._order[v]]
        return sorted(pairs, key=lambda e: (self._order[e[0]], self._order[e[1]]))

    def skeleton(self) -> FrozenSet[FrozenSet[str]]:
        return frozenset(frozenset(e) for e in self.edges())

    def endpoints(self) -> Dict[Edge, EndpointMark]:
        """(other, vertex) -> mark at vertex"""
        return dict(self._marks)

    def copy(self) -> "MixedGraph":
        graph = MixedGraph(self.vertices)
        for u, v in self.edges():
            graph.add_edge(u, v, self.mark_at(u, v), self.mark_at(v, u))
        return graph

    def __eq__(self, other):
        if not isinstance(other, MixedGraph):
            return NotImplemented
        return self.labels == other.labels and self._marks == other._marks

    def __repr__(self):
        return f"MixedGraph({len(self.vertices)} vertices, {len(self._marks) // 2} edges)"
