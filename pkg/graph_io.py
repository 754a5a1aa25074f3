"""
Text and JSON formats for graphs, mixtures, waves and prior knowledge
Every writer sorts its output so the same object always produces the same bytes
"""
import json
import os
import re
from typing import Dict, Iterable, List, Optional, Tuple

from cim import PriorKnowledge, WaveAssignment
from graph_core import (
    Dag, DirectedGraph, EndpointMark, InputError, MixedGraph, Role, VertexId, canonical_labels, make_vertices,
)
from mixture import EndpointTruth, GroundTruthMixed, MixtureGraph

LEFT_MARKS = {EndpointMark.TAIL: "-", EndpointMark.ARROW: "<", EndpointMark.CIRCLE: "o"}
RIGHT_MARKS = {EndpointMark.TAIL: "-", EndpointMark.ARROW: ">", EndpointMark.CIRCLE: "o"}
_LEFT_PARSE = {c: m for m, c in LEFT_MARKS.items()}
_RIGHT_PARSE = {c: m for m, c in RIGHT_MARKS.items()}

_VERTEX_LINE = re.compile(r"^vertex\s+(\S+)\s+role=(\w+)\s+wave=(\d+|-)$")
_DIRECTED_LINE = re.compile(r"^(\S+)\s+->\s+(\S+)$")
_MIXED_LINE = re.compile(r"^(\S+)\s+([-<o])-([->o])\s+(\S+)$")
_SKELETON_DIRECTIVE = "# truth skeleton_defined="


def _ensure_parent(path: str):
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)


def _vertex_lines(vertices: Iterable[VertexId]) -> List[str]:
    return [
        f"vertex {v.label} role={v.role.value} wave={v.wave if v.wave is not None else '-'}"
        for v in vertices
    ]


def _read_lines(path: str) -> List[Tuple[int, str]]:
    if not os.path.exists(path):
        raise InputError(f"File not found: {path}")
    with open(path) as f:
        return [(n, line.strip()) for n, line in enumerate(f, start=1)]


def _parse_vertex(n: int, line: str, path: str) -> Tuple[str, str, Optional[int]]:
    match = _VERTEX_LINE.match(line)
    if not match:
        raise InputError(f"{path}:{n}: malformed vertex line '{line}'")
    label, role, wave = match.groups()
    try:
        Role(role)
    except ValueError:
        raise InputError(f"{path}:{n}: unknown role '{role}'")
    return label, role, None if wave == "-" else int(wave)


def format_directed_graph(g: DirectedGraph) -> str:
    lines = _vertex_lines(g.vertices)
    lines += [f"{u} -> {v}" for u, v in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def write_directed_graph(g: DirectedGraph, path: str):
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write(format_directed_graph(g))


def read_directed_graph(path: str, acyclic: bool = True) -> DirectedGraph:
    """Edge-list text: optional vertex lines then one `A -> B` line per edge"""
    roles, waves, labels, edges = {}, {}, [], []
    for n, line in _read_lines(path):
        if not line or line.startswith("#"):
            continue
        if line.startswith("vertex "):
            label, role, wave = _parse_vertex(n, line, path)
            roles[label] = role
            if wave is not None:
                waves[label] = wave
            labels.append(label)
            continue
        match = _DIRECTED_LINE.match(line)
        if not match:
            raise InputError(f"{path}:{n}: expected 'A -> B', got '{line}'")
        edges.append(match.groups())
    labels += [x for e in edges for x in e]
    vertices = make_vertices(labels, roles, waves)
    return Dag(vertices, edges) if acyclic else DirectedGraph(vertices, edges)


def format_mixed_graph(g: MixedGraph, skeleton_defined: Optional[bool] = None) -> str:
    lines = []
    if skeleton_defined is not None:
        lines.append(f"{_SKELETON_DIRECTIVE}{str(skeleton_defined).lower()}")
    lines += _vertex_lines(g.vertices)
    for u, v in g.edges():
        lines.append(f"{u} {LEFT_MARKS[g.mark_at(u, v)]}-{RIGHT_MARKS[g.mark_at(v, u)]} {v}")
    return "\n".join(lines) + "\n"


def write_mixed_graph(g: MixedGraph, path: str, skeleton_defined: Optional[bool] = None):
    _ensure_parent(path)
    with open(path, "w") as f:
        f.write(format_mixed_graph(g, skeleton_defined))


def _parse_mixed(path: str) -> Tuple[MixedGraph, Optional[bool]]:
    roles, waves, labels, edges = {}, {}, [], []
    skeleton_defined = None
    for n, line in _read_lines(path):
        if line.startswith(_SKELETON_DIRECTIVE):
            skeleton_defined = line[len(_SKELETON_DIRECTIVE):] == "true"
            continue
        if not line or line.startswith("#"):
            continue
        if line.startswith("vertex "):
            label, role, wave = _parse_vertex(n, line, path)
            roles[label] = role
            if wave is not None:
                waves[label] = wave
            labels.append(label)
            continue
        match = _MIXED_LINE.match(line)
        if not match:
            raise InputError(f"{path}:{n}: expected an edge such as 'A o-> B', got '{line}'")
        u, left, right, v = match.groups()
        edges.append((u, _LEFT_PARSE[left], _RIGHT_PARSE[right], v))
    labels += [x for u, _, _, v in edges for x in (u, v)]
    g = MixedGraph(make_vertices(labels, roles, waves))
    for u, mark_u, mark_v, v in edges:
        g.add_edge(u, v, mark_u, mark_v)
    return g, skeleton_defined


def read_mixed_graph(path: str) -> MixedGraph:
    return _parse_mixed(path)[0]


def write_ground_truth(truth: GroundTruthMixed, path: str):
    write_mixed_graph(truth.graph, path, skeleton_defined=truth.skeleton_defined)


def read_ground_truth(path: str) -> GroundTruthMixed:
    """Truth marks from a mixed-graph file; only the marks written in the file are scored"""
    g, skeleton_defined = _parse_mixed(path)
    truth = {}
    for u, v in g.edges():
        for vertex, other in ((u, v), (v, u)):
            mark = g.mark_at(vertex, other)
            if mark == EndpointMark.CIRCLE:
                raise InputError(f"{path}: truth files cannot contain circle marks ({other}–{vertex})")
            truth[(other, vertex)] = EndpointTruth(
                mark, arrow_allowed=mark == EndpointMark.ARROW, tail_allowed=mark == EndpointMark.TAIL
            )
    return GroundTruthMixed(g, truth, skeleton_defined=skeleton_defined is not False)


def mixture_to_dict(m: MixtureGraph) -> dict:
    return {
        "components": [[list(e) for e in comp.sorted_edges()] for comp in m.components],
        "t": list(m.t_names),
        "roles": m.roles(),
        "waves": m.waves(),
    }


def mixture_from_dict(data: dict) -> MixtureGraph:
    try:
        components = data["components"]
        t_names = data.get("t", [])
        roles = dict(data.get("roles", {}))
        waves = {k: int(v) for k, v in data.get("waves", {}).items()}
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"Malformed mixture description: {e}")
    if not isinstance(components, list) or not components:
        raise InputError("Mixture description needs a non-empty 'components' list")
    for t in t_names:
        roles.setdefault(t, Role.MIXTURE.value)
    labels = set(roles) | set(waves) | {x for comp in components for e in comp for x in e}
    vertices = make_vertices(labels, roles, waves)
    dags = []
    for j, comp in enumerate(components, start=1):
        if any(len(e) != 2 for e in comp):
            raise InputError(f"Component {j}: every edge must be a [parent, child] pair")
        dags.append(Dag(vertices, [tuple(e) for e in comp]))
    return MixtureGraph(dags, t_names)


def read_mixture(path: str) -> MixtureGraph:
    return mixture_from_dict(_read_json(path))


def write_mixture(m: MixtureGraph, path: str):
    write_json(mixture_to_dict(m), path)


def read_waves(path: str) -> WaveAssignment:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise InputError(f"{path}: waves file must map column -> wave")
    return WaveAssignment(data)


def write_waves(waves: Dict[str, int], path: str):
    write_json({k: int(waves[k]) for k in canonical_labels(waves)}, path)


def read_prior(path: str) -> PriorKnowledge:
    data = _read_json(path)
    if not isinstance(data, list):
        raise InputError(f"{path}: prior knowledge must be a list of {{'not_ancestor', 'of'}} objects")
    try:
        return PriorKnowledge.from_pairs((item["not_ancestor"], item["of"]) for item in data)
    except (KeyError, TypeError):
        raise InputError(f"{path}: every prior entry needs 'not_ancestor' and 'of'")


def write_prior(pk: PriorKnowledge, path: str):
    write_json([{"not_ancestor": a, "of": b} for a, b in sorted(pk.forbidden)], path)


def _read_json(path: str):
    if not os.path.exists(path):
        raise InputError(f"File not found: {path}")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: invalid JSON ({e})")


def write_json(data, path: str):
    _ensure_parent(path)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
