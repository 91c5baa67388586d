"""AMP chain graphs: representation, structural checks, orders and SHD.

Vertices are dense 0-based integers. A graph stores its chain components as
sorted vertex tuples; a component's index is its position in
``ChainGraph.components``. Directed edges run between components, undirected
edges stay inside one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Sequence

__all__ = [
    "ChainGraph",
    "ValidationReport",
    "validate",
    "parents_of",
    "component_parents",
    "topological_orders",
    "is_topological",
    "is_ancestral",
    "edge_status",
    "shd",
]

# pair status codes used by shd; the pair is always read as (u, v) with u < v
NONE, FORWARD, BACKWARD, UNDIRECTED = 0, 1, 2, 3


def _undirected_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class ChainGraph:
    """Immutable chain graph.

    The plain constructor only normalizes its inputs so that malformed graphs
    can still be built and handed to :func:`validate`. Use
    :meth:`from_edges` to build a graph whose components are checked against
    undirected connectivity.
    """

    n_vertices: int
    components: tuple[tuple[int, ...], ...]
    directed_edges: frozenset[tuple[int, int]] = frozenset()
    undirected_edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "n_vertices", int(self.n_vertices))
        object.__setattr__(
            self, "components", tuple(tuple(sorted(int(v) for v in c)) for c in self.components)
        )
        object.__setattr__(
            self, "directed_edges", frozenset((int(u), int(v)) for u, v in self.directed_edges)
        )
        object.__setattr__(
            self,
            "undirected_edges",
            frozenset(_undirected_key(int(u), int(v)) for u, v in self.undirected_edges),
        )

    @classmethod
    def from_edges(
        cls,
        n_vertices: int,
        directed_edges: Iterable[Sequence[int]] = (),
        undirected_edges: Iterable[Sequence[int]] = (),
        components: Iterable[Iterable[int]] | None = None,
    ) -> "ChainGraph":
        """Build a graph whose components are the undirected connected components.

        When ``components`` is given it must describe the same partition
        (order may differ and is kept); otherwise a ``ValueError`` is raised.
        Without it, components are ordered by their smallest vertex.
        """
        undirected = [tuple(e) for e in undirected_edges]
        found = _connected_components(n_vertices, undirected)
        if components is None:
            comps = found
        else:
            comps = [tuple(sorted(c)) for c in components]
            if sorted(comps) != sorted(found):
                raise ValueError(
                    "declared components disagree with undirected connectivity: "
                    f"declared {sorted(comps)}, connected {sorted(found)}"
                )
        return cls(n_vertices, tuple(comps), frozenset(map(tuple, directed_edges)), frozenset(undirected))

    @cached_property
    def component_of(self) -> dict[int, int]:
        """Map from vertex to the index of its component."""
        return {v: i for i, comp in enumerate(self.components) for v in comp}

    @property
    def n_components(self) -> int:
        return len(self.components)

    @cached_property
    def component_edges(self) -> frozenset[tuple[int, int]]:
        """Directed edges of the contracted graph (component indices)."""
        cof = self.component_of
        return frozenset((cof[u], cof[v]) for u, v in self.directed_edges)

    def to_dict(self) -> dict:
        return {
            "n": self.n_vertices,
            "components": [list(c) for c in self.components],
            "directed_edges": [list(e) for e in sorted(self.directed_edges)],
            "undirected_edges": [list(e) for e in sorted(self.undirected_edges)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainGraph":
        return cls.from_edges(
            data["n"],
            data.get("directed_edges", ()),
            data.get("undirected_edges", ()),
            components=data["components"],
        )


def _connected_components(n: int, undirected: Iterable[Sequence[int]]) -> list[tuple[int, ...]]:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in undirected:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"undirected edge ({u}, {v}) out of range for n={n}")
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return sorted(tuple(g) for g in groups.values())


class ValidationReport(NamedTuple):
    ok: bool
    invariant: str | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok


def validate(graph: ChainGraph) -> ValidationReport:
    """Check every ChainGraph invariant; report the first one violated.

    Invariants are checked in this order: ``partition``, ``edges``,
    ``connected``, ``acyclic``.
    """
    n = graph.n_vertices
    seen: set[int] = set()
    for i, comp in enumerate(graph.components):
        if not comp:
            return ValidationReport(False, "partition", f"component {i} is empty")
        for v in comp:
            if not 0 <= v < n:
                return ValidationReport(False, "partition", f"vertex {v} out of range")
            if v in seen:
                return ValidationReport(False, "partition", f"vertex {v} appears twice")
            seen.add(v)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        return ValidationReport(False, "partition", f"vertices {missing} not covered")

    cof = graph.component_of
    for u, v in sorted(graph.directed_edges):
        if u not in cof or v not in cof:
            return ValidationReport(False, "edges", f"directed edge {u}->{v} out of range")
        if cof[u] == cof[v]:
            return ValidationReport(False, "edges", f"directed edge {u}->{v} inside component {cof[u]}")
    for u, v in sorted(graph.undirected_edges):
        if u not in cof or v not in cof:
            return ValidationReport(False, "edges", f"undirected edge {u}-{v} out of range")
        if u == v:
            return ValidationReport(False, "edges", f"undirected self-loop at {u}")
        if cof[u] != cof[v]:
            return ValidationReport(False, "edges", f"undirected edge {u}-{v} spans two components")

    for i, comp in enumerate(graph.components):
        inner = [e for e in graph.undirected_edges if cof[e[0]] == i]
        local = {v: k for k, v in enumerate(comp)}
        pieces = _connected_components(len(comp), [(local[a], local[b]) for a, b in inner])
        if len(pieces) > 1:
            return ValidationReport(False, "connected", f"component {i} {list(comp)} is not connected")

    if _topological_sort(graph.n_components, graph.component_edges) is None:
        return ValidationReport(False, "acyclic", "components contain a semi-directed cycle")
    return ValidationReport(True)


def _topological_sort(n: int, edges: Iterable[tuple[int, int]]) -> list[int] | None:
    indeg = [0] * n
    children: list[list[int]] = [[] for _ in range(n)]
    for a, b in set(edges):
        if a == b:
            return None
        children[a].append(b)
        indeg[b] += 1
    ready = [i for i in range(n) if indeg[i] == 0]
    out = []
    while ready:
        ready.sort()
        i = ready.pop(0)
        out.append(i)
        for j in children[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    return out if len(out) == n else None


def _check_index(graph: ChainGraph, index: int) -> None:
    if not 0 <= index < graph.n_components:
        raise ValueError(f"component index {index} out of range [0, {graph.n_components})")


def parents_of(graph: ChainGraph, component_index: int) -> frozenset[int]:
    """Vertices outside the component with a directed edge into it."""
    _check_index(graph, component_index)
    members = set(graph.components[component_index])
    return frozenset(u for u, v in graph.directed_edges if v in members and u not in members)


def component_parents(graph: ChainGraph, component_index: int) -> frozenset[int]:
    """Indices of the components that contain a parent of the component."""
    _check_index(graph, component_index)
    return frozenset(a for a, b in graph.component_edges if b == component_index)


def topological_orders(graph: ChainGraph) -> Iterator[tuple[int, ...]]:
    """Yield every topological order of the components, lexicographically."""
    n = graph.n_components
    preds = [set() for _ in range(n)]
    for a, b in graph.component_edges:
        preds[b].add(a)
    placed: list[int] = []
    used = [False] * n

    def extend():
        if len(placed) == n:
            yield tuple(placed)
            return
        done = set(placed)
        for i in range(n):
            if not used[i] and preds[i] <= done:
                used[i] = True
                placed.append(i)
                yield from extend()
                placed.pop()
                used[i] = False

    yield from extend()


def is_topological(graph: ChainGraph, order: Sequence[int]) -> bool:
    """True iff ``order`` is a permutation of component indices respecting every edge."""
    if sorted(order) != list(range(graph.n_components)):
        return False
    position = {c: i for i, c in enumerate(order)}
    cof = graph.component_of
    return all(position[cof[u]] < position[cof[v]] for u, v in graph.directed_edges)


def is_ancestral(graph: ChainGraph, component_set: Iterable[int]) -> bool:
    comps = set(component_set)
    for c in comps:
        _check_index(graph, c)
    inside = {v for c in comps for v in graph.components[c]}
    return all(parents_of(graph, c) <= inside for c in comps)


def edge_status(graph: ChainGraph) -> dict[tuple[int, int], int]:
    """Non-empty pair statuses keyed by (u, v) with u < v."""
    table: dict[tuple[int, int], int] = {}
    for u, v in graph.directed_edges:
        if u < v:
            table[(u, v)] = FORWARD
        else:
            table[(v, u)] = BACKWARD
    for e in graph.undirected_edges:
        table[e] = UNDIRECTED
    return table


def shd(g1: ChainGraph, g2: ChainGraph) -> int:
    """Structural Hamming distance: number of vertex pairs whose status differs.

    Status is one of none, u->v, v->u, undirected; every differing pair costs
    one unit whatever the kind of difference.
    """
    if g1.n_vertices != g2.n_vertices:
        raise ValueError(f"vertex counts differ: {g1.n_vertices} vs {g2.n_vertices}")
    s1, s2 = edge_status(g1), edge_status(g2)
    return sum(1 for pair in s1.keys() | s2.keys() if s1.get(pair, NONE) != s2.get(pair, NONE))
