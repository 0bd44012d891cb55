"""Causal DAG model: validation, super-source augmentation, explanation
boundaries and source-to-sink paths."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import (
    AlreadyAugmented,
    MissingSource,
    ArityMismatch,
    CycleDetected,
    DeadNode,
    DomainError,
    GraphError,
    MultipleSinks,
    SizeLimitExceeded,
    UnknownEdge,
    UnknownParent,
)
from .functions import FunctionSpec

SUPER_SOURCE = "S*"
KINDS = ("source", "internal", "sink", "super")
BOUNDARY_CAP = 10_000

Edge = tuple  # (tail id, head id)
Path = tuple  # tuple of edges, first leaving a root, last entering the sink


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str = None
    parents: tuple = ()
    function: FunctionSpec = None
    is_noise: bool = False
    domain: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        if self.domain is not None:
            object.__setattr__(self, "domain", tuple(self.domain))

    @property
    def exogenous(self) -> bool:
        """True for nodes whose value comes from the sample, not a function."""
        return self.kind in ("source", "super")


@dataclass(frozen=True)
class Boundary:
    data_side: frozenset
    model_side: frozenset
    cut: tuple

    def __contains__(self, edge):
        return edge in self.cut


class CausalGraph:
    """Immutable, validated DAG with a single sink.

    Parent order is kept for argument binding only. Children are listed in
    node-id order, and every deterministic tie-break uses node ids.
    """

    def __init__(self, nodes: Iterable[NodeSpec], sink: str = None):
        nodes = list(nodes)
        by_id = {}
        for n in nodes:
            if n.id in by_id:
                raise GraphError(f"duplicate node id {n.id!r}")
            by_id[n.id] = n
        for n in nodes:
            if len(set(n.parents)) != len(n.parents):
                raise GraphError(f"node {n.id!r} lists a parent twice")
            for p in n.parents:
                if p not in by_id:
                    raise UnknownParent(n.id, p)

        children = {n.id: [] for n in nodes}
        for n in nodes:
            for p in n.parents:
                children[p].append(n.id)
        self._children = {k: tuple(sorted(v)) for k, v in children.items()}
        self._order = _toposort(by_id, self._children)

        childless = [n.id for n in nodes if not self._children[n.id]]
        if len(childless) != 1:
            raise MultipleSinks(childless)
        if sink is None:
            sink = childless[0]
        if sink not in by_id:
            raise GraphError(f"declared sink {sink!r} is not a node")
        if childless[0] != sink:
            raise GraphError(f"declared sink {sink!r} has outgoing edges")
        self.sink = sink

        supers = [n.id for n in nodes if n.kind == "super"]
        if len(supers) > 1:
            raise GraphError("at most one super-source is allowed")
        super_id = supers[0] if supers else None

        resolved = []
        for n in nodes:
            resolved.append(_resolve_kind(n, sink, super_id, self._children[n.id], by_id))
        self._nodes = tuple(resolved)
        self._by_id = {n.id: n for n in resolved}
        self.super_source = super_id

        on_path = set(self._ancestors(sink)) | {sink}
        dead = [n.id for n in nodes if n.id not in on_path]
        if dead or (len(nodes) == 1):
            raise DeadNode(dead or [sink])

        self.edges = tuple((p, n.id) for n in self._nodes for p in n.parents)
        self._edge_set = frozenset(self.edges)

    # -- basic queries -------------------------------------------------

    @property
    def nodes(self) -> tuple:
        return self._nodes

    @property
    def node_ids(self) -> tuple:
        return tuple(n.id for n in self._nodes)

    def node(self, node_id) -> NodeSpec:
        return self._by_id[node_id]

    def __contains__(self, node_id):
        return node_id in self._by_id

    def __len__(self):
        return len(self._nodes)

    def parents(self, node_id) -> tuple:
        return self._by_id[node_id].parents

    def children(self, node_id) -> tuple:
        return self._children[node_id]

    def has_edge(self, edge) -> bool:
        return tuple(edge) in self._edge_set

    @property
    def roots(self) -> tuple:
        """Nodes without parents (the super-source alone, once augmented)."""
        return tuple(n.id for n in self._nodes if not n.parents)

    @property
    def sources(self) -> tuple:
        """Exogenous variables that take their values from samples."""
        return tuple(n.id for n in self._nodes if n.kind == "source")

    @property
    def is_augmented(self) -> bool:
        return self.super_source is not None

    def topological_order(self) -> list:
        return list(self._order)

    def _ancestors(self, node_id):
        seen, stack = set(), [node_id]
        while stack:
            for p in self._by_id[stack.pop()].parents:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def descendants(self, node_id) -> set:
        seen, stack = set(), [node_id]
        while stack:
            for c in self._children[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def replace_nodes(self, nodes: Iterable[NodeSpec]) -> "CausalGraph":
        return CausalGraph(nodes, self.sink)

    def __repr__(self):
        return f"CausalGraph({len(self._nodes)} nodes, {len(self.edges)} edges, sink={self.sink!r})"


def _resolve_kind(n, sink, super_id, children, by_id):
    if n.kind is not None and n.kind not in KINDS:
        raise GraphError(f"node {n.id!r} has unknown kind {n.kind!r}")
    if n.kind == "super":
        if n.parents or n.function is not None:
            raise GraphError("the super-source has no parents and no function")
        return n
    if n.function is None:
        if n.parents and n.parents != (super_id,):
            raise GraphError(f"non-source node {n.id!r} has no function")
        kind = "source"
    else:
        if n.function.arity != len(n.parents):
            raise ArityMismatch(len(n.parents), n.function.arity, f"node {n.id!r}")
        kind = "sink" if n.id == sink else "internal"
    if n.kind is not None and n.kind != kind:
        raise GraphError(f"node {n.id!r} declared {n.kind!r} but is structurally {kind!r}")
    if n.is_noise and kind != "source":
        raise GraphError(f"noise node {n.id!r} must be a source")
    if kind == n.kind:
        return n
    return NodeSpec(n.id, kind, n.parents, n.function, n.is_noise, n.domain)


def _toposort(by_id, children):
    indeg = {k: len(n.parents) for k, n in by_id.items()}
    heap = [k for k, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        k = heapq.heappop(heap)
        order.append(k)
        for c in children[k]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(by_id):
        raise CycleDetected(_find_cycle(by_id, set(by_id) - set(order)))
    return tuple(order)


def _find_cycle(by_id, remaining):
    # walk parents inside the unsorted remainder until a node repeats
    start = min(remaining)
    seen, walk, cur = {}, [], start
    while cur not in seen:
        seen[cur] = len(walk)
        walk.append(cur)
        cur = min(p for p in by_id[cur].parents if p in remaining)
    cycle = walk[seen[cur]:]
    cycle.reverse()
    return cycle + [cycle[0]]


# --------------------------------------------------------------------------


def build_graph(doc: Mapping) -> CausalGraph:
    """Build and validate a graph from its JSON document form.

    ``{"nodes": [{"id", "kind"?, "parents"?, "function"?, "domain"?, "noise"?}],
    "sink": "f"}``
    """
    from .functions import function_from_doc
    raw = list(doc["nodes"])
    domains = {n["id"]: n.get("domain") for n in raw}
    nodes = []
    for n in raw:
        parents = tuple(n.get("parents", ()))
        fn = None
        if n.get("function") is not None:
            pdoms = [domains.get(p) for p in parents]
            fn = function_from_doc(n["function"], parents,
                                   pdoms if any(d is not None for d in pdoms) else None)
        nodes.append(NodeSpec(n["id"], n.get("kind"), parents, fn,
                              bool(n.get("noise", False)), n.get("domain")))
    g = CausalGraph(nodes, doc.get("sink"))
    if g.node(g.sink).domain is not None:
        raise DomainError(f"sink {g.sink!r} declares a categorical domain; sink outputs must be real")
    return g


def graph_to_doc(g: CausalGraph, include_super=False) -> dict:
    from .functions import function_to_doc
    out = []
    for n in g.nodes:
        if n.kind == "super" and not include_super:
            continue
        parents = [p for p in n.parents if include_super or p != g.super_source]
        d = {"id": n.id, "kind": n.kind, "parents": parents}
        if n.function is not None:
            d["function"] = function_to_doc(n.function)
        if n.domain is not None:
            d["domain"] = list(n.domain)
        if n.is_noise:
            d["noise"] = True
        out.append(d)
    return {"nodes": out, "sink": g.sink}


def augment_super_source(g: CausalGraph) -> CausalGraph:
    """Add a synthetic root with one edge to each exogenous source."""
    if g.is_augmented:
        raise AlreadyAugmented("graph already has a super-source")
    if SUPER_SOURCE in g:
        raise GraphError(f"node id {SUPER_SOURCE!r} is reserved for the super-source")
    nodes = [NodeSpec(SUPER_SOURCE, "super")]
    for n in g.nodes:
        if n.kind == "source" and not n.parents:
            n = NodeSpec(n.id, "source", (SUPER_SOURCE,), None, n.is_noise, n.domain)
        nodes.append(n)
    return CausalGraph(nodes, g.sink)


def ensure_augmented(g: CausalGraph) -> CausalGraph:
    return g if g.is_augmented else augment_super_source(g)


def topological_order(g: CausalGraph) -> list:
    return g.topological_order()


def iter_boundaries(g: CausalGraph) -> Iterator[Boundary]:
    """Yield every explanation boundary once.

    The data side is grown along the topological order: a node may join it
    only when all of its parents already have, roots always do, and the sink
    never does.
    """
    order = g.topological_order()
    roots = set(g.roots)
    all_nodes = frozenset(order)

    def rec(k, data):
        if k == len(order):
            d = frozenset(data)
            f = all_nodes - d
            cut = tuple(sorted(e for e in g.edges if e[0] in d and e[1] in f))
            yield Boundary(d, f, cut)
            return
        v = order[k]
        parents_in = all(p in data for p in g.parents(v))
        if v in roots:
            data.append(v)
            yield from rec(k + 1, data)
            data.pop()
            return
        if v != g.sink and parents_in:
            data.append(v)
            yield from rec(k + 1, data)
            data.pop()
        yield from rec(k + 1, data)

    yield from rec(0, [])


def enumerate_boundaries(g: CausalGraph, cap: int = BOUNDARY_CAP) -> list:
    out = []
    for b in iter_boundaries(g):
        if len(out) >= cap:
            raise SizeLimitExceeded("boundary count", cap)
        out.append(b)
    return out


def all_paths(g: CausalGraph) -> list:
    """Every root-to-sink path, in lexicographic order of node ids."""
    out = []

    def rec(v, path):
        if v == g.sink:
            out.append(tuple(path))
            return
        for c in g.children(v):
            path.append((v, c))
            rec(c, path)
            path.pop()

    for r in sorted(g.roots):
        if r == g.sink:
            continue
        rec(r, [])
    return out


def paths_through(g: CausalGraph, edge) -> list:
    edge = tuple(edge)
    if not g.has_edge(edge):
        raise UnknownEdge(edge)
    return [p for p in all_paths(g) if edge in p]


def path_counts(g: CausalGraph) -> dict:
    """Number of root-to-node paths, i.e. how often DFS visits each node."""
    counts = {}
    for v in g.topological_order():
        ps = g.parents(v)
        counts[v] = 1 if not ps else sum(counts[p] for p in ps)
    return counts


def count_configurations(g: CausalGraph) -> int:
    """Number of DFS configurations: one child permutation per node visit."""
    counts = path_counts(g)
    total = 1
    for v in g.node_ids:
        k = len(g.children(v))
        if k > 1:
            total *= math.factorial(k) ** counts[v]
    return total


def forward_values(g: CausalGraph, sample: Mapping, do: Mapping = None) -> dict:
    """Evaluate every node from the source values in ``sample``.

    ``do`` pins nodes to given values (an intervention); their descendants
    are recomputed from the pinned values. Values supplied in ``sample`` for
    non-source nodes are ignored.
    """
    do = do or {}
    values = {}
    for v in g.topological_order():
        n = g.node(v)
        if v in do:
            values[v] = do[v]
        elif n.kind == "super":
            values[v] = None
        elif n.kind == "source":
            if v not in sample:
                raise MissingSource(v)
            values[v] = sample[v]
        else:
            values[v] = n.function.evaluate(tuple(values[p] for p in n.parents))
    return values
