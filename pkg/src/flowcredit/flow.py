"""Edge attribution by depth-first message passing.

Every node starts at its background value. A DFS from the super-source
fires edges one at a time: firing ``(u, v)`` shows ``u``'s current value to
``v``, which recomputes its function from the latest value received on each
incoming edge (background for edges that have not fired). Each time a node
is updated its children are visited in a chosen order, so a node is visited
once per path reaching it. A choice of child order at every visit is a
*configuration*. Whenever the sink changes, the change is credited to every
edge on the current DFS path; credits are averaged over configurations,
exhaustively or by sampling.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigurationCapExceeded,
    DomainError,
    GraphError,
    SizeLimitExceeded,
    UnknownEdge,
    UnrealizableHistory,
)
from .functions import FunctionSpec, Var, Expression
from .graph import (
    BOUNDARY_CAP,
    Boundary,
    CausalGraph,
    NodeSpec,
    count_configurations,
    ensure_augmented,
    forward_values,
    iter_boundaries,
)

CONFIG_CAP = 1_000_000
PATH_ORACLE_CAP = 100_000
MC_BLOCK = 1024
TOLERANCE = 1e-9
_PERM_TABLE_MAX = 7


def config_cap() -> int:
    """Exact-mode cap, overridable through ``FLOWCREDIT_CONFIG_CAP``."""
    raw = os.environ.get("FLOWCREDIT_CONFIG_CAP")
    return int(float(raw)) if raw else CONFIG_CAP


@dataclass
class EdgeAttribution:
    credit: dict
    method: str  # "exact" | "monte-carlo" | "path-oracle"
    f_foreground: float
    f_background: float
    sample_count: int = None
    seed: int = None
    stderr: dict = None
    configurations: int = None
    backgrounds: int = 1

    @property
    def target_delta(self) -> float:
        return self.f_foreground - self.f_background

    def __getitem__(self, edge):
        try:
            return self.credit[tuple(edge)]
        except KeyError:
            raise UnknownEdge(tuple(edge)) from None

    @property
    def edges(self):
        return list(self.credit)

    def as_array(self, edges=None) -> np.ndarray:
        return np.array([self.credit[e] for e in (edges or self.credit)])


# --------------------------------------------------------------------------
# the incremental engine shared by exact enumeration and sampling


def _real_output(value) -> float:
    # categorical sink outputs have no meaningful difference to split
    if isinstance(value, (str, bool)) or not isinstance(value, (int, float, np.number)):
        raise DomainError(f"sink output must be a real number, got {value!r}")
    return float(value)


class _Engine:
    def __init__(self, g: CausalGraph, bg: Mapping, fg: Mapping):
        g = ensure_augmented(g)
        self.graph = g
        ids = g.topological_order()
        idx = {v: k for k, v in enumerate(ids)}
        self.ids = ids
        self.edges = list(g.edges)
        eid = {e: k for k, e in enumerate(self.edges)}
        self.sink = idx[g.sink]
        self.root = idx[g.super_source]

        bgv = forward_values(g, bg)
        fgv = forward_values(g, fg)
        self.f_background = _real_output(bgv[g.sink])
        self.f_foreground = _real_output(fgv[g.sink])

        self.exogenous = [g.node(v).exogenous for v in ids]
        self.fg = [fgv[v] for v in ids]
        self.init_val = [bgv[v] for v in ids]
        self.init_vis = [[bgv[p] for p in g.parents(v)] for v in ids]
        self.fns = [None if g.node(v).function is None else g.node(v).function.evaluate
                    for v in ids]
        # per node: tuple of (child index, edge id, position in child's parent list)
        self.kids = []
        self.perms = []
        for v in ids:
            kids = tuple((idx[c], eid[(v, c)], g.parents(c).index(v)) for c in g.children(v))
            self.kids.append(kids)
            if 1 < len(kids) <= _PERM_TABLE_MAX:
                self.perms.append(list(itertools.permutations(kids)))
            else:
                self.perms.append(None)

    def run(self, choose, acc):
        """One DFS traversal; sink changes are added into ``acc``."""
        val = list(self.init_val)
        vis = [list(x) for x in self.init_vis]
        exo, fns, fg, kids = self.exogenous, self.fns, self.fg, self.kids
        sink = self.sink

        def visit(u, path):
            ks = kids[u]
            if len(ks) > 1:
                ks = choose(u, ks)
            for c, e, pos in ks:
                if exo[c]:
                    new = fg[c]
                else:
                    row = vis[c]
                    row[pos] = val[u]
                    new = fns[c](row)
                if c == sink:
                    d = new - val[c]
                    val[c] = new
                    if d:
                        for pe in path:
                            acc[pe] += d
                        acc[e] += d
                else:
                    val[c] = new
                    visit(c, path + (e,))

        visit(self.root, ())
        return val[sink]


class _Odometer:
    """Enumerates configurations as mixed-radix digit strings.

    Digits are recorded in the order decisions are met during a traversal;
    the radix of a digit is the number of child orders at that visit.
    """

    def __init__(self, engine, prefix=()):
        self.engine = engine
        self.digits = list(prefix)
        self.radices = [None] * len(prefix)
        self.fixed = len(prefix)
        self.pos = 0

    def __call__(self, u, ks):
        perms = self.engine.perms[u]
        if perms is None:
            perms = self.engine.perms[u] = list(itertools.permutations(ks))
        if self.pos < len(self.digits):
            d = self.digits[self.pos]
            self.radices[self.pos] = len(perms)
        else:
            d = 0
            self.digits.append(0)
            self.radices.append(len(perms))
        self.pos += 1
        return perms[d]

    def advance(self) -> bool:
        self.pos = 0
        while len(self.digits) > self.fixed and self.digits[-1] + 1 == self.radices[-1]:
            self.digits.pop()
            self.radices.pop()
        if len(self.digits) == self.fixed:
            return False
        self.digits[-1] += 1
        return True


def _first_radix(engine):
    probe = _Odometer(engine)
    engine.run(probe, [0.0] * len(engine.edges))
    return probe.radices[0] if probe.radices else None


def _exact_chunk(engine, prefix):
    acc = [0.0] * len(engine.edges)
    odo = _Odometer(engine, prefix)
    count = 0
    while True:
        engine.run(odo, acc)
        count += 1
        if not odo.advance():
            return acc, count


def _exact_chunk_worker(g, bg, fg, prefix):
    return _exact_chunk(_Engine(g, bg, fg), prefix)


def shapley_flow_exact(g: CausalGraph, bg: Mapping, fg: Mapping, cap: int = None,
                       n_jobs: int = 1) -> EdgeAttribution:
    """Average edge credit over every DFS configuration.

    The graph is augmented with a super-source if it lacks one. Work is cut
    into one chunk per choice at the first decision point, and chunk sums are
    reduced in chunk order, so the result does not depend on ``n_jobs``.
    """
    g = ensure_augmented(g)
    cap = config_cap() if cap is None else cap
    total = count_configurations(g)
    if total > cap:
        raise ConfigurationCapExceeded(total, cap)
    engine = _Engine(g, bg, fg)
    radix = _first_radix(engine)
    prefixes = [()] if radix is None else [(d,) for d in range(radix)]
    if n_jobs > 1 and len(prefixes) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_exact_chunk_worker, g, bg, fg, p) for p in prefixes]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_exact_chunk(engine, p) for p in prefixes]
    seen = sum(c for _, c in chunks)
    if seen != total:
        raise RuntimeError(f"enumerated {seen} configurations, expected {total}")
    sums = [0.0] * len(engine.edges)
    for acc, _ in chunks:
        for k, x in enumerate(acc):
            sums[k] += x
    credit = {e: s / total for e, s in zip(engine.edges, sums)}
    return EdgeAttribution(credit, "exact", engine.f_foreground, engine.f_background,
                           configurations=total)


# --------------------------------------------------------------------------
# Monte Carlo


class _RandomOrders:
    def __init__(self, engine, rng):
        self.engine = engine
        self.rng = rng
        self.buf = rng.random(4096)
        self.i = 0

    def __call__(self, u, ks):
        perms = self.engine.perms[u]
        if perms is None:
            return tuple(ks[j] for j in self.rng.permutation(len(ks)))
        if self.i == len(self.buf):
            self.buf = self.rng.random(4096)
            self.i = 0
        r = self.buf[self.i]
        self.i += 1
        return perms[int(r * len(perms))]


def _mc_block(engine, seed_seq, size):
    choose = _RandomOrders(engine, np.random.default_rng(seed_seq))
    rows = np.empty((size, len(engine.edges)))
    for s in range(size):
        acc = [0.0] * len(engine.edges)
        engine.run(choose, acc)
        rows[s] = acc
    mean = rows.mean(axis=0)
    m2 = ((rows - mean) ** 2).sum(axis=0)
    return size, mean, m2


def _mc_block_worker(g, bg, fg, seed_seq, size):
    return _mc_block(_Engine(g, bg, fg), seed_seq, size)


def shapley_flow_mc(g: CausalGraph, bg: Mapping, fg: Mapping, n: int, seed: int = 0,
                    n_jobs: int = 1) -> EdgeAttribution:
    """Estimate edge credit from ``n`` configurations drawn uniformly.

    Samples are split into fixed-size blocks with independent seed streams
    and block statistics are merged in block order, so results depend only
    on ``(n, seed)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    g = ensure_augmented(g)
    engine = _Engine(g, bg, fg)
    sizes = [min(MC_BLOCK, n - k) for k in range(0, n, MC_BLOCK)]
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    if n_jobs > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_mc_block_worker, g, bg, fg, q, m) for q, m in zip(seqs, sizes)]
            blocks = [f.result() for f in futures]
    else:
        blocks = [_mc_block(engine, q, m) for q, m in zip(seqs, sizes)]

    count, mean, m2 = blocks[0]
    for nb, mb, m2b in blocks[1:]:
        tot = count + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta ** 2 * (count * nb / tot)
        count = tot
    if n > 1:
        se = np.sqrt(np.maximum(m2 / (n - 1), 0.0) / n)
    else:
        se = np.full(len(engine.edges), np.nan)
    credit = {e: float(x) for e, x in zip(engine.edges, mean)}
    stderr = {e: float(x) for e, x in zip(engine.edges, se)}
    return EdgeAttribution(credit, "monte-carlo", engine.f_foreground, engine.f_background,
                           sample_count=n, seed=seed, stderr=stderr)


# --------------------------------------------------------------------------
# history replay and the path-formula oracle


def history_trace(g: CausalGraph, bg: Mapping, fg: Mapping, history: Sequence) -> list:
    """Sink value before and after each edge of ``history``.

    Firing an edge whose tail has not been updated yet is an error. In a
    graph without a super-source the roots already hold their foreground
    values at time zero.
    """
    bgv = forward_values(g, bg)
    fgv = forward_values(g, fg)
    current = dict(bgv)
    updated = set(g.roots)
    if not g.is_augmented:
        for r in g.roots:
            current[r] = fgv[r]
    seen = {}  # edge -> value last transmitted
    trace = [current[g.sink]]
    for i, e in enumerate(history):
        e = tuple(e)
        if not g.has_edge(e):
            raise UnknownEdge(e)
        u, v = e
        if u not in updated:
            raise UnrealizableHistory(i, e)
        seen[e] = current[u]
        node = g.node(v)
        if node.exogenous:
            current[v] = fgv[v]
        else:
            args = tuple(seen.get((p, v), bgv[p]) for p in node.parents)
            current[v] = node.function.evaluate(args)
        updated.add(v)
        trace.append(current[g.sink])
    return trace


def evaluate_history(g: CausalGraph, bg: Mapping, fg: Mapping, history: Sequence) -> float:
    """Payoff of a history: the sink's value after replaying it."""
    return history_trace(g, bg, fg, history)[-1]


def iter_dfs_histories(g: CausalGraph):
    """Yield each DFS configuration as a list of ``(edge, path)`` events.

    ``path`` is the DFS stack of edges ending with ``edge``. This generator
    is deliberately naive (full materialisation per node visit) and serves as
    an independent cross-check of the incremental engine.
    """
    def node_runs(v, path):
        kids = g.children(v)
        if not kids:
            return [()]
        runs = []
        for perm in itertools.permutations(kids):
            parts = [edge_runs(v, c, path) for c in perm]
            for combo in itertools.product(*parts):
                runs.append(tuple(ev for part in combo for ev in part))
        return runs

    def edge_runs(u, c, path):
        p2 = path + ((u, c),)
        return [(((u, c), p2),) + r for r in node_runs(c, p2)]

    if len(g.roots) != 1:
        raise GraphError("history enumeration needs a single root; augment the graph first")
    for run in node_runs(g.roots[0], ()):
        yield list(run)


def shapley_flow_paths(g: CausalGraph, bg: Mapping, fg: Mapping, cap: int = PATH_ORACLE_CAP):
    """Path credits by the path-ordering formula, then edge credits as sums
    over the paths containing each edge.

    Returns ``(path_credit, EdgeAttribution)``.
    """
    g = ensure_augmented(g)
    total = count_configurations(g)
    if total > cap:
        raise SizeLimitExceeded("configuration count", cap)
    path_credit = {}
    runs = 0
    for events in iter_dfs_histories(g):
        runs += 1
        trace = history_trace(g, bg, fg, [e for e, _ in events])
        before = trace[0]
        for i, (e, path) in enumerate(events):
            if e[1] == g.sink:
                after = trace[i + 1]
                path_credit[path] = path_credit.get(path, 0.0) + (after - before)
                before = after
    path_credit = {p: c / runs for p, c in path_credit.items()}
    credit = {e: 0.0 for e in g.edges}
    for p, c in path_credit.items():
        for e in p:
            credit[e] += c
    fv = forward_values(g, fg)[g.sink]
    bv = forward_values(g, bg)[g.sink]
    return path_credit, EdgeAttribution(credit, "path-oracle", float(fv), float(bv),
                                        configurations=runs)


# --------------------------------------------------------------------------
# derived views


def node_attribution(attr: EdgeAttribution, g: CausalGraph) -> dict:
    """Credit of each node: the sum over its outgoing edges."""
    out = {v: 0.0 for v in g.node_ids}
    for (u, _), c in attr.credit.items():
        out[u] = out.get(u, 0.0) + c
    return out


def asv_view(attr: EdgeAttribution, g: CausalGraph) -> dict:
    """Credit per feature when the boundary sits right below the sources.

    Exogenous sources keep their total credit; every other non-sink node is
    fully explained by its ancestors and gets 0, as asymmetric Shapley values
    with the causal order would assign.
    """
    psi = node_attribution(attr, g)
    sources = set(g.sources)
    return {v: (psi[v] if v in sources else 0.0) for v in g.topological_order()
            if v != g.sink and g.node(v).kind != "super"}


def average_attributions(attrs: Sequence[EdgeAttribution]) -> EdgeAttribution:
    """Arithmetic mean of attributions over the same edges."""
    attrs = list(attrs)
    m = len(attrs)
    first = attrs[0]
    credit = {e: math.fsum(a.credit[e] for a in attrs) / m for e in first.credit}
    stderr = None
    if all(a.stderr is not None for a in attrs):
        stderr = {e: math.sqrt(math.fsum(a.stderr[e] ** 2 for a in attrs)) / m for e in credit}
    return EdgeAttribution(
        credit, first.method,
        math.fsum(a.f_foreground for a in attrs) / m,
        math.fsum(a.f_background for a in attrs) / m,
        sample_count=first.sample_count, seed=first.seed, stderr=stderr,
        configurations=first.configurations,
        backgrounds=sum(a.backgrounds for a in attrs),
    )


def attribute(g, bg, fg, method="exact", n=None, seed=0, cap=None, n_jobs=1):
    if method == "exact":
        return shapley_flow_exact(g, bg, fg, cap=cap, n_jobs=n_jobs)
    if method in ("mc", "monte-carlo"):
        return shapley_flow_mc(g, bg, fg, n, seed, n_jobs=n_jobs)
    if method == "path-oracle":
        return shapley_flow_paths(g, bg, fg)[1]
    raise ValueError(f"unknown method {method!r}")


def multi_background(g: CausalGraph, bgs: Sequence[Mapping], fg: Mapping, method="exact",
                     n=None, seed=0, cap=None, n_jobs=1) -> EdgeAttribution:
    """Explain ``f(x) - mean f(x')`` by averaging per-background attributions."""
    bgs = list(bgs)
    if not bgs:
        raise ValueError("at least one background sample is required")
    if len(bgs) == 1:
        return attribute(g, bgs[0], fg, method, n, seed, cap, n_jobs)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(len(bgs))]
    attrs = [attribute(g, bg, fg, method, n, s, cap, n_jobs) for bg, s in zip(bgs, seeds)]
    out = average_attributions(attrs)
    out.seed = seed if method != "exact" else None
    return out


# --------------------------------------------------------------------------
# axiom checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    checked: int
    detail: str = ""
    failures: list = field(default_factory=list)


def check_efficiency(g: CausalGraph, attr: EdgeAttribution, cap: int = BOUNDARY_CAP,
                     tol: float = TOLERANCE) -> CheckResult:
    """Cut credits must add up to the output difference on every boundary."""
    g = ensure_augmented(g)
    worst, count, failures, truncated = 0.0, 0, [], False
    for b in iter_boundaries(g):
        if count >= cap:
            truncated = True
            break
        count += 1
        err = abs(math.fsum(attr.credit[e] for e in b.cut) - attr.target_delta)
        worst = max(worst, err)
        if err > tol:
            failures.append({"cut": [list(e) for e in b.cut], "error": err})
    detail = f"first {cap} boundaries only" if truncated else ""
    return CheckResult("efficiency", not failures, worst, count, detail, failures)


def check_conservation(g: CausalGraph, attr: EdgeAttribution, tol: float = TOLERANCE) -> CheckResult:
    """Incoming credit equals outgoing credit at every non-root, non-sink node."""
    g = ensure_augmented(g)
    worst, failures, count = 0.0, [], 0
    for v in g.node_ids:
        if v == g.sink or not g.parents(v):
            continue
        count += 1
        inflow = math.fsum(attr.credit[(p, v)] for p in g.parents(v))
        outflow = math.fsum(attr.credit[(v, c)] for c in g.children(v))
        err = abs(inflow - outflow)
        worst = max(worst, err)
        if err > tol:
            failures.append({"node": v, "error": err})
    return CheckResult("conservation", not failures, worst, count, "", failures)


# --------------------------------------------------------------------------
# black-box collapse of a boundary's model side


@dataclass(frozen=True, eq=False)
class SubgraphFunction(FunctionSpec):
    """The model side of a boundary evaluated as one opaque function.

    Arguments arrive one per cut edge, in cut order. A source on the model
    side takes the value on its super-source port directly.
    """

    params: tuple
    graph: CausalGraph
    boundary: Boundary
    variant = "subgraph"

    def evaluate(self, args):
        g, b = self.graph, self.boundary
        port = dict(zip(b.cut, args))
        values = {}
        for v in g.topological_order():
            if v not in b.model_side:
                continue
            node = g.node(v)
            vals = tuple(port[(p, v)] if p in b.data_side else values[p] for p in node.parents)
            values[v] = vals[0] if node.exogenous else node.function.evaluate(vals)
        return values[g.sink]


def relay_id(edge) -> str:
    return f"cut[{edge[0]}->{edge[1]}]"


@dataclass
class CollapsedGraph:
    graph: CausalGraph
    edge_map: dict  # original cut edge -> edge carrying its credit
    relayed_sources: dict  # relay source id -> original source id

    def lift(self, sample: Mapping) -> dict:
        """Extend a sample with values for relays standing in for sources."""
        out = dict(sample)
        for r, src in self.relayed_sources.items():
            out[r] = sample[src]
        return out


def collapse_boundary(g: CausalGraph, boundary: Boundary) -> CollapsedGraph:
    """Replace the model side of ``boundary`` with a single black-box sink.

    Each cut edge ``(u, v)`` becomes ``u -> relay -> sink`` where the relay
    copies ``u``. A cut edge out of the super-source feeds a source on the
    model side; its relay is itself a source taking that source's sample
    value, so samples must go through :meth:`CollapsedGraph.lift`.
    """
    g = ensure_augmented(g)
    nodes = [n for n in g.nodes if n.id in boundary.data_side]
    relays = []
    edge_map, relayed = {}, {}
    for u, v in boundary.cut:
        r = relay_id((u, v))
        if g.node(u).kind == "super":
            nodes.append(NodeSpec(r, "source", (u,), None, g.node(v).is_noise, g.node(v).domain))
            relayed[r] = v
        else:
            nodes.append(NodeSpec(r, "internal", (u,), Expression((u,), Var(u, 0))))
        relays.append(r)
        edge_map[(u, v)] = (u, r)
    fn = SubgraphFunction(tuple(relays), g, boundary)
    nodes.append(NodeSpec(g.sink, "sink", tuple(relays), fn))
    return CollapsedGraph(CausalGraph(nodes, g.sink), edge_map, relayed)
