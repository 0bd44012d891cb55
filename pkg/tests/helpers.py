"""Random small nonlinear graphs for property tests."""

from __future__ import annotations

import numpy as np

from flowcredit.functions import parse_expression
from flowcredit.graph import CausalGraph, NodeSpec, count_configurations, ensure_augmented

UNARY = ["{a}", "{a}*{a}", "max({a}, 0)", "abs({a})", "-{a}", "0.5*{a}", "min({a}, 1)"]
JOIN = [" + ", " * ", " - "]


def random_term(rng, name):
    return "(" + UNARY[rng.integers(len(UNARY))].format(a=name) + ")"


def random_body(rng, names):
    """A random expression over ``names`` (each used at least once)."""
    terms = [random_term(rng, v) for v in names]
    out = terms[0]
    for t in terms[1:]:
        r = rng.random()
        if r < 0.15:
            out = f"max({out}, {t})"
        elif r < 0.25:
            out = f"if({out} > {t}, {out}, {t})"
        else:
            out = out + JOIN[rng.integers(len(JOIN))] + t
    return out


def random_graph(rng, max_nodes=8, max_configs=5_000, dummy_rate=0.25, tries=200):
    """Random DAG with expression nodes, some of which ignore a parent.

    Returns ``(graph, bg, fg, sink_params, sink_body)``. Node count (not
    counting the super-source) is between 3 and ``max_nodes``.
    """
    for _ in range(tries):
        n = int(rng.integers(3, max_nodes + 1))
        n_src = int(rng.integers(1, min(3, n - 1) + 1))
        names = [f"N{k}" for k in range(n - 1)] + ["f"]
        parents = {names[i]: [] for i in range(n)}
        for i in range(n_src, n):
            cands = list(range(i))
            k = int(rng.integers(1, min(3, len(cands)) + 1))
            pick = sorted(rng.choice(cands, size=k, replace=False))
            parents[names[i]] = [names[j] for j in pick]
        # every node must feed something later so it reaches the sink
        for i in range(n - 1):
            if not any(names[i] in parents[names[j]] for j in range(i + 1, n)):
                j = int(rng.integers(max(i + 1, n_src), n))
                parents[names[j]].append(names[i])
        nodes = []
        sink_params = sink_body = None
        for i, v in enumerate(names):
            ps = parents[v]
            if not ps:
                nodes.append(NodeSpec(v))
                continue
            rng.shuffle(ps)
            used = [p for p in ps if rng.random() > dummy_rate] or [ps[0]]
            body = random_body(rng, used)
            nodes.append(NodeSpec(v, None, tuple(ps), parse_expression(body, ps)))
            if v == "f":
                sink_params, sink_body = tuple(ps), body
        g = CausalGraph(nodes, "f")
        if count_configurations(ensure_augmented(g)) > max_configs:
            continue
        bg = {s: float(rng.normal()) for s in g.sources}
        fg = {s: float(rng.normal()) for s in g.sources}
        return g, bg, fg, sink_params, sink_body
    raise RuntimeError("could not draw a small enough graph")


def with_sink(g, params, body):
    """Copy of ``g`` whose sink computes ``body`` over ``params``."""
    nodes = [n if n.id != g.sink else NodeSpec(n.id, None, params, parse_expression(body, params))
             for n in g.nodes]
    return CausalGraph(nodes, g.sink)


def permute_parents(g, rng):
    """Same system with each parent list shuffled and functions rebound."""
    nodes = []
    for n in g.nodes:
        if n.function is None or len(n.parents) < 2:
            nodes.append(n)
            continue
        ps = list(n.parents)
        rng.shuffle(ps)
        nodes.append(NodeSpec(n.id, n.kind, tuple(ps), n.function.reorder(ps), n.is_noise, n.domain))
    return CausalGraph(nodes, g.sink)
