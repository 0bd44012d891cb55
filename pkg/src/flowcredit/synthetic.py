"""Synthetic systems and noise-node augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateGraph, DomainError, InvalidDistribution
from .functions import FunctionSpec, Linear, function_from_doc, function_to_doc, parse_expression
from .graph import CausalGraph, NodeSpec, forward_values

# --------------------------------------------------------------------------
# random linear DAGs


@dataclass(frozen=True)
class RandomGraphConfig:
    n: int = 10
    p: float = 0.5
    seed: int = 0
    max_retries: int = 100

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


class SourceSampler:
    """Endless stream of source samples drawn from N(0, 1)."""

    def __init__(self, sources, seed_seq):
        self.sources = tuple(sources)
        self.rng = np.random.default_rng(seed_seq)

    def draw(self) -> dict:
        z = self.rng.standard_normal(len(self.sources))
        return {s: float(x) for s, x in zip(self.sources, z)}

    def __iter__(self):
        while True:
            yield self.draw()

    def take(self, k) -> list:
        return [self.draw() for _ in range(k)]


def node_name(i, n):
    return "f" if i == n else f"X{i}"


def gen_random_linear_graph(cfg: RandomGraphConfig):
    """Random DAG over nodes 1..n: j -> i with probability p for every j < i.

    Node n is the sink ``f``. Every function is linear with N(0, 1) weights
    and zero bias. Nodes with no path to the sink are dropped. Topology,
    weights and samples use separate random streams derived from the seed.

    Returns ``(graph, SourceSampler)``.
    """
    topo_seq, weight_seq, sample_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    topo = np.random.default_rng(topo_seq)
    n = cfg.n
    for _ in range(cfg.max_retries):
        adj = np.triu(topo.random((n, n)) < cfg.p, k=1)  # adj[j, i]: j -> i
        if adj[:, n - 1].any():
            break
    else:
        raise DegenerateGraph(f"sink has no parents after {cfg.max_retries} draws (p={cfg.p})")

    keep = {n - 1}
    for j in range(n - 2, -1, -1):
        if any(adj[j, i] and i in keep for i in range(j + 1, n)):
            keep.add(j)
    wrng = np.random.default_rng(weight_seq)
    weights = wrng.standard_normal((n, n))
    nodes = []
    for i in sorted(keep):
        parents = [j for j in range(i) if adj[j, i] and j in keep]
        name = node_name(i + 1, n)
        if not parents:
            nodes.append(NodeSpec(name, "source"))
            continue
        fn = Linear(tuple(node_name(j + 1, n) for j in parents), [weights[j, i] for j in parents])
        nodes.append(NodeSpec(name, "sink" if i == n - 1 else "internal",
                              fn.params, fn))
    g = CausalGraph(nodes, "f")
    return g, SourceSampler(g.sources, sample_seq)


# --------------------------------------------------------------------------
# fixtures


def make_chain(length: int = 4, delta: float = -1.82, background: float = 0.0):
    """X1 -> X2 -> ... -> Xn, each an exact copy of its predecessor.

    The sink reads every Xi but only Xn carries weight, so the edges
    Xi -> f for i < n are dummies. Returns ``(graph, bg, fg)``.
    """
    if length < 2:
        raise ValueError("chain length must be at least 2")
    names = [f"X{i}" for i in range(1, length + 1)]
    nodes = [NodeSpec(names[0], "source")]
    for prev, cur in zip(names, names[1:]):
        nodes.append(NodeSpec(cur, "internal", (prev,), Linear((prev,), [1.0])))
    weights = [0.0] * (length - 1) + [1.0]
    nodes.append(NodeSpec("f", "sink", tuple(names), Linear(tuple(names), weights)))
    g = CausalGraph(nodes, "f")
    return g, {names[0]: background}, {names[0]: background + delta}


def make_or_game():
    """f = X1 or X2 explained at x = (1, 1) against x' = (0, 0)."""
    nodes = [NodeSpec("X1", "source"), NodeSpec("X2", "source"),
             NodeSpec("f", "sink", ("X1", "X2"), parse_expression("X1 or X2", ("X1", "X2")))]
    return CausalGraph(nodes, "f"), {"X1": 0.0, "X2": 0.0}, {"X1": 1.0, "X2": 1.0}


def make_diamond(sink_expr: str = "B + C"):
    """A -> B, A -> C, B -> f, C -> f with identity copies B = C = A."""
    nodes = [NodeSpec("A", "source"),
             NodeSpec("B", "internal", ("A",), parse_expression("A", ("A",))),
             NodeSpec("C", "internal", ("A",), parse_expression("A", ("A",))),
             NodeSpec("f", "sink", ("B", "C"), parse_expression(sink_expr, ("B", "C")))]
    return CausalGraph(nodes, "f"), {"A": 0.0}, {"A": 1.0}


def make_flat(sink_fn: FunctionSpec):
    """Independent sources feeding the sink directly."""
    nodes = [NodeSpec(p, "source") for p in sink_fn.params]
    nodes.append(NodeSpec("f", "sink", sink_fn.params, sink_fn))
    return CausalGraph(nodes, "f")


def make_tree(blocks: Mapping[str, Sequence[str]], sink_expr: str):
    """Two-level tree: block sources fan out to leaf copies that feed the sink.

    Leaves copy their block's value, so a block at 0 -> 1 switches all its
    leaves on together in the sample, while the attribution still separates
    them.
    """
    nodes, leaves = [], []
    for b, members in blocks.items():
        nodes.append(NodeSpec(b, "source"))
        for leaf in members:
            nodes.append(NodeSpec(leaf, "internal", (b,), parse_expression(b, (b,))))
            leaves.append(leaf)
    nodes.append(NodeSpec("f", "sink", tuple(leaves), parse_expression(sink_expr, tuple(leaves))))
    g = CausalGraph(nodes, "f")
    return g, {b: 0.0 for b in blocks}, {b: 1.0 for b in blocks}


# --------------------------------------------------------------------------
# noise nodes


@dataclass(frozen=True)
class NoiseInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 <= self.lower < self.upper <= 1.0:
            raise InvalidDistribution(f"invalid noise interval [{self.lower}, {self.upper})")

    def sample(self, rng, size=None):
        return rng.uniform(self.lower, self.upper, size)


def _check_probs(probs):
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or len(probs) == 0 or (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidDistribution(f"not a probability vector: {probs.tolist()}")
    return probs


def infer_noise_interval(category_probs, observed: int) -> NoiseInterval:
    """Noise values that make inverse-CDF sampling return ``observed``."""
    probs = _check_probs(category_probs)
    if not 0 <= observed < len(probs):
        raise InvalidDistribution(f"category index {observed} out of range")
    cdf = np.cumsum(probs)
    lower = 0.0 if observed == 0 else float(cdf[observed - 1])
    upper = 1.0 if observed == len(probs) - 1 else float(cdf[observed])
    if upper <= lower:
        raise InvalidDistribution(f"category {observed} has zero probability")
    return NoiseInterval(lower, upper)


def inverse_cdf(category_probs, u: float) -> int:
    cdf = np.cumsum(category_probs)
    for k, c in enumerate(cdf):
        if u < c:
            return k
    return len(cdf) - 1


class _NoisyFunction(FunctionSpec):
    """Shared plumbing: one parameter is the noise node, the rest feed the base."""

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if self.noise not in self.params:
            raise DomainError(f"noise parameter {self.noise!r} is not among {list(self.params)}")
        k = self.params.index(self.noise)
        object.__setattr__(self, "_k", k)

    def split(self, args):
        k = self._k
        return tuple(args[:k]) + tuple(args[k + 1:]), args[k]

    @property
    def base_params(self):
        return tuple(p for p in self.params if p != self.noise)


@dataclass(frozen=True, eq=False)
class AdditiveNoise(_NoisyFunction):
    """Continuous noisy node: base prediction plus the noise parent's value."""

    params: tuple
    base: FunctionSpec
    noise: str
    variant = "additive-noise"

    def evaluate(self, args):
        rest, eps = self.split(args)
        return self.base.evaluate(rest) + eps

    def reorder(self, params):
        params, _ = self._permutation(params)
        return AdditiveNoise(params, self.base.reorder([p for p in params if p != self.noise]),
                             self.noise)

    def to_doc(self):
        return {"type": "additive-noise", "noise": self.noise, "base": function_to_doc(self.base)}


@dataclass(frozen=True, eq=False)
class CategoricalNoise(_NoisyFunction):
    """Categorical noisy node sampled by inverse CDF of a uniform noise value.

    ``probs`` holds one function per category over the base parameters;
    their values form the predicted distribution.
    """

    params: tuple
    probs: tuple
    domain: tuple
    noise: str
    variant = "categorical-noise"

    def predict(self, base_args):
        return [float(p.evaluate(base_args)) for p in self.probs]

    def evaluate(self, args):
        rest, u = self.split(args)
        return self.domain[inverse_cdf(_check_probs(self.predict(rest)), u)]

    def reorder(self, params):
        params, _ = self._permutation(params)
        base = [p for p in params if p != self.noise]
        return CategoricalNoise(params, tuple(f.reorder(base) for f in self.probs),
                                self.domain, self.noise)

    def to_doc(self):
        return {"type": "categorical-noise", "noise": self.noise,
                "probs": [function_to_doc(p) for p in self.probs], "domain": list(self.domain)}


def function_from_noise_doc(doc, params, domains=None):
    kind = doc.get("type")
    if kind not in ("additive-noise", "categorical-noise"):
        return None
    params = tuple(params)
    noise = doc.get("noise", params[-1] if params else None)
    base = [p for p in params if p != noise]
    if kind == "additive-noise":
        return AdditiveNoise(params, function_from_doc(doc["base"], base), noise)
    probs = tuple(function_from_doc(p, base) for p in doc["probs"])
    return CategoricalNoise(params, probs, tuple(doc["domain"]), noise)


def noise_id(node_id) -> str:
    return f"noise[{node_id}]"


def augment_noise_nodes(g: CausalGraph, modes: Mapping[str, str] = None,
                        category_probs: Mapping[str, Sequence[FunctionSpec]] = None) -> CausalGraph:
    """Give every non-sink, non-source node its own independent noise parent.

    ``modes`` maps node ids to "continuous" (default) or "categorical";
    categorical nodes need ``category_probs[node]``, one function per entry
    of the node's domain. Nodes that already have a noise parent are left
    alone.
    """
    modes = dict(modes or {})
    category_probs = dict(category_probs or {})
    nodes = []
    for n in g.nodes:
        has_noise = any(g.node(p).is_noise for p in n.parents)
        if n.function is None or n.id == g.sink or has_noise:
            nodes.append(n)
            continue
        eps = noise_id(n.id)
        nodes.append(NodeSpec(eps, "source", (), None, True))
        params = n.parents + (eps,)
        if modes.get(n.id, "continuous") == "categorical":
            if n.domain is None:
                raise DomainError(f"categorical node {n.id!r} needs a domain")
            probs = tuple(category_probs[n.id])
            fn = CategoricalNoise(params, probs, n.domain, eps)
        else:
            fn = AdditiveNoise(params, n.function, eps)
        nodes.append(NodeSpec(n.id, n.kind, params, fn, n.is_noise, n.domain))
    return CausalGraph(nodes, g.sink)


def infer_noise(g: CausalGraph, observed: Mapping) -> dict:
    """Noise values consistent with fully observed node values.

    Continuous nodes get their residual; categorical nodes get the interval
    of uniform values that reproduces the observed category.
    """
    out = {}
    for n in g.nodes:
        fn = n.function
        if not isinstance(fn, (AdditiveNoise, CategoricalNoise)):
            continue
        args = tuple(observed[p] for p in fn.base_params)
        eps = fn.noise
        if isinstance(fn, AdditiveNoise):
            out[eps] = float(observed[n.id]) - float(fn.base.evaluate(args))
        else:
            out[eps] = infer_noise_interval(fn.predict(args), fn.domain.index(observed[n.id]))
    return out


def sample_noise(values: Mapping, m: int = 16, seed: int = 0) -> list:
    """Expand interval-valued noise into ``m`` concrete samples.

    Point values are repeated; intervals are drawn uniformly with a seeded
    stream.
    """
    rng = np.random.default_rng(seed)
    out = [dict() for _ in range(m)]
    for k in sorted(values):
        v = values[k]
        draws = v.sample(rng, m) if isinstance(v, NoiseInterval) else [v] * m
        for row, x in zip(out, draws):
            row[k] = float(x)
    return out


def observed_sample(g: CausalGraph, sample: Mapping) -> dict:
    """All node values implied by a source sample (useful to fake observations)."""
    return {k: v for k, v in forward_values(g, sample).items() if v is not None}
