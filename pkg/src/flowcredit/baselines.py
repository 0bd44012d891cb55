"""Reference computations used to validate edge attributions.

Nothing here touches the DFS engine: set games are evaluated by plain
forward evaluation of the graph.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .errors import NotATree, NotLinear, TooManyPlayers
from .functions import Linear
from .graph import CausalGraph, forward_values

MAX_PLAYERS = 12
MAX_OWEN_PLAYERS = 10


class SetGame:
    """A cooperative game on named players.

    ``payoff`` receives a frozenset of player names; results are cached.
    """

    def __init__(self, players: Sequence[str], payoff: Callable[[frozenset], float]):
        self.players = tuple(players)
        self._payoff = payoff
        self._cache = {}

    @property
    def d(self) -> int:
        return len(self.players)

    def __call__(self, coalition) -> float:
        key = frozenset(coalition)
        if key not in self._cache:
            self._cache[key] = float(self._payoff(key))
        return self._cache[key]

    @classmethod
    def from_model(cls, fn, players, bg_values, fg_values):
        """Model game: members take foreground values, the rest background."""
        players = tuple(players)

        def payoff(s):
            return fn.evaluate(tuple(fg_values[p] if p in s else bg_values[p] for p in players))
        return cls(players, payoff)


def brute_force_shapley(game: SetGame) -> dict:
    """Exact Shapley values by weighted enumeration of all coalitions."""
    d = game.d
    if d > MAX_PLAYERS:
        raise TooManyPlayers(d, MAX_PLAYERS)
    weights = [math.factorial(k) * math.factorial(d - k - 1) / math.factorial(d) for k in range(d)]
    out = {}
    for i, p in enumerate(game.players):
        others = game.players[:i] + game.players[i + 1:]
        terms = []
        for k in range(d):
            for s in itertools.combinations(others, k):
                terms.append(weights[k] * (game(set(s) | {p}) - game(s)))
        out[p] = math.fsum(terms)
    return out


def owen_values(game: SetGame, blocks: Sequence[Sequence[str]]) -> dict:
    """Owen values: average marginal contributions over the orders in which
    every block's members appear contiguously."""
    blocks = [tuple(b) for b in blocks]
    members = [p for b in blocks for p in b]
    if sorted(members) != sorted(game.players) or len(set(members)) != len(members):
        raise ValueError("blocks must partition the players")
    if game.d > MAX_OWEN_PLAYERS:
        raise TooManyPlayers(game.d, MAX_OWEN_PLAYERS)
    sums = {p: [] for p in game.players}
    count = 0
    for block_order in itertools.permutations(blocks):
        for inner in itertools.product(*(itertools.permutations(b) for b in block_order)):
            count += 1
            coalition = set()
            prev = game(coalition)
            for p in itertools.chain.from_iterable(inner):
                coalition.add(p)
                cur = game(coalition)
                sums[p].append(cur - prev)
                prev = cur
    return {p: math.fsum(v) / count for p, v in sums.items()}


def _features(g: CausalGraph):
    return [v for v in g.topological_order() if v != g.sink and g.node(v).kind != "super"]


def independent_shap(g: CausalGraph, bg: Mapping, fg: Mapping) -> dict:
    """Shapley values of the sink function with inputs perturbed independently.

    Every non-sink node is a feature; the graph above the sink is ignored, as
    if it were flat. Features that are not sink inputs are dummies and get 0.
    """
    bgv, fgv = forward_values(g, bg), forward_values(g, fg)
    sink = g.node(g.sink)
    game = SetGame.from_model(sink.function, sink.parents, bgv, fgv)
    values = brute_force_shapley(game)
    return {v: values.get(v, 0.0) for v in _features(g)}


@dataclass
class GroundTruthEffects:
    direct: dict
    indirect: dict


def linear_ground_truth(g: CausalGraph, bg: Mapping, fg: Mapping) -> GroundTruthEffects:
    """Direct and intervention effects of each node in a linear system.

    direct(i) is the sink weight on i times the change in i; indirect(i) is
    the change in output when i alone is set to its foreground value, other
    sources stay at background and descendants are recomputed.
    """
    for n in g.nodes:
        if n.function is not None and not isinstance(n.function, Linear):
            raise NotLinear(f"node {n.id!r} has a {n.function.variant} function")
    bgv, fgv = forward_values(g, bg), forward_values(g, fg)
    sink_fn = g.node(g.sink).function
    base = bgv[g.sink]
    direct, indirect = {}, {}
    for v in _features(g):
        direct[v] = sink_fn.weight_of(v) * (fgv[v] - bgv[v])
        indirect[v] = forward_values(g, bg, do={v: fgv[v]})[g.sink] - base
    return GroundTruthEffects(direct, indirect)


def owen_blocks(g: CausalGraph) -> dict:
    """Coalition structure of a two-level tree graph: block node -> leaves.

    Block nodes are the exogenous sources; each leaf has exactly one block
    parent and feeds only the sink, and the sink reads only leaves.
    """
    blocks = {}
    sink = g.node(g.sink)
    for n in g.nodes:
        if n.kind == "super":
            continue
        if n.kind == "source":
            kids = g.children(n.id)
            if g.sink in kids:
                raise NotATree(f"block node {n.id!r} feeds the sink directly")
            blocks[n.id] = list(kids)
        elif n.id != g.sink:
            parents = [p for p in n.parents]
            if len(parents) != 1 or g.node(parents[0]).kind != "source":
                raise NotATree(f"leaf {n.id!r} must have exactly one block parent")
            if g.children(n.id) != (g.sink,):
                raise NotATree(f"leaf {n.id!r} must feed only the sink")
    leaves = [leaf for kids in blocks.values() for leaf in kids]
    if sorted(leaves) != sorted(sink.parents):
        raise NotATree("the sink must read exactly the leaves")
    return blocks


def owen_oracle(g: CausalGraph, bg: Mapping, fg: Mapping) -> dict:
    """Owen value of each leaf, keyed by its incoming (block, leaf) edge."""
    blocks = owen_blocks(g)
    bgv, fgv = forward_values(g, bg), forward_values(g, fg)
    sink = g.node(g.sink)
    game = SetGame.from_model(sink.function, sink.parents, bgv, fgv)
    values = owen_values(game, [blocks[b] for b in sorted(blocks)])
    return {(b, leaf): values[leaf] for b in sorted(blocks) for leaf in blocks[b]}


def dummy_edges(g: CausalGraph, bg: Mapping, fg: Mapping, cap: int = 20_000) -> set:
    """Edges certified dummy by brute force over every DFS history.

    An edge is dummy when, in every history and at every firing, the sink
    value after the message has fully propagated equals the value before it.
    """
    from .flow import iter_dfs_histories, history_trace
    from .graph import count_configurations, ensure_augmented
    from .errors import SizeLimitExceeded
    g = ensure_augmented(g)
    if count_configurations(g) > cap:
        raise SizeLimitExceeded("configuration count", cap)
    candidates = set(g.edges)
    for events in iter_dfs_histories(g):
        if not candidates:
            break
        trace = history_trace(g, bg, fg, [e for e, _ in events])
        depth = [len(p) for _, p in events]
        for i, (e, _) in enumerate(events):
            if e not in candidates:
                continue
            end = i + 1
            while end < len(events) and depth[end] > depth[i]:
                end += 1
            if trace[end] != trace[i]:
                candidates.discard(e)
    return candidates
