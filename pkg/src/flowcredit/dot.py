"""Graphviz rendering of edge credits."""

from __future__ import annotations

import json
from typing import Mapping

from .graph import CausalGraph

POSITIVE_COLOR = "firebrick"
NEGATIVE_COLOR = "steelblue"
DIM_COLOR = "gray80"
MIN_WIDTH = 0.3
MAX_WIDTH = 6.0
TOP_K = 10


def _q(s) -> str:
    # JSON string escaping is valid DOT quoting
    return json.dumps(str(s), ensure_ascii=False)


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def emit_dot(g: CausalGraph, credit: Mapping, top_k: int = TOP_K, hide_super: bool = True,
             hide_noise: bool = False, title: str = None) -> str:
    """DOT text with pen width proportional to |credit| and colour by sign.

    Widths run from a hairline at zero to ``MAX_WIDTH`` at the largest
    |credit|. The ``top_k`` largest edges are labelled with their credit to
    two decimals; the rest are drawn dimmed without labels. ``top_k=None``
    labels everything.
    """
    hidden = set()
    if hide_super and g.super_source is not None:
        hidden.add(g.super_source)
    if hide_noise:
        hidden |= {n.id for n in g.nodes if n.is_noise}
    edges = [e for e in g.edges if e[0] not in hidden and e[1] not in hidden]
    vals = {e: float(credit.get(e, 0.0)) for e in edges}
    peak = max((abs(v) for v in vals.values()), default=0.0)

    ranked = sorted(edges, key=lambda e: (-abs(vals[e]), e))
    shown = set(ranked if top_k is None else ranked[:max(top_k, 0)])

    lines = [f"digraph {_q(title or 'attribution')} {{", "  rankdir=LR;",
             '  node [shape=box, style=rounded, fontname="Helvetica"];',
             '  edge [fontname="Helvetica", arrowsize=0.7];']
    for v in g.topological_order():
        if v in hidden:
            continue
        attrs = ', style="rounded,bold"' if v == g.sink else ""
        lines.append(f"  {_q(v)} [label={_q(v)}{attrs}];")
    for e in edges:
        c = vals[e]
        width = MIN_WIDTH if peak == 0 else MIN_WIDTH + (MAX_WIDTH - MIN_WIDTH) * abs(c) / peak
        if e in shown:
            color = NEGATIVE_COLOR if c < 0 else POSITIVE_COLOR
            extra = f", label={_q(_fmt(c))}"
        else:
            color, extra = DIM_COLOR, ""
        lines.append(f"  {_q(e[0])} -> {_q(e[1])} [penwidth={width:.3f}, color={_q(color)}{extra}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
