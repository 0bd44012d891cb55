"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines go straight to the
terminal) or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flowcredit import io
from flowcredit.baselines import (
    SetGame,
    brute_force_shapley,
    dummy_edges,
    independent_shap,
    linear_ground_truth,
    owen_oracle,
)
from flowcredit.flow import (
    asv_view,
    check_conservation,
    check_efficiency,
    collapse_boundary,
    node_attribution,
    shapley_flow_exact,
    shapley_flow_mc,
    shapley_flow_paths,
)
from flowcredit.functions import parse_expression
from flowcredit.graph import all_paths, augment_super_source, ensure_augmented, iter_boundaries
from flowcredit.synthetic import (
    RandomGraphConfig,
    gen_random_linear_graph,
    make_chain,
    make_diamond,
    make_flat,
    make_or_game,
    make_tree,
)

from helpers import random_graph, with_sink

LINEAR_GRAPHS = 200
AXIOM_GRAPHS = 100
TOL = 1e-9
DUMMY_TOL = 1e-12


def verdict(capsys, number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


def _linear_suite():
    out = []
    for seed in range(LINEAR_GRAPHS):
        g, sampler = gen_random_linear_graph(RandomGraphConfig(n=10, p=0.5, seed=seed))
        bg, fg = sampler.take(2)
        out.append((g, bg, fg))
    return out


def _mediated(g):
    """True when some source reaches the sink through another node."""
    aug = augment_super_source(g)
    return any(len(p) > 2 for p in all_paths(aug))


# 1 ---------------------------------------------------------------------------

def check_linear_flow(capsys=None):
    start = time.perf_counter()
    worst_direct = worst_indirect = 0.0
    for g, bg, fg in _linear_suite():
        aug = augment_super_source(g)
        attr = shapley_flow_mc(aug, bg, fg, n=1, seed=0)
        gt = linear_ground_truth(g, bg, fg)
        psi = node_attribution(attr, aug)
        for v in gt.direct:
            flow_direct = attr.credit.get((v, g.sink), 0.0)
            worst_direct = max(worst_direct, abs(flow_direct - gt.direct[v]))
            worst_indirect = max(worst_indirect, abs(psi[v] - gt.indirect[v]))
    elapsed = time.perf_counter() - start
    ok = worst_direct <= TOL and worst_indirect <= TOL and elapsed < 120
    return verdict(capsys, 1, "linear DAGs, flow vs ground truth", ok,
                   f"{LINEAR_GRAPHS} graphs, max direct err {worst_direct:.2e}, "
                   f"max indirect err {worst_indirect:.2e} (tol {TOL:g}), {elapsed:.1f}s (< 120s)")


# 2 ---------------------------------------------------------------------------

def check_linear_independent(capsys=None):
    worst_direct = 0.0
    mediated = wrong = 0
    for g, bg, fg in _linear_suite():
        shap = independent_shap(g, bg, fg)
        gt = linear_ground_truth(g, bg, fg)
        worst_direct = max(worst_direct, max(abs(shap[v] - gt.direct[v]) for v in gt.direct))
        if _mediated(g):
            mediated += 1
            if max(abs(shap[v] - gt.indirect[v]) for v in gt.indirect) > TOL:
                wrong += 1
    share = wrong / mediated if mediated else 0.0
    ok = worst_direct <= 1e-12 and share >= 0.95
    return verdict(capsys, 2, "linear DAGs, independent SHAP", ok,
                   f"max direct err {worst_direct:.2e} (tol 1e-12); indirect err nonzero on "
                   f"{wrong}/{mediated} mediated graphs = {share:.1%} (>= 95%)")


# 3 ---------------------------------------------------------------------------

def check_chain(capsys=None):
    start = time.perf_counter()
    g, bg, fg = make_chain(4, -1.82)
    aug = augment_super_source(g)
    attr = shapley_flow_exact(aug, bg, fg)
    chain = [("S*", "X1"), ("X1", "X2"), ("X2", "X3"), ("X3", "X4"), ("X4", "f")]
    dummies = [("X1", "f"), ("X2", "f"), ("X3", "f")]
    chain_err = max(abs(attr.credit[e] + 1.82) for e in chain)
    dummy_err = max(abs(attr.credit[e]) for e in dummies)
    shap = independent_shap(g, bg, fg)
    asv = asv_view(attr, aug)
    shap_ok = abs(shap["X4"] + 1.82) <= TOL and all(abs(shap[v]) <= DUMMY_TOL for v in ("X1", "X2", "X3"))
    asv_ok = abs(asv["X1"] + 1.82) <= TOL and all(abs(asv[v]) <= DUMMY_TOL for v in ("X2", "X3", "X4"))
    elapsed = time.perf_counter() - start
    ok = chain_err <= TOL and dummy_err <= DUMMY_TOL and shap_ok and asv_ok and elapsed < 1.0
    return verdict(capsys, 3, "chain fixture", ok,
                   f"chain err {chain_err:.2e}, dummy err {dummy_err:.2e}, "
                   f"independent only X4: {shap_ok}, ASV only X1: {asv_ok}, {elapsed:.3f}s (< 1s)")


# 4 ---------------------------------------------------------------------------

def check_or_game(capsys=None):
    start = time.perf_counter()
    g, bg, fg = make_or_game()
    exact = shapley_flow_exact(g, bg, fg)
    edges = [("X1", "f"), ("X2", "f")]
    exact_err = max(abs(exact.credit[e] - 0.5) for e in edges)
    mc = shapley_flow_mc(g, bg, fg, n=10_000, seed=0)
    z = max(abs(mc.credit[e] - 0.5) / mc.stderr[e] for e in edges)
    elapsed = time.perf_counter() - start
    ok = exact_err <= 1e-12 and z <= 3 and elapsed < 5
    return verdict(capsys, 4, "OR game", ok,
                   f"exact err {exact_err:.2e} (tol 1e-12), MC n=10000 max |err|/stderr {z:.2f} "
                   f"(<= 3), {elapsed:.2f}s (< 5s)")


# 5 ---------------------------------------------------------------------------

def check_axioms(capsys=None):
    rng = np.random.default_rng(2024)
    worst = {"efficiency": 0.0, "conservation": 0.0, "linearity": 0.0, "consistency": 0.0, "dummy": 0.0}
    boundaries = dummies = 0
    for _ in range(AXIOM_GRAPHS):
        g, bg, fg, params, body = random_graph(rng, max_nodes=8, max_configs=2_000)
        aug = ensure_augmented(g)
        attr = shapley_flow_exact(aug, bg, fg)

        eff = check_efficiency(aug, attr, cap=10**9)
        boundaries += eff.checked
        worst["efficiency"] = max(worst["efficiency"], eff.max_error)
        worst["conservation"] = max(worst["conservation"], check_conservation(aug, attr).max_error)

        alpha, beta = (float(x) for x in rng.normal(size=2))
        other = " + ".join(f"max({p}, 0)*{p}" for p in params)
        u = attr
        v = shapley_flow_exact(with_sink(aug, params, other), bg, fg)
        w = shapley_flow_exact(with_sink(aug, params, f"({alpha!r})*({body}) + ({beta!r})*({other})"),
                               bg, fg)
        worst["linearity"] = max(worst["linearity"],
                                 max(abs(w.credit[e] - alpha * u.credit[e] - beta * v.credit[e])
                                     for e in w.credit))

        for b in iter_boundaries(aug):
            col = collapse_boundary(aug, b)
            c = shapley_flow_exact(col.graph, col.lift(bg), col.lift(fg))
            err = max(abs(c.credit[e2] - attr.credit[e]) for e, e2 in col.edge_map.items())
            worst["consistency"] = max(worst["consistency"], err)

        for e in dummy_edges(aug, bg, fg):
            dummies += 1
            worst["dummy"] = max(worst["dummy"], abs(attr.credit[e]))
    ok = all(worst[k] <= TOL for k in ("efficiency", "conservation", "linearity", "consistency"))
    ok = ok and worst["dummy"] <= DUMMY_TOL and dummies > 0
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    return verdict(capsys, 5, "axiom suite", ok,
                   f"{AXIOM_GRAPHS} graphs, {boundaries} boundaries, {dummies} certified dummy edges; "
                   f"max errors: {detail}")


# 6 ---------------------------------------------------------------------------

def _fixture_set(rng):
    cases = [make_chain(), make_or_game(), make_diamond(), make_diamond("B * C"),
             make_diamond("max(B, C) - B*C"),
             make_tree({"G1": ["X1", "X2"], "G2": ["X3"]}, "X1 or X3")]
    while len(cases) < 40:
        g, bg, fg, *_ = random_graph(rng, max_nodes=7, max_configs=5_000)
        internal = [n for n in g.nodes if n.kind == "internal"]
        if len(internal) <= 5:
            cases.append((g, bg, fg))
    return cases


def check_oracles(capsys=None):
    rng = np.random.default_rng(6)
    path_err = 0.0
    cases = _fixture_set(rng)
    for g, bg, fg in cases:
        a = shapley_flow_exact(g, bg, fg)
        _, p = shapley_flow_paths(g, bg, fg)
        path_err = max(path_err, max(abs(a.credit[e] - p.credit[e]) for e in a.credit))

    flat_err = 0.0
    for d in range(1, 9):
        names = [f"x{k}" for k in range(d)]
        terms = [f"{rng.normal():.4f}*{a}*max({b}, 0)" for a, b in zip(names, names[1:] + names[:1])]
        fn = parse_expression(" + ".join(terms) + f" + abs({names[-1]})", names)
        g = make_flat(fn)
        bg = {v: float(rng.normal()) for v in names}
        fg = {v: float(rng.normal()) for v in names}
        psi = node_attribution(shapley_flow_exact(g, bg, fg), augment_super_source(g))
        ref = brute_force_shapley(SetGame.from_model(fn, names, bg, fg))
        flat_err = max(flat_err, max(abs(psi[v] - ref[v]) for v in names))

    owen_err = 0.0
    trees = [({"G1": ["X1", "X2"], "G2": ["X3"]}, "X1 or X3"),
             ({"G1": ["X1", "X2"], "G2": ["X3", "X4"]}, "X1*X3 + max(X2, X4) - X1*X2*X4"),
             ({"G1": ["X1"], "G2": ["X2", "X3"], "G3": ["X4", "X5"]}, "X1*X2 + X3*X4 + min(X5, X1)"),
             ({"G1": ["X1", "X2", "X3"]}, "X1*X2*X3 + X2")]
    for blocks, body in trees:
        g, bg, fg = make_tree(blocks, body)
        a = shapley_flow_exact(g, bg, fg)
        for e, v in owen_oracle(g, bg, fg).items():
            owen_err = max(owen_err, abs(a.credit[e] - v))
    ok = path_err <= TOL and flat_err <= TOL and owen_err <= TOL
    return verdict(capsys, 6, "oracle equivalence", ok,
                   f"algorithm vs path formula {path_err:.2e} on {len(cases)} graphs; "
                   f"flat vs brute-force Shapley {flat_err:.2e} (d=1..8); "
                   f"tree vs Owen {owen_err:.2e} on {len(trees)} trees")


# 7 ---------------------------------------------------------------------------

def check_mc_convergence(capsys=None):
    start = time.perf_counter()
    g, bg, fg = make_diamond("B * C")
    exact = shapley_flow_exact(g, bg, fg)
    edges = list(exact.credit)

    def rms(n, seed):
        est = shapley_flow_mc(g, bg, fg, n=n, seed=seed)
        return math.sqrt(sum((est.credit[e] - exact.credit[e]) ** 2 for e in edges) / len(edges))
    small = float(np.mean([rms(400, s) for s in range(20)]))
    large = float(np.mean([rms(40_000, s) for s in range(20)]))
    elapsed = time.perf_counter() - start
    ratio = large / small
    ok = ratio <= 0.2 and elapsed < 60
    return verdict(capsys, 7, "MC convergence on the diamond", ok,
                   f"mean RMS n=400 {small:.4f}, n=40000 {large:.5f}, ratio {ratio:.3f} (<= 0.2), "
                   f"{elapsed:.1f}s (< 60s)")


# 8 ---------------------------------------------------------------------------

def check_reproducibility(capsys=None, tmp=None):
    import tempfile
    tmp = Path(tmp or tempfile.mkdtemp())
    g, sampler = gen_random_linear_graph(RandomGraphConfig(seed=11))
    bg, fg = sampler.take(2)
    paths = io.write_case(tmp / "case", g, fg, [bg])
    texts = []
    for _ in range(2):
        bundle = io.load_case(paths["graph"], paths["fg"], paths["bg"],
                              io.CaseOptions(method="mc", samples=10_000, seed=7))
        texts.append(io.report_to_json(io.run_attribution(bundle)).encode())
    outs = []
    for k in range(2):
        out = tmp / f"cli{k}.json"
        cmd = [sys.executable, "-m", "flowcredit", "attribute", "--graph", str(paths["graph"]),
               "--fg", str(paths["fg"]), "--bg", str(paths["bg"][0]), "--mc", "10000", "--seed", "7",
               "--check-axioms", "--out", str(out)]
        subprocess.run(cmd, check=True)
        outs.append(out.read_bytes())
    ok = texts[0] == texts[1] and outs[0] == outs[1]
    return verdict(capsys, 8, "reproducibility", ok,
                   f"library reports identical: {texts[0] == texts[1]}, "
                   f"CLI reports identical: {outs[0] == outs[1]} ({len(outs[0])} bytes)")


# -- pytest entry points ---------------------------------------------------------

def test_criterion_1_linear_flow(capsys):
    assert check_linear_flow(capsys)


def test_criterion_2_independent_shap(capsys):
    assert check_linear_independent(capsys)


def test_criterion_3_chain(capsys):
    assert check_chain(capsys)


def test_criterion_4_or_game(capsys):
    assert check_or_game(capsys)


def test_criterion_5_axioms(capsys):
    assert check_axioms(capsys)


def test_criterion_6_oracles(capsys):
    assert check_oracles(capsys)


def test_criterion_7_mc_convergence(capsys):
    assert check_mc_convergence(capsys)


def test_criterion_8_reproducibility(capsys, tmp_path):
    assert check_reproducibility(capsys, tmp_path)


if __name__ == "__main__":
    checks = [check_linear_flow, check_linear_independent, check_chain, check_or_game,
              check_axioms, check_oracles, check_mc_convergence, check_reproducibility]
    sys.exit(0 if all([c() for c in checks]) else 1)
