"""Case files, attribution reports and fixtures.

A case is a graph document plus one foreground and one or more background
sample documents, all UTF-8 JSON::

    graph:  {"nodes": [{"id", "kind"?, "parents"?, "function"?, "domain"?, "noise"?}],
             "sink": "f"}
    sample: {"values": {"X1": 0.5, "color": "red"}}
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from .baselines import dummy_edges
from .errors import MissingSource, ParseError, SchemaError
from .flow import (
    CheckResult,
    EdgeAttribution,
    average_attributions,
    asv_view,
    check_conservation,
    check_efficiency,
    config_cap,
    multi_background,
    node_attribution,
)
from .graph import BOUNDARY_CAP, CausalGraph, build_graph, ensure_augmented, forward_values, graph_to_doc
from .synthetic import NoiseInterval, infer_noise, sample_noise

REPORT_FORMAT = "flowcredit-report/1"
DUMMY_TOL = 1e-12
NOISE_SAMPLES = 16

_VALUE = {"type": ["number", "string"]}

_FUNCTION_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"type": "string"}},
    "allOf": [
        {"if": {"properties": {"type": {"const": "expr"}}},
         "then": {"required": ["expr"], "properties": {"expr": {"type": "string"}}}},
        {"if": {"properties": {"type": {"const": "linear"}}},
         "then": {"required": ["weights"],
                  "properties": {"weights": {"type": "array", "items": {"type": "number"}},
                                 "bias": {"type": "number"}}}},
        {"if": {"properties": {"type": {"const": "table"}}},
         "then": {"required": ["table"],
                  "properties": {"table": {"type": "array", "items": {
                      "type": "object", "required": ["key", "value"],
                      "properties": {"key": {"type": "array", "items": _VALUE}, "value": _VALUE}}},
                      "default": _VALUE}}},
        {"if": {"properties": {"type": {"const": "external"}}},
         "then": {"required": ["command"],
                  "properties": {"command": {"type": "array", "items": {"type": "string"},
                                             "minItems": 1},
                                 "protocol": {"type": "string"},
                                 "timeout": {"type": "number", "exclusiveMinimum": 0}}}},
    ],
}

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["nodes"],
    "properties": {
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "kind": {"enum": ["source", "internal", "sink"]},
                    "parents": {"type": "array", "items": {"type": "string"}},
                    "function": _FUNCTION_SCHEMA,
                    "domain": {"type": "array", "items": _VALUE, "minItems": 1},
                    "noise": {"type": "boolean"},
                },
                "additionalProperties": False,
            },
        },
        "sink": {"type": "string"},
    },
    "additionalProperties": False,
}

SAMPLE_SCHEMA = {
    "type": "object",
    "required": ["values"],
    "properties": {"values": {"type": "object", "additionalProperties": _VALUE}},
    "additionalProperties": False,
}


def read_json(path) -> object:
    """Parse a JSON file, reporting syntax errors with line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(str(path), 1, exc.start + 1, "file is not valid UTF-8") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), exc.lineno, exc.colno, exc.msg) from None


def _validate(doc, schema, where):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message} (at {loc})") from None


def load_graph(path) -> CausalGraph:
    doc = read_json(path)
    _validate(doc, GRAPH_SCHEMA, str(path))
    return build_graph(doc)


def load_sample(path) -> dict:
    doc = read_json(path)
    _validate(doc, SAMPLE_SCHEMA, str(path))
    return dict(doc["values"])


@dataclass
class CaseOptions:
    method: str = "exact"  # "exact" | "mc"
    samples: int = None
    seed: int = 0
    cap: int = None
    boundary_cap: int = BOUNDARY_CAP
    check_axioms: bool = True
    dummy_scan: bool = False
    noise_samples: int = NOISE_SAMPLES
    n_jobs: int = 1


@dataclass
class CaseBundle:
    graph: CausalGraph
    foreground: dict
    backgrounds: list
    options: CaseOptions = field(default_factory=CaseOptions)


def check_sample(g: CausalGraph, sample: Mapping, where="sample") -> dict:
    """Fill in noise values from observations and verify sources and domains."""
    sample = dict(sample)
    needs_noise = [n.id for n in g.nodes if n.is_noise and n.id not in sample]
    if needs_noise:
        observed = [n.id for n in g.nodes if n.kind not in ("super", "sink") and not n.is_noise]
        if all(v in sample for v in observed):
            inferred = infer_noise(g, sample)
            for k in needs_noise:
                if k in inferred:
                    sample[k] = inferred[k]
    for n in g.nodes:
        if n.kind != "source":
            continue
        if n.id not in sample:
            raise MissingSource(n.id)
        v = sample[n.id]
        if n.domain is not None and not isinstance(v, NoiseInterval) and v not in n.domain:
            raise SchemaError(f"{where}: value {v!r} of {n.id!r} is outside its domain {list(n.domain)}")
    return sample


def load_case(graph_path, fg_path, bg_paths, options: CaseOptions = None) -> CaseBundle:
    """Read, validate and cross-check the files of one attribution case."""
    if isinstance(bg_paths, (str, os.PathLike)):
        bg_paths = [bg_paths]
    g = load_graph(graph_path)
    fg = check_sample(g, load_sample(fg_path), str(fg_path))
    bgs = [check_sample(g, load_sample(p), str(p)) for p in bg_paths]
    if not bgs:
        raise SchemaError("at least one background sample is required")
    return CaseBundle(g, fg, bgs, options or CaseOptions())


# --------------------------------------------------------------------------
# reports


@dataclass
class AttributionReport:
    credit: dict  # (tail, head) -> float, super-source edges included
    node_credit: dict
    source_credit: dict
    f_foreground: float
    f_background: float
    method: str
    samples: int = None
    seed: int = None
    configurations: int = None
    backgrounds: int = 1
    stderr: dict = None
    checks: list = field(default_factory=list)
    super_source: str = None

    @property
    def target_delta(self) -> float:
        return self.f_foreground - self.f_background

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [{"check": c.name, "max_error": c.max_error, "failures": c.failures}
                for c in self.checks if not c.passed]

    def visible_edges(self, show_super=False) -> list:
        return sorted(e for e in self.credit if show_super or e[0] != self.super_source)

    def to_attribution(self) -> EdgeAttribution:
        return EdgeAttribution(dict(self.credit), self.method, self.f_foreground,
                               self.f_background, self.samples, self.seed,
                               None if self.stderr is None else dict(self.stderr),
                               self.configurations, self.backgrounds)


def _average_over_noise(g, fgs, bgs, opts):
    seeds = np.random.SeedSequence(opts.seed).spawn(len(fgs))
    attrs = []
    for fg, ss in zip(fgs, seeds):
        seed = int(ss.generate_state(1)[0])
        attrs.append(multi_background(g, bgs, fg, opts.method, opts.samples, seed,
                                      opts.cap, opts.n_jobs))
    out = average_attributions(attrs)
    out.seed = opts.seed if opts.method != "exact" else None
    return out


def _expand_noise(samples, m, seed):
    """Replace interval-valued noise by ``m`` concrete draws per sample."""
    out = []
    for k, s in enumerate(samples):
        intervals = {key: v for key, v in s.items() if isinstance(v, NoiseInterval)}
        if not intervals:
            out.append(s)
            continue
        for draw in sample_noise(intervals, m, seed + k):
            out.append({**s, **draw})
    return out


def run_attribution(bundle: CaseBundle) -> AttributionReport:
    """Attribute the case and run the requested axiom checks."""
    opts = bundle.options
    g = ensure_augmented(bundle.graph)
    if opts.method in ("mc", "monte-carlo") and not opts.samples:
        raise ValueError("Monte Carlo needs a positive sample count")
    fgs = _expand_noise([bundle.foreground], opts.noise_samples, opts.seed)
    bgs = _expand_noise(bundle.backgrounds, opts.noise_samples, opts.seed + 1)
    cap = opts.cap if opts.cap is not None else config_cap()
    opts_cap = CaseOptions(**{**opts.__dict__, "cap": cap})
    if len(fgs) == 1:
        attr = multi_background(g, bgs, fgs[0], opts.method, opts.samples, opts.seed, cap,
                                opts.n_jobs)
    else:
        attr = _average_over_noise(g, fgs, bgs, opts_cap)

    checks = []
    if opts.check_axioms:
        checks.append(check_efficiency(g, attr, cap=opts.boundary_cap))
        checks.append(check_conservation(g, attr))
    if opts.dummy_scan:
        checks.append(scan_dummies(g, bgs, fgs, attr))
    return AttributionReport(
        credit=dict(attr.credit),
        node_credit=node_attribution(attr, g),
        source_credit=asv_view(attr, g),
        f_foreground=attr.f_foreground,
        f_background=attr.f_background,
        method="exact" if opts.method == "exact" else "monte-carlo",
        samples=attr.sample_count,
        seed=attr.seed,
        configurations=attr.configurations,
        backgrounds=attr.backgrounds,
        stderr=None if attr.stderr is None else dict(attr.stderr),
        checks=checks,
        super_source=g.super_source,
    )


def scan_dummies(g, bgs, fgs, attr, tol=DUMMY_TOL) -> CheckResult:
    """Brute-force dummy certification; certified edges must carry zero credit.

    An edge counts as dummy only if it is dummy for every sample pair.
    """
    dummies = None
    for fg in fgs:
        for bg in bgs:
            d = dummy_edges(g, bg, fg)
            dummies = d if dummies is None else dummies & d
    worst, failures = 0.0, []
    for e in sorted(dummies):
        err = abs(attr.credit[e])
        worst = max(worst, err)
        if err > tol:
            failures.append({"edge": list(e), "credit": attr.credit[e]})
    return CheckResult("dummy", not failures, worst, len(dummies),
                       "certified dummies: " + ", ".join(f"{u}->{v}" for u, v in sorted(dummies)),
                       failures)


def _num(x):
    # JSON has no NaN/inf; use null so reports stay strict JSON
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return float(x)


def report_to_doc(report: AttributionReport, show_super=False) -> dict:
    edges = []
    for u, v in report.visible_edges(show_super):
        row = {"from": u, "to": v, "credit": _num(report.credit[(u, v)])}
        if report.stderr is not None:
            row["stderr"] = _num(report.stderr[(u, v)])
        edges.append(row)
    nodes = {k: _num(v) for k, v in report.node_credit.items()
             if show_super or k != report.super_source}
    return {
        "format": REPORT_FORMAT,
        "method": {"name": report.method, "samples": report.samples, "seed": report.seed,
                   "configurations": report.configurations, "backgrounds": report.backgrounds},
        "f_foreground": _num(report.f_foreground),
        "f_background": _num(report.f_background),
        "target_delta": _num(report.target_delta),
        "edges": edges,
        "nodes": nodes,
        "sources": {k: _num(v) for k, v in report.source_credit.items()},
        "super_source": report.super_source,
        "checks": [{"name": c.name, "passed": c.passed, "max_error": _num(c.max_error),
                    "checked": c.checked, "detail": c.detail, "failures": c.failures}
                   for c in report.checks],
        "passed": report.passed,
    }


def report_to_json(report: AttributionReport, show_super=False) -> str:
    """Deterministic JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(report_to_doc(report, show_super), sort_keys=True, indent=2,
                      allow_nan=False, ensure_ascii=False) + "\n"


def _float(x):
    return math.nan if x is None else float(x)


def report_from_doc(doc: Mapping) -> AttributionReport:
    if doc.get("format") != REPORT_FORMAT:
        raise SchemaError(f"not a report document (format {doc.get('format')!r})")
    credit, stderr = {}, None
    for row in doc["edges"]:
        e = (row["from"], row["to"])
        credit[e] = _float(row["credit"])
        if "stderr" in row:
            stderr = stderr or {}
            stderr[e] = _float(row["stderr"])
    m = doc["method"]
    checks = [CheckResult(c["name"], c["passed"], _float(c["max_error"]), c["checked"],
                          c["detail"], c["failures"]) for c in doc["checks"]]
    return AttributionReport(
        credit=credit,
        node_credit={k: _float(v) for k, v in doc["nodes"].items()},
        source_credit={k: _float(v) for k, v in doc["sources"].items()},
        f_foreground=_float(doc["f_foreground"]),
        f_background=_float(doc["f_background"]),
        method=m["name"], samples=m["samples"], seed=m["seed"],
        configurations=m["configurations"], backgrounds=m["backgrounds"],
        stderr=stderr, checks=checks, super_source=doc.get("super_source"),
    )


def load_report(path) -> AttributionReport:
    return report_from_doc(read_json(path))


# --------------------------------------------------------------------------
# fixtures


def _sample_doc(sample: Mapping) -> dict:
    return {"values": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                       for k, v in sorted(sample.items())}}


def _dump(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=False, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def write_case(out_dir, g: CausalGraph, fg: Mapping, bgs: Sequence[Mapping]) -> dict:
    """Write ``graph.json``, ``fg.json`` and ``bg.json`` (``bg2.json``, ...)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"graph": out / "graph.json", "fg": out / "fg.json", "bg": []}
    _dump(paths["graph"], graph_to_doc(g))
    _dump(paths["fg"], _sample_doc(fg))
    for k, bg in enumerate(bgs):
        p = out / ("bg.json" if k == 0 else f"bg{k + 1}.json")
        _dump(p, _sample_doc(bg))
        paths["bg"].append(p)
    return paths


def source_values(g: CausalGraph, sample: Mapping) -> dict:
    return {s: sample[s] for s in g.sources}


def observed_values(g: CausalGraph, sample: Mapping) -> dict:
    return {k: v for k, v in forward_values(g, sample).items() if v is not None}
