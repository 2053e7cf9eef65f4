"""TOML experiment files: strict parsing, defaults, presets and echo.

Layout (every section optional except ``model.n_agents``)::

    [meta]      name, description, outside_theorem
    [model]     n_agents, delta, initial_wealth
    [graph]     kind = complete | cycle | star | path | edge_list, edges, weights
    [policies]  b_policy = {kind = ...}, p_policy = {kind = ...}
    [run]       max_steps, stop_gap, record_every, thinning, renormalize_every,
                seed, n_runs, dominance_threshold, wealthy_threshold, workers
    [output]    directory, formats, wealth_columns

Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import tomli

from .harness import DEFAULT_DOMINANCE, RandomSimplex, RunConfig
from .model import (
    ConstantB,
    ConstantP,
    PerAgentB,
    SaturatingPovertyP,
    TradeGraph,
    UniformB,
)

DEFAULT_DELTA = 0.1
DEFAULT_B = 0.25
OUTPUT_FORMATS = ("csv", "dot", "svg", "summary")

SCHEMA = {
    "meta": {"name", "description", "outside_theorem"},
    "model": {"n_agents", "delta", "initial_wealth"},
    "graph": {"kind", "edges", "weights"},
    "policies": {"b_policy", "p_policy"},
    "run": {"max_steps", "stop_gap", "record_every", "thinning", "renormalize_every", "seed",
            "n_runs", "dominance_threshold", "wealthy_threshold", "workers"},
    "output": {"directory", "formats", "wealth_columns"},
}
B_KINDS = {"constant": {"value"}, "per_agent": {"coefficients"}, "uniform": {"low", "high"}}
P_KINDS = {"constant": {"value"}, "saturating_poverty": {"kappa", "floor"}}
GRAPH_KINDS = ("complete", "cycle", "star", "path", "edge_list")


class ConfigError(ValueError):
    """Invalid experiment file; the message names the offending key."""


@dataclass(frozen=True)
class OutputSpec:
    directory: str | None = None
    formats: tuple[str, ...] = OUTPUT_FORMATS
    wealth_columns: bool = False


@dataclass(frozen=True)
class Experiment:
    run: RunConfig
    n_runs: int = 1
    dominance_threshold: float = DEFAULT_DOMINANCE
    workers: int = 1
    output: OutputSpec = field(default_factory=OutputSpec)
    meta: dict = field(default_factory=dict)

    def with_overrides(self, seed: int | None = None, n_runs: int | None = None,
                       directory: str | None = None) -> Experiment:
        exp = self
        if seed is not None:
            try:
                exp = dataclasses.replace(exp, run=dataclasses.replace(exp.run, master_seed=seed))
            except ValueError as exc:
                raise ConfigError(f"--seed: {exc}") from exc
        if n_runs is not None:
            if n_runs < 1:
                raise ConfigError("--runs: must be >= 1")
            exp = dataclasses.replace(exp, n_runs=n_runs)
        if directory is not None:
            exp = dataclasses.replace(exp, output=dataclasses.replace(exp.output, directory=directory))
        return exp


def _fail(key: str, msg: str):
    raise ConfigError(f"{key}: {msg}")


def _check_keys(table: dict, allowed: set, where: str) -> None:
    for key in table:
        if key not in allowed:
            _fail(f"{where}.{key}" if where else key, "unknown key")


def _number(table: dict, key: str, where: str, default=None, integer: bool = False):
    if key not in table:
        if default is None:
            _fail(f"{where}.{key}", "required")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{where}.{key}", f"expected a number, got {v!r}")
    if integer:
        if not isinstance(v, int):
            _fail(f"{where}.{key}", f"expected an integer, got {v!r}")
        return v
    if not math.isfinite(v):
        _fail(f"{where}.{key}", "must be finite")
    return float(v)


def _in_range(v, key: str, lo, hi, lo_open=True, hi_open=True):
    ok_lo = v > lo if lo_open else v >= lo
    ok_hi = v < hi if hi_open else v <= hi
    if not (ok_lo and ok_hi):
        _fail(key, f"{v!r} not in {'(' if lo_open else '['}{lo}, {hi}{')' if hi_open else ']'}")


def _float_list(v, key: str) -> list[float]:
    if not isinstance(v, list) or not v:
        _fail(key, "expected a non-empty array of numbers")
    out = []
    for item in v:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            _fail(key, f"expected numbers, got {item!r}")
        out.append(float(item))
    return out


def _parse_graph(t: dict, n: int) -> TradeGraph:
    _check_keys(t, SCHEMA["graph"], "graph")
    kind = t.get("kind", "complete")
    if kind not in GRAPH_KINDS:
        _fail("graph.kind", f"{kind!r} not one of {', '.join(GRAPH_KINDS)}")
    weights = _float_list(t["weights"], "graph.weights") if "weights" in t else None
    if kind != "edge_list" and "edges" in t:
        _fail("graph.edges", f"only allowed with kind = 'edge_list', not {kind!r}")
    try:
        if kind == "edge_list":
            if "edges" not in t:
                _fail("graph.edges", "required for kind = 'edge_list'")
            edges = t["edges"]
            if (not isinstance(edges, list) or not edges
                    or not all(isinstance(e, list) and len(e) == 2
                               and all(isinstance(k, int) and not isinstance(k, bool) for k in e)
                               for e in edges)):
                _fail("graph.edges", "expected a non-empty array of [i, j] integer pairs")
            try:
                TradeGraph.from_edges(n, [tuple(e) for e in edges])
            except ValueError as exc:
                _fail("graph.edges", str(exc))
            return TradeGraph.from_edges(n, [tuple(e) for e in edges], weights)
        base = {"complete": TradeGraph.complete, "cycle": TradeGraph.cycle,
                "star": TradeGraph.star, "path": TradeGraph.path}[kind](n)
        if weights is None:
            return base
        return TradeGraph.from_edges(n, base.edges, weights, kind=kind)
    except ConfigError:
        raise
    except ValueError as exc:
        _fail("graph.weights", str(exc))


def _parse_policy(t, key: str, kinds: dict):
    if not isinstance(t, dict):
        _fail(key, "expected a table with a 'kind' key")
    kind = t.get("kind")
    if kind not in kinds:
        _fail(f"{key}.kind", f"{kind!r} not one of {', '.join(kinds)}")
    _check_keys(t, kinds[kind] | {"kind"}, key)
    if key.endswith("b_policy"):
        if kind == "constant":
            return ConstantB(_number(t, "value", key))
        if kind == "per_agent":
            return PerAgentB(tuple(_float_list(t.get("coefficients"), f"{key}.coefficients")))
        return UniformB(_number(t, "low", key), _number(t, "high", key))
    if kind == "constant":
        return ConstantP(_number(t, "value", key))
    return SaturatingPovertyP(_number(t, "kappa", key, 1.0), _number(t, "floor", key, 0.25))


def _parse_initial(v, n: int):
    key = "model.initial_wealth"
    if v == "uniform":
        return "uniform"
    if isinstance(v, dict):
        _check_keys(v, {"kind", "seed"}, key)
        if v.get("kind") != "random":
            _fail(f"{key}.kind", "only 'random' is accepted in table form")
        seed = _number(v, "seed", key, 0, integer=True)
        if seed < 0:
            _fail(f"{key}.seed", "must be >= 0")
        return RandomSimplex(seed)
    if isinstance(v, list):
        x = _float_list(v, key)
        if len(x) != n:
            _fail(key, f"has {len(x)} entries, model.n_agents = {n}")
        for k, xi in enumerate(x):
            if not (0.0 < xi < 1.0):
                _fail(f"{key}[{k}]", f"{xi!r} not in (0, 1)")
        total = math.fsum(x)
        if abs(total - 1.0) > 1e-12:
            _fail(key, f"entries sum to {total!r}, need 1 within 1e-12")
        return tuple(x)
    _fail(key, "expected 'uniform', an array of shares, or {kind = 'random', seed = N}")


def experiment_from_dict(doc: dict) -> Experiment:
    _check_keys(doc, set(SCHEMA), "")
    for section, value in doc.items():
        if not isinstance(value, dict):
            _fail(section, "expected a table")
    meta = doc.get("meta", {})
    _check_keys(meta, SCHEMA["meta"], "meta")

    model = doc.get("model", {})
    _check_keys(model, SCHEMA["model"], "model")
    n = _number(model, "n_agents", "model", integer=True)
    if n < 2:
        _fail("model.n_agents", f"{n} < 2")
    delta = _number(model, "delta", "model", DEFAULT_DELTA)
    _in_range(delta, "model.delta", 0.0, 1.0)
    initial = _parse_initial(model.get("initial_wealth", "uniform"), n)

    graph = _parse_graph(doc.get("graph", {}), n)

    pol = doc.get("policies", {})
    _check_keys(pol, SCHEMA["policies"], "policies")
    b_policy = _parse_policy(pol.get("b_policy", {"kind": "constant", "value": DEFAULT_B}),
                             "policies.b_policy", B_KINDS)
    p_policy = _parse_policy(pol.get("p_policy", {"kind": "constant", "value": 0.5}),
                             "policies.p_policy", P_KINDS)
    try:
        if isinstance(b_policy, PerAgentB):
            b_policy.check(delta, n)
        else:
            b_policy.check(delta)
    except ValueError as exc:
        _fail("policies.b_policy", str(exc))
    try:
        p_policy.check(delta)
    except ValueError as exc:
        _fail("policies.p_policy", str(exc))

    run = doc.get("run", {})
    _check_keys(run, SCHEMA["run"], "run")
    max_steps = _number(run, "max_steps", "run", 10_000_000, integer=True)
    if max_steps < 1:
        _fail("run.max_steps", f"{max_steps} < 1")
    stop_gap = _number(run, "stop_gap", "run", 1e-9)
    _in_range(stop_gap, "run.stop_gap", 0.0, 1.0, lo_open=False)
    record_every = _number(run, "record_every", "run", 100, integer=True)
    if record_every < 1:
        _fail("run.record_every", f"{record_every} < 1")
    thinning = run.get("thinning", "linear")
    if thinning not in ("linear", "geometric"):
        _fail("run.thinning", f"{thinning!r} not one of linear, geometric")
    renorm = _number(run, "renormalize_every", "run", 0, integer=True)
    if renorm < 0:
        _fail("run.renormalize_every", "must be >= 0")
    seed = _number(run, "seed", "run", 0, integer=True)
    if not (0 <= seed < 2**64):
        _fail("run.seed", "must be a 64-bit unsigned integer")
    n_runs = _number(run, "n_runs", "run", 1, integer=True)
    if n_runs < 1:
        _fail("run.n_runs", f"{n_runs} < 1")
    dominance = _number(run, "dominance_threshold", "run", DEFAULT_DOMINANCE)
    _in_range(dominance, "run.dominance_threshold", 0.5, 1.0)
    wealthy = _number(run, "wealthy_threshold", "run", 0.01)
    _in_range(wealthy, "run.wealthy_threshold", 0.0, 1.0)
    workers = _number(run, "workers", "run", 1, integer=True)
    if workers < 1:
        _fail("run.workers", f"{workers} < 1")

    out = doc.get("output", {})
    _check_keys(out, SCHEMA["output"], "output")
    directory = out.get("directory")
    if directory is not None and not isinstance(directory, str):
        _fail("output.directory", "expected a string")
    formats = out.get("formats", list(OUTPUT_FORMATS))
    if not isinstance(formats, list) or any(f not in OUTPUT_FORMATS for f in formats):
        _fail("output.formats", f"expected an array drawn from {', '.join(OUTPUT_FORMATS)}")
    wealth_columns = out.get("wealth_columns", False)
    if not isinstance(wealth_columns, bool):
        _fail("output.wealth_columns", "expected true or false")

    try:
        rc = RunConfig(graph=graph, delta=delta, b_policy=b_policy, p_policy=p_policy,
                       initial_wealth=initial, max_steps=max_steps, stop_gap=stop_gap,
                       record_every=record_every, thinning=thinning, renormalize_every=renorm,
                       master_seed=seed, wealthy_threshold=wealthy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Experiment(rc, n_runs, dominance, workers,
                      OutputSpec(directory, tuple(formats), wealth_columns), dict(meta))


def load_experiment(path) -> Experiment:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return loads_experiment(text, str(path))


def loads_experiment(text: str, source: str = "<string>") -> Experiment:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: parse error: {exc}") from None
    return experiment_from_dict(doc)


def parse_config(path) -> RunConfig:
    """Read and fully validate an experiment file, returning its run configuration."""
    return load_experiment(path).run


def preset_names() -> list[str]:
    root = resources.files("yardsale") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise ConfigError(f"--preset: unknown preset {name!r}; known: {', '.join(preset_names())}")
    return (resources.files("yardsale") / "presets" / f"{name}.toml").read_text(encoding="utf-8")


def load_preset(name: str) -> Experiment:
    return loads_experiment(preset_text(name), f"preset {name}")


# ---------------------------------------------------------------------------
# Echo
# ---------------------------------------------------------------------------

def _policy_dict(pol) -> dict:
    if isinstance(pol, ConstantB):
        return {"kind": "constant", "value": pol.value}
    if isinstance(pol, PerAgentB):
        return {"kind": "per_agent", "coefficients": list(pol.coefficients)}
    if isinstance(pol, UniformB):
        return {"kind": "uniform", "low": pol.low, "high": pol.high}
    if isinstance(pol, ConstantP):
        return {"kind": "constant", "value": pol.value}
    if isinstance(pol, SaturatingPovertyP):
        return {"kind": "saturating_poverty", "kappa": pol.kappa, "floor": pol.floor}
    raise TypeError(f"policy {pol!r} has no file representation")


def _graph_dict(g: TradeGraph) -> dict:
    d: dict[str, Any] = {"kind": g.kind}
    if g.kind == "edge_list":
        d["edges"] = [list(e) for e in g.edges]
    if not g.is_uniform:
        d["weights"] = list(g.weights)
    return d


def experiment_to_dict(exp: Experiment) -> dict:
    rc = exp.run
    init = rc.initial_wealth
    if isinstance(init, RandomSimplex):
        init = {"kind": "random", "seed": init.seed}
    elif isinstance(init, tuple):
        init = list(init)
    doc: dict[str, Any] = {}
    if exp.meta:
        doc["meta"] = dict(exp.meta)
    doc["model"] = {"n_agents": rc.n_agents, "delta": rc.delta, "initial_wealth": init}
    doc["graph"] = _graph_dict(rc.graph)
    doc["policies"] = {"b_policy": _policy_dict(rc.b_policy), "p_policy": _policy_dict(rc.p_policy)}
    doc["run"] = {
        "max_steps": rc.max_steps, "stop_gap": rc.stop_gap, "record_every": rc.record_every,
        "thinning": rc.thinning, "renormalize_every": rc.renormalize_every,
        "seed": rc.master_seed, "n_runs": exp.n_runs,
        "dominance_threshold": exp.dominance_threshold,
        "wealthy_threshold": rc.wealthy_threshold, "workers": exp.workers,
    }
    out: dict[str, Any] = {"formats": list(exp.output.formats),
                           "wealth_columns": exp.output.wealth_columns}
    if exp.output.directory is not None:
        out["directory"] = exp.output.directory
    doc["output"] = out
    return doc
