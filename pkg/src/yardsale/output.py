"""Bit-stable file outputs: CSV series, DOT/SVG drawings, TOML summaries."""
from __future__ import annotations

import io
import math
import os
import tempfile
from pathlib import Path

import tomli_w

from .config import Experiment, experiment_to_dict
from .harness import EnsembleSummary, RunResult
from .model import TradeGraph

TIMESERIES_HEADER = ("step", "norm2_sq", "gini", "gap", "cum_stake_sq")


def atomic_write(path, data: str) -> Path:
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt17(v: float) -> str:
    return format(float(v), ".17g")


def timeseries_csv(result: RunResult, wealth_columns: bool = False) -> str:
    s = result.samples
    header = list(TIMESERIES_HEADER)
    n = len(result.final_state)
    if wealth_columns:
        header += [f"x{i}" for i in range(n)]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for k in range(len(s)):
        row = [str(s.step[k]), fmt17(s.norm2_sq[k]), fmt17(s.gini[k]), fmt17(s.gap[k]),
               fmt17(s.cum_stake_sq[k])]
        if wealth_columns:
            row += [fmt17(v) for v in s.wealth[k]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def emit_timeseries(result: RunResult, path, wealth_columns: bool = False) -> Path:
    return atomic_write(path, timeseries_csv(result, wealth_columns))


def circular_layout(n: int) -> list[tuple[float, float]]:
    """Unit-circle positions, agent 0 at the top, proceeding clockwise."""
    return [(math.sin(2 * math.pi * i / n), math.cos(2 * math.pi * i / n)) for i in range(n)]


def _node_scale(x, i: int) -> float:
    top = max(x)
    return math.sqrt(x[i] / top) if top > 0 else 0.0


def graph_dot(result: RunResult, graph: TradeGraph, threshold: float | None = None) -> str:
    x = [float(v) for v in result.final_state]
    thr = result.wealthy_report.threshold if threshold is None else threshold
    pos = circular_layout(graph.n_agents)
    lines = [
        "graph yardsale {",
        '  graph [layout=neato, outputorder=edgesfirst];',
        '  node [shape=circle, style=filled, fillcolor="#9a9a9a", fixedsize=true, fontsize=9];',
        '  edge [color="#555555"];',
    ]
    for i, xi in enumerate(x):
        width = 0.12 + 0.88 * _node_scale(x, i)
        px, py = pos[i]
        lines.append(
            f'  {i} [label="{i}\\n{xi:.4g}", width={width:.4f}, '
            f'pos="{3 * px:.4f},{3 * py:.4f}!", wealth="{fmt17(xi)}", '
            f'wealthy={"true" if xi > thr else "false"}];'
        )
    for i, j in graph.edges:
        lines.append(f"  {i} -- {j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_svg(result: RunResult, graph: TradeGraph, size: int = 400) -> str:
    x = [float(v) for v in result.final_state]
    c = size / 2
    ring = size * 0.38
    pts = [(c + ring * px, c - ring * py) for px, py in circular_layout(graph.n_agents)]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for i, j in graph.edges:
        (x1, y1), (x2, y2) = pts[i], pts[j]
        out.append(f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" '
                   'stroke="#555555" stroke-width="1"/>')
    for i, (px, py) in enumerate(pts):
        r = 3.0 + 27.0 * _node_scale(x, i)
        out.append(f'<circle cx="{px:.3f}" cy="{py:.3f}" r="{r:.3f}" fill="#9a9a9a" '
                   f'stroke="#333333"><title>agent {i}: {fmt17(x[i])}</title></circle>')
        out.append(f'<text x="{px:.3f}" y="{py + 4:.3f}" font-size="10" '
                   f'text-anchor="middle">{i}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(result: RunResult, graph: TradeGraph, path) -> Path:
    return atomic_write(path, graph_svg(result, graph))


def emit_graph_drawing(result: RunResult, graph: TradeGraph, path, svg: bool = False) -> Path:
    """Write the DOT description to ``path``; with ``svg`` also write a sibling ``.svg``."""
    path = atomic_write(path, graph_dot(result, graph))
    if svg:
        emit_svg(result, graph, Path(path).with_suffix(".svg"))
    return path


def summary_dict(summary: EnsembleSummary, experiment: Experiment | None = None) -> dict:
    doc = {
        "summary": {
            "n_runs": summary.n_runs,
            "seed": summary.master_seed,
            "dominance_threshold": summary.dominance_threshold,
            "winner_frequencies": list(summary.winner_frequencies),
            "condensation_rate": summary.condensation_rate,
            "independence_rate": summary.independence_rate,
            "mean_cumulative_stake_sq": summary.mean_cumulative_stake_sq,
            "se_cumulative_stake_sq": summary.se_cumulative_stake_sq,
            "initial_norm2_sq": summary.initial_norm2_sq,
            "mean_final_wealth": list(summary.mean_final_wealth),
            "se_final_wealth": list(summary.se_final_wealth),
            "total_admissibility_violations": summary.total_admissibility_violations,
            "runs_with_violations": summary.runs_with_violations,
            "runs_at_max_steps": summary.runs_at_max_steps,
            "mean_steps": summary.mean_steps,
        },
        "series": {
            "sample_steps": list(summary.sample_steps),
            "mean_gini": list(summary.mean_gini_series),
            "mean_norm2_sq": list(summary.mean_norm2_series),
            "se_norm2_sq": list(summary.se_norm2_series),
        },
    }
    if experiment is not None:
        doc["config"] = experiment_to_dict(experiment)
    return doc


def emit_summary(summary: EnsembleSummary, path, experiment: Experiment | None = None) -> Path:
    return atomic_write(path, tomli_w.dumps(summary_dict(summary, experiment)))


def emit_config(experiment: Experiment, path) -> Path:
    return atomic_write(path, tomli_w.dumps(experiment_to_dict(experiment)))
