"""Single runs and seeded ensembles with the condensation diagnostics."""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import kernel
from .metrics import CondensationReport, condensation_gap, gini, norm2_squared, wealthy_set
from .model import (
    BUILTIN_B,
    BUILTIN_P,
    MarketState,
    PerAgentB,
    PolicyContractError,
    PolicySet,
    RngStreams,
    TradeEvent,
    TradeGraph,
    random_simplex_wealth,
    step,
    uniform_wealth,
    validate_wealth,
)
from .oracles import admissible_scalar

log = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 10_000_000
DEFAULT_STOP_GAP = 1e-9
DEFAULT_RECORD_EVERY = 100
DEFAULT_DOMINANCE = 0.99


class StopReason(str, enum.Enum):
    GAP_REACHED = "gap_reached"
    MAX_STEPS = "max_steps"


class RunError(RuntimeError):
    def __init__(self, run_index: int, cause: BaseException):
        super().__init__(f"run {run_index}: {cause}")
        self.run_index = run_index
        self.cause = cause


@dataclass(frozen=True)
class RandomSimplex:
    """Initial wealth drawn once from the flat Dirichlet, shared by every run."""

    seed: int


@dataclass(frozen=True)
class RunConfig:
    graph: TradeGraph
    delta: float
    b_policy: Any
    p_policy: Any
    initial_wealth: Any = "uniform"
    max_steps: int = DEFAULT_MAX_STEPS
    stop_gap: float = DEFAULT_STOP_GAP
    record_every: int = DEFAULT_RECORD_EVERY
    thinning: str = "linear"
    renormalize_every: int = 0
    master_seed: int = 0
    run_index: int = 0
    wealthy_threshold: float = 0.01

    def __post_init__(self):
        if isinstance(self.initial_wealth, (list, np.ndarray)):
            object.__setattr__(self, "initial_wealth", tuple(float(v) for v in self.initial_wealth))
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not (0.0 <= self.stop_gap < 1.0):
            raise ValueError("stop_gap must lie in [0, 1)")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.thinning not in ("linear", "geometric"):
            raise ValueError("thinning must be 'linear' or 'geometric'")
        if self.renormalize_every < 0:
            raise ValueError("renormalize_every must be >= 0")
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.run_index < 0:
            raise ValueError("run_index must be >= 0")
        if not (0.0 < self.wealthy_threshold < 1.0):
            raise ValueError("wealthy_threshold must lie in (0, 1)")
        x0 = self.initial_vector()
        if x0.shape[0] != self.graph.n_agents:
            raise ValueError(f"initial wealth has {x0.shape[0]} entries, graph has "
                             f"{self.graph.n_agents} agents")
        if isinstance(self.b_policy, PerAgentB):
            self.b_policy.check(self.delta, self.graph.n_agents)
        self.policy_set()

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    def initial_vector(self) -> np.ndarray:
        spec = self.initial_wealth
        n = self.graph.n_agents
        if spec == "uniform":
            return uniform_wealth(n)
        if isinstance(spec, RandomSimplex):
            return random_simplex_wealth(n, spec.seed)
        if isinstance(spec, tuple):
            return validate_wealth(spec, initial=True)
        raise ValueError(f"unrecognized initial wealth spec {spec!r}")

    def policy_set(self) -> PolicySet:
        return PolicySet(self.delta, self.b_policy, self.p_policy)

    def for_run(self, run_index: int) -> RunConfig:
        return dataclasses.replace(self, run_index=run_index)

    def sample_grid_next(self, after: int) -> int:
        """First sampling step strictly after ``after``."""
        r = self.record_every
        if self.thinning == "linear":
            return (after // r + 1) * r
        t = r
        while t <= after:
            t *= 2
        return t


@dataclass
class Samples:
    step: list[int] = field(default_factory=list)
    norm2_sq: list[float] = field(default_factory=list)
    gini: list[float] = field(default_factory=list)
    gap: list[float] = field(default_factory=list)
    cum_stake_sq: list[float] = field(default_factory=list)
    wealth: list[np.ndarray] = field(default_factory=list)

    def add(self, ell: int, x: np.ndarray, graph: TradeGraph, cum_stake: float) -> None:
        self.step.append(ell)
        self.norm2_sq.append(norm2_squared(x))
        self.gini.append(gini(x))
        self.gap.append(condensation_gap(x, graph))
        self.cum_stake_sq.append(cum_stake)
        self.wealth.append(np.array(x))

    def __len__(self) -> int:
        return len(self.step)


@dataclass
class RunResult:
    final_state: np.ndarray
    steps_executed: int
    stop_reason: StopReason
    samples: Samples
    cumulative_stake_sq: float
    admissibility_violations: int
    wealthy_report: CondensationReport
    run_index: int = 0
    master_seed: int = 0


def track_admissibility(event: TradeEvent, state: np.ndarray, delta: float) -> bool:
    """Whether the realized trade satisfied the admissibility bound on its pre-trade state."""
    mu, nu = event.ordered_pair
    return admissible_scalar(float(state[mu]), float(state[nu]), event.p, delta)


class _PythonStepper:
    """General engine: drives ``model.step`` and supports any policy callables."""

    def __init__(self, config: RunConfig, ps: PolicySet, rng: RngStreams,
                 on_event: Callable[[TradeEvent], None] | None):
        self.graph = config.graph
        self.ps = ps
        self.rng = rng
        self.stop_gap = config.stop_gap
        self.on_event = on_event
        self.cum_stake = 0.0
        self.violations = 0

    def advance(self, x, ell, target):
        state = MarketState(x, ell)
        while state.step < target:
            pre = state.wealth
            state, ev = step(state, self.graph, self.ps, self.rng)
            stake = ev.b * ev.x_mu
            self.cum_stake += stake * stake
            if not track_admissibility(ev, pre, self.ps.delta):
                self.violations += 1
            if self.on_event is not None:
                self.on_event(ev)
            x = state.wealth
            mu, nu = ev.ordered_pair
            lo = x[mu] if x[mu] < x[nu] else x[nu]
            if lo < self.stop_gap and condensation_gap(x, self.graph) < self.stop_gap:
                return x, state.step, True
        return state.wealth, state.step, False


class _CompiledStepper:
    def __init__(self, config: RunConfig, ps: PolicySet, rng: RngStreams, code):
        self.graph = config.graph
        self.ei, self.ej = config.graph.edge_arrays
        self.cum = config.graph.cumulative_weights
        self.bk, self.bp, self.pk, self.pp = code
        self.delta = ps.delta
        self.rng = rng
        self.stop_gap = config.stop_gap
        self.acc = np.zeros(1)
        self.counts = np.zeros(1, dtype=np.int64)

    @property
    def cum_stake(self) -> float:
        return float(self.acc[0])

    @property
    def violations(self) -> int:
        return int(self.counts[0])

    def advance(self, x, ell, target):
        n = target - ell
        r = self.rng
        done, status = kernel.advance(
            x, self.ei, self.ej, self.cum, self.bk, self.bp, self.pk, self.pp, self.delta,
            r.pair_stream.take(n), r.u_stream.take(n), r.v_stream.take(n), r.w_stream.take(n),
            n, self.stop_gap, self.acc, self.counts)
        if status == kernel.BAD_B:
            raise PolicyContractError("B outside [delta, 1)", ell + done + 1)
        if status == kernel.BAD_P:
            raise PolicyContractError("p outside (0, 1)", ell + done + 1)
        return x, ell + done, status == kernel.STOPPED


def _pick_engine(engine: str, ps: PolicySet, on_event) -> tuple[str, Any]:
    code = kernel.encode_policies(ps) if kernel.advance is not None else None
    if engine == "auto":
        engine = "compiled" if code is not None and on_event is None else "python"
    if engine == "compiled":
        if code is None:
            raise ValueError("compiled engine supports only the built-in policy kinds")
        if on_event is not None:
            raise ValueError("compiled engine does not emit per-trade events")
    elif engine != "python":
        raise ValueError(f"unknown engine {engine!r}")
    return engine, code


def run_single(config: RunConfig, engine: str = "auto",
               on_event: Callable[[TradeEvent], None] | None = None) -> RunResult:
    """Simulate one trajectory until the condensation gap falls below ``stop_gap``
    or ``max_steps`` trades have been made."""
    graph = config.graph
    ps = config.policy_set()
    rng = RngStreams(config.master_seed, config.run_index)
    engine, code = _pick_engine(engine, ps, on_event)
    if engine == "compiled":
        stepper = _CompiledStepper(config, ps, rng, code)
    else:
        stepper = _PythonStepper(config, ps, rng, on_event)

    x = config.initial_vector().copy()
    ell = 0
    samples = Samples()
    samples.add(0, x, graph, 0.0)
    stopped = condensation_gap(x, graph) < config.stop_gap
    next_sample = config.sample_grid_next(0)
    renorm = config.renormalize_every
    next_renorm = renorm if renorm else math.inf
    while not stopped and ell < config.max_steps:
        target = int(min(next_sample, next_renorm, config.max_steps))
        x, ell, stopped = stepper.advance(x, ell, target)
        if ell == next_renorm:
            x = x / math.fsum(x.tolist())
            next_renorm += renorm
        if ell == next_sample:
            samples.add(ell, x, graph, stepper.cum_stake)
            next_sample = config.sample_grid_next(ell)
    if samples.step[-1] != ell:
        samples.add(ell, x, graph, stepper.cum_stake)

    return RunResult(
        final_state=x,
        steps_executed=ell,
        stop_reason=StopReason.GAP_REACHED if stopped else StopReason.MAX_STEPS,
        samples=samples,
        cumulative_stake_sq=stepper.cum_stake,
        admissibility_violations=stepper.violations,
        wealthy_report=wealthy_set(x, graph, config.wealthy_threshold),
        run_index=config.run_index,
        master_seed=config.master_seed,
    )


def _run_indexed(args) -> RunResult:
    config, engine = args
    try:
        return run_single(config, engine)
    except Exception as exc:
        raise RunError(config.run_index, exc) from exc


def run_many(config: RunConfig, n_runs: int, workers: int = 1,
             engine: str = "auto") -> list[RunResult]:
    """Runs ``run_index = 0 .. n_runs-1``; results come back in run_index order."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    jobs = [(config.for_run(k), engine) for k in range(n_runs)]
    if workers <= 1:
        return [_run_indexed(j) for j in jobs]
    chunk = max(1, n_runs // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_indexed, jobs, chunksize=chunk))


@dataclass
class EnsembleSummary:
    n_runs: int
    master_seed: int
    dominance_threshold: float
    winner_frequencies: tuple[float, ...]
    mean_cumulative_stake_sq: float
    se_cumulative_stake_sq: float
    condensation_rate: float
    independence_rate: float
    sample_steps: tuple[int, ...]
    mean_gini_series: tuple[float, ...]
    mean_norm2_series: tuple[float, ...]
    se_norm2_series: tuple[float, ...]
    norm2_increment_mean: tuple[float, ...]
    norm2_increment_se: tuple[float, ...]
    mean_final_wealth: tuple[float, ...]
    se_final_wealth: tuple[float, ...]
    initial_norm2_sq: float
    total_admissibility_violations: int
    runs_with_violations: int
    runs_at_max_steps: int
    mean_steps: float


def _mean_se(a: np.ndarray, axis: int = 0):
    n = a.shape[axis]
    mean = a.mean(axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, a.std(axis=axis, ddof=1) / math.sqrt(n)


def summarize(results: Sequence[RunResult], config: RunConfig,
              dominance_threshold: float = DEFAULT_DOMINANCE) -> EnsembleSummary:
    """Reduce per-run results (in the given order) to ensemble statistics.

    Series are aligned on the common sampling grid; a run that stopped
    early contributes its final state to every later grid point.
    """
    if not (0.5 < dominance_threshold < 1.0):
        raise ValueError("dominance_threshold must lie in (1/2, 1)")
    n = len(results)
    finals = np.array([r.final_state for r in results])
    condensed = np.array([r.stop_reason is StopReason.GAP_REACHED for r in results])
    winners = (finals > dominance_threshold) & condensed[:, None]
    stakes = np.array([r.cumulative_stake_sq for r in results])
    stake_mean, stake_se = _mean_se(stakes)
    final_mean, final_se = _mean_se(finals)

    last = max(r.steps_executed for r in results)
    grid = [0]
    while True:
        t = config.sample_grid_next(grid[-1])
        if t > last:
            break
        grid.append(t)
    grid_arr = np.array(grid)
    norm = np.empty((n, len(grid)))
    gin = np.empty((n, len(grid)))
    for k, r in enumerate(results):
        idx = np.searchsorted(np.asarray(r.samples.step), grid_arr, side="right") - 1
        norm[k] = np.asarray(r.samples.norm2_sq)[idx]
        gin[k] = np.asarray(r.samples.gini)[idx]
    norm_mean, norm_se = _mean_se(norm)
    inc_mean, inc_se = _mean_se(np.diff(norm, axis=1)) if len(grid) > 1 else (np.empty(0), np.empty(0))
    violations = np.array([r.admissibility_violations for r in results])

    return EnsembleSummary(
        n_runs=n,
        master_seed=config.master_seed,
        dominance_threshold=dominance_threshold,
        winner_frequencies=tuple(float(v) for v in winners.mean(axis=0)),
        mean_cumulative_stake_sq=float(stake_mean),
        se_cumulative_stake_sq=float(stake_se),
        condensation_rate=float(condensed.mean()),
        independence_rate=float(np.mean([r.wealthy_report.is_independent for r in results])),
        sample_steps=tuple(grid),
        mean_gini_series=tuple(float(v) for v in gin.mean(axis=0)),
        mean_norm2_series=tuple(float(v) for v in norm_mean),
        se_norm2_series=tuple(float(v) for v in norm_se),
        norm2_increment_mean=tuple(float(v) for v in inc_mean),
        norm2_increment_se=tuple(float(v) for v in inc_se),
        mean_final_wealth=tuple(float(v) for v in final_mean),
        se_final_wealth=tuple(float(v) for v in final_se),
        initial_norm2_sq=norm2_squared(config.initial_vector()),
        total_admissibility_violations=int(violations.sum()),
        runs_with_violations=int((violations > 0).sum()),
        runs_at_max_steps=int((~condensed).sum()),
        mean_steps=float(np.mean([r.steps_executed for r in results])),
    )


def run_ensemble(config: RunConfig, n_runs: int, dominance_threshold: float = DEFAULT_DOMINANCE,
                 workers: int = 1, engine: str = "auto") -> EnsembleSummary:
    if not (0.5 < dominance_threshold < 1.0):
        raise ValueError("dominance_threshold must lie in (1/2, 1)")
    results = run_many(config, n_runs, workers, engine)
    return summarize(results, config, dominance_threshold)


def is_builtin(config: RunConfig) -> bool:
    return isinstance(config.b_policy, BUILTIN_B) and isinstance(config.p_policy, BUILTIN_P)
