"""State, trading graph, policies, random streams and the single-trade rule.

Agents are indexed from 0.  A wealth vector is a 1-D float64 array of
shares of the total economy; the trade rule moves a fraction ``B`` of the
poorer agent's wealth across the drawn edge, the direction set by a coin
with success probability ``p`` for the richer agent.
"""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from .oracles import min_admissible_p_scalar

SUM_TOL = 1e-10

STREAM_TAGS = {"pair": 0, "u": 1, "v": 2, "w": 3}


class PolicyContractError(RuntimeError):
    """A policy produced B outside [delta, 1) or p outside (0, 1)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


# ---------------------------------------------------------------------------
# Wealth vectors
# ---------------------------------------------------------------------------

def validate_wealth(x: Sequence[float], initial: bool = False) -> np.ndarray:
    """Return ``x`` as a float64 array after checking the share invariants.

    With ``initial=True`` every share must lie strictly inside (0, 1).
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ValueError("wealth vector needs at least 2 agents")
    if not np.all(np.isfinite(arr)):
        raise ValueError("wealth shares must be finite")
    if initial:
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("initial wealth shares must lie in (0, 1)")
    elif np.any(arr < 0.0):
        raise ValueError("wealth shares must be nonnegative")
    total = math.fsum(arr.tolist())
    if abs(total - 1.0) > SUM_TOL:
        raise ValueError(f"wealth shares sum to {total!r}, not 1")
    return arr


def uniform_wealth(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least 2 agents")
    return np.full(n, 1.0 / n)


def random_simplex_wealth(n: int, seed: int) -> np.ndarray:
    """Flat-Dirichlet draw on the open simplex, reproducible from ``seed``."""
    if n < 2:
        raise ValueError("need at least 2 agents")
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    while True:
        x = gen.dirichlet(np.ones(n))
        x = x / math.fsum(x.tolist())
        if np.all(x > 0.0) and np.all(x < 1.0):
            return x


# ---------------------------------------------------------------------------
# Trading graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TradeGraph:
    """Undirected trading graph with a probability weight on each edge.

    ``edges`` holds unordered pairs stored as ``(i, j)`` with ``i < j``;
    that stored orientation is the "drawn order" seen on wealth ties.
    """

    n_agents: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    kind: str = "edge_list"

    def __post_init__(self):
        n = self.n_agents
        if n < 2:
            raise ValueError("a trading graph needs at least 2 agents")
        if not self.edges:
            raise ValueError("a trading graph needs at least one edge")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for {n} agents")
            if i == j:
                raise ValueError(f"self-loop at agent {i}")
            if i > j:
                raise ValueError(f"edge ({i}, {j}) must be stored with i < j")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if len(self.weights) != len(self.edges):
            raise ValueError("one weight per edge required")
        if any(not (w > 0.0 and math.isfinite(w)) for w in self.weights):
            raise ValueError("edge weights must be positive and finite")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError("edge weights must sum to 1")
        cum = np.cumsum(np.asarray(self.weights, dtype=np.float64))
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_cum_list", cum.tolist())
        object.__setattr__(self, "_ei", np.array([e[0] for e in self.edges], dtype=np.int64))
        object.__setattr__(self, "_ej", np.array([e[1] for e in self.edges], dtype=np.int64))

    @classmethod
    def from_edges(cls, n_agents: int, edges, weights=None, kind: str = "edge_list") -> TradeGraph:
        """Build from (i, j) pairs in either orientation; weights default to uniform."""
        canon = tuple((min(int(i), int(j)), max(int(i), int(j))) for i, j in edges)
        if weights is None:
            w = [1.0] * len(canon)
        else:
            w = [float(v) for v in weights]
            if len(w) != len(canon):
                raise ValueError("one weight per edge required")
            if any(not (v > 0.0 and math.isfinite(v)) for v in w):
                raise ValueError("edge weights must be positive and finite")
        total = math.fsum(w)
        return cls(n_agents, canon, tuple(v / total for v in w), kind)

    @classmethod
    def complete(cls, n: int) -> TradeGraph:
        return cls.from_edges(n, itertools.combinations(range(n), 2), kind="complete")

    @classmethod
    def cycle(cls, n: int) -> TradeGraph:
        if n < 3:
            raise ValueError("a cycle needs at least 3 agents")
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)], kind="cycle")

    @classmethod
    def path(cls, n: int) -> TradeGraph:
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)], kind="path")

    @classmethod
    def star(cls, n: int, weights=None) -> TradeGraph:
        """Agent 0 is the hub."""
        return cls.from_edges(n, [(0, k) for k in range(1, n)], weights, kind="star")

    @classmethod
    def from_adjacency(cls, adjacency, weights=None) -> TradeGraph:
        a = np.asarray(adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        n = a.shape[0]
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if a[i, j]]
        return cls.from_edges(n, edges, weights)

    @property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_agents, self.n_agents), dtype=np.int8)
        a[self._ei, self._ej] = 1
        a[self._ej, self._ei] = 1
        return a

    @property
    def cumulative_weights(self) -> np.ndarray:
        return self._cum

    @property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self._ei, self._ej

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in set(self.edges)

    def edge_at(self, u: float) -> tuple[int, int]:
        """Map a uniform variate in [0, 1) to an edge by inverse CDF."""
        k = bisect.bisect_right(self._cum_list, u)
        if k >= len(self.edges):
            k = len(self.edges) - 1
        return self.edges[k]

    @property
    def is_uniform(self) -> bool:
        return len(set(self.weights)) == 1

    def __eq__(self, other):
        if not isinstance(other, TradeGraph):
            return NotImplemented
        return (
            self.n_agents == other.n_agents
            and self.edges == other.edges
            and np.allclose(self.weights, other.weights, rtol=0, atol=1e-15)
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

class UniformStream:
    """Buffered uniform [0, 1) variates from one PCG64 generator.

    ``next()`` and ``take(n)`` draw from the same underlying sequence, so
    mixing them never reorders variates.
    """

    def __init__(self, seed_seq: np.random.SeedSequence, block: int = 4096):
        self._gen = np.random.Generator(np.random.PCG64(seed_seq))
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0
        self.consumed = 0

    def _refill(self, need: int) -> None:
        rest = self._buf[self._pos:]
        fresh = self._gen.random(max(self._block, need - rest.shape[0]))
        self._buf = np.concatenate([rest, fresh]) if rest.shape[0] else fresh
        self._pos = 0

    def next(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._refill(1)
        v = float(self._buf[self._pos])
        self._pos += 1
        self.consumed += 1
        return v

    def take(self, n: int) -> np.ndarray:
        if self._buf.shape[0] - self._pos < n:
            self._refill(n)
        out = self._buf[self._pos:self._pos + n]
        self._pos += n
        self.consumed += n
        return out


class RngStreams:
    """The four per-run streams: pair choice, B variate, p variate, coin.

    Each stream is seeded from ``(master_seed, run_index, tag)`` through a
    numpy ``SeedSequence`` spawn key, so streams never share state.
    """

    def __init__(self, master_seed: int, run_index: int = 0, block: int = 4096):
        if master_seed < 0 or run_index < 0:
            raise ValueError("seed and run index must be nonnegative")
        self.master_seed = int(master_seed)
        self.run_index = int(run_index)
        streams = {
            name: UniformStream(
                np.random.SeedSequence(self.master_seed, spawn_key=(self.run_index, tag)), block
            )
            for name, tag in STREAM_TAGS.items()
        }
        self.pair_stream = streams["pair"]
        self.u_stream = streams["u"]
        self.v_stream = streams["v"]
        self.w_stream = streams["w"]


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class Policy(Protocol):
    """Callable ``(step, x, mu, nu, u, state) -> value``.

    ``state`` is the run's mutable policy-state dict.  A policy may also
    define ``observe(event, x_after, state)``, called after every trade.
    """

    def __call__(self, step: int, x: np.ndarray, mu: int, nu: int, u: float,
                 state: dict) -> float: ...


@dataclass(frozen=True)
class ConstantB:
    value: float
    kind = "constant"

    def __call__(self, step, x, mu, nu, u, state):
        return self.value

    def check(self, delta: float) -> None:
        if not (delta <= self.value < 1.0):
            raise ValueError(f"constant B = {self.value} outside [delta={delta}, 1)")


@dataclass(frozen=True)
class PerAgentB:
    """Risk tolerance looked up on the poorer agent of the trade."""

    coefficients: tuple[float, ...]
    kind = "per_agent"

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    def __call__(self, step, x, mu, nu, u, state):
        return self.coefficients[mu]

    def check(self, delta: float, n_agents: int | None = None) -> None:
        if n_agents is not None and len(self.coefficients) != n_agents:
            raise ValueError(f"per_agent B needs {n_agents} coefficients")
        for c in self.coefficients:
            if not (delta <= c < 1.0):
                raise ValueError(f"per_agent B coefficient {c} outside [delta={delta}, 1)")


@dataclass(frozen=True)
class UniformB:
    """B drawn uniformly from [low, high) using the U variate."""

    low: float
    high: float
    kind = "uniform"

    def __call__(self, step, x, mu, nu, u, state):
        return self.low + u * (self.high - self.low)

    def check(self, delta: float) -> None:
        if not (delta <= self.low < self.high < 1.0):
            raise ValueError(f"uniform B needs delta={delta} <= low < high < 1")


@dataclass(frozen=True)
class ConstantP:
    value: float
    kind = "constant"

    def __call__(self, step, x, mu, nu, u, state):
        return self.value

    def check(self, delta: float) -> None:
        if not (0.0 < self.value < 1.0):
            raise ValueError(f"constant p = {self.value} outside (0, 1)")


def fair_coin() -> ConstantP:
    return ConstantP(0.5)


@dataclass(frozen=True)
class SaturatingPovertyP:
    """Poverty-advantage bias pushed toward the admissibility boundary.

    p = max(floor, m + (1 - kappa) * (1/2 - m)) where m is the smallest p
    keeping the trade admissible.  kappa = 1 sits exactly on the boundary,
    kappa in [0, 1] stays admissible, kappa > 1 deliberately violates it.
    ``delta`` is filled in from the policy set when left as None.
    """

    kappa: float = 1.0
    floor: float = 0.25
    delta: float | None = None
    kind = "saturating_poverty"

    def __call__(self, step, x, mu, nu, u, state):
        m = min_admissible_p_scalar(x[mu], x[nu], self.delta)
        p = m + (1.0 - self.kappa) * (0.5 - m)
        return p if p > self.floor else self.floor

    def check(self, delta: float) -> None:
        if not (0.0 < self.floor <= 0.5):
            raise ValueError("saturating_poverty floor must lie in (0, 1/2]")
        if not (self.kappa >= 0.0 and math.isfinite(self.kappa)):
            raise ValueError("saturating_poverty kappa must be >= 0")


BUILTIN_B = (ConstantB, PerAgentB, UniformB)
BUILTIN_P = (ConstantP, SaturatingPovertyP)


@dataclass
class PolicySet:
    delta: float
    b_policy: Any
    p_policy: Any
    policy_state: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta = {self.delta} outside (0, 1)")
        if isinstance(self.p_policy, SaturatingPovertyP) and self.p_policy.delta is None:
            self.p_policy = SaturatingPovertyP(self.p_policy.kappa, self.p_policy.floor, self.delta)
        for pol in (self.b_policy, self.p_policy):
            check = getattr(pol, "check", None)
            if check is not None:
                check(self.delta)

    def observe(self, event: TradeEvent, x_after: np.ndarray) -> None:
        for pol in (self.b_policy, self.p_policy):
            hook = getattr(pol, "observe", None)
            if hook is not None:
                hook(event, x_after, self.policy_state)


# ---------------------------------------------------------------------------
# The trade
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TradeEvent:
    step: int
    drawn_pair: tuple[int, int]
    ordered_pair: tuple[int, int]
    b: float
    p: float
    s: int
    transfer: float
    x_mu: float
    x_nu: float

    @property
    def stake(self) -> float:
        """Wealth at stake, B times the poorer agent's pre-trade wealth."""
        return self.b * self.x_mu


@dataclass
class MarketState:
    wealth: np.ndarray
    step: int = 0


def _check_index(x, i) -> None:
    if not (isinstance(i, (int, np.integer)) and 0 <= i < len(x)):
        raise ValueError(f"agent index {i!r} out of range")


def order_pair(x, i: int, j: int) -> tuple[int, int]:
    """Relabel a drawn pair so the first agent is no richer; ties keep drawn order."""
    _check_index(x, i)
    _check_index(x, j)
    if i == j:
        raise ValueError("a trade needs two distinct agents")
    return (i, j) if x[i] <= x[j] else (j, i)


def sample_pair(graph: TradeGraph, rng: RngStreams) -> tuple[int, int]:
    return graph.edge_at(rng.pair_stream.next())


def evaluate_policies(ps: PolicySet, step: int, x, mu: int, nu: int,
                      rng: RngStreams) -> tuple[float, float]:
    if x[mu] > x[nu]:
        raise ValueError("evaluate_policies expects x[mu] <= x[nu]")
    u = rng.u_stream.next()
    v = rng.v_stream.next()
    b = ps.b_policy(step, x, mu, nu, u, ps.policy_state)
    if not (ps.delta <= b < 1.0):
        raise PolicyContractError(f"B = {b!r} outside [{ps.delta}, 1)", step)
    p = ps.p_policy(step, x, mu, nu, v, ps.policy_state)
    if not (0.0 < p < 1.0):
        raise PolicyContractError(f"p = {p!r} outside (0, 1)", step)
    return float(b), float(p)


def flip_coin(p: float, rng: RngStreams) -> int:
    if not (0.0 < p < 1.0):
        raise ValueError(f"p = {p!r} outside (0, 1)")
    return 1 if rng.w_stream.next() <= p else -1


def apply_trade(x, mu: int, nu: int, b: float, s: int) -> np.ndarray:
    """Move ``s*b*x[mu]`` from agent mu to agent nu; returns a new vector."""
    if x[mu] > x[nu]:
        raise ValueError("apply_trade expects x[mu] <= x[nu]")
    if not (0.0 < b < 1.0):
        raise ValueError(f"B = {b!r} outside (0, 1)")
    if s not in (1, -1):
        raise ValueError("s must be +1 or -1")
    out = np.array(x, dtype=np.float64)
    transfer = s * b * out[mu]
    out[mu] = out[mu] - transfer
    out[nu] = out[nu] + transfer
    return out


def step(state: MarketState, graph: TradeGraph, policies: PolicySet,
         rng: RngStreams) -> tuple[MarketState, TradeEvent]:
    """One trade. Consumes exactly one variate from each of the four streams."""
    x = state.wealth
    ell = state.step + 1
    i, j = sample_pair(graph, rng)
    mu, nu = order_pair(x, i, j)
    b, p = evaluate_policies(policies, ell, x, mu, nu, rng)
    s = flip_coin(p, rng)
    x_new = apply_trade(x, mu, nu, b, s)
    event = TradeEvent(ell, (i, j), (mu, nu), b, p, s, s * b * float(x[mu]),
                       float(x[mu]), float(x[nu]))
    policies.observe(event, x_new)
    return MarketState(x_new, ell), event
