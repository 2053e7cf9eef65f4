"""Closed-form single-trade algebra and its brute-force cross-checks.

Every function here accepts scalars or equal-shape numpy arrays in the
fields of :class:`TradeAlgebraInput`, so the same code serves unit tests
and vectorized randomized sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TradeAlgebraInput:
    """One trade's operands: poorer wealth, richer wealth, B, p, delta."""

    x_mu: float | np.ndarray
    x_nu: float | np.ndarray
    b: float | np.ndarray
    p: float | np.ndarray
    delta: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.x_mu) < 0):
            raise ValueError("x_mu must be nonnegative")
        if np.any(np.asarray(self.x_mu) > np.asarray(self.x_nu)):
            raise ValueError("x_mu must not exceed x_nu")
        if np.any(np.asarray(self.b) < np.asarray(self.delta)) or np.any(np.asarray(self.b) >= 1):
            raise ValueError("b must lie in [delta, 1)")
        # p = 0 and p = 1 are allowed as algebraic limits
        if np.any(np.asarray(self.p) < 0) or np.any(np.asarray(self.p) > 1):
            raise ValueError("p must lie in [0, 1]")
        d = np.asarray(self.delta)
        if np.any(d <= 0) or np.any(d >= 1):
            raise ValueError("delta must lie in (0, 1)")


def expected_norm_change(t: TradeAlgebraInput):
    """Conditional expected change of the squared Euclidean norm in one trade."""
    stake = t.b * t.x_mu
    return (4.0 * t.p - 2.0) * stake * (t.x_nu - t.x_mu) + 2.0 * stake * stake


def brute_force_norm_change(t: TradeAlgebraInput):
    """Enumerate both coin outcomes on the two affected coordinates."""
    before = t.x_mu ** 2 + t.x_nu ** 2
    win = (t.x_mu - t.b * t.x_mu) ** 2 + (t.x_nu + t.b * t.x_mu) ** 2
    lose = (t.x_mu + t.b * t.x_mu) ** 2 + (t.x_nu - t.b * t.x_mu) ** 2
    return t.p * (win - before) + (1.0 - t.p) * (lose - before)


def check_admissibility(t: TradeAlgebraInput):
    """True where the bias keeps the expected norm growth at least stake squared."""
    return (4.0 * t.p - 2.0) * (t.x_nu - t.x_mu) >= -t.delta * t.x_mu


def admissible_scalar(x_mu: float, x_nu: float, p: float, delta: float) -> bool:
    return (4.0 * p - 2.0) * (x_nu - x_mu) >= -delta * x_mu


def min_admissible_p_scalar(x_mu: float, x_nu: float, delta: float) -> float:
    # closed form, then walked up by ulps until the inequality holds in binary64
    gap = x_nu - x_mu
    if gap <= 0.0:
        return 0.0
    p = 0.5 - delta * x_mu / (4.0 * gap)
    if p <= 0.0:
        return 0.0
    while not ((4.0 * p - 2.0) * gap >= -delta * x_mu):
        p = math.nextafter(p, 1.0)
    return p


def min_admissible_p(x_mu, x_nu, delta):
    """Smallest p for which the trade is admissible (0 when any p is).

    The returned value is itself admissible under binary64 evaluation of
    :func:`check_admissibility`.
    """
    if np.ndim(x_mu) == 0 and np.ndim(x_nu) == 0 and np.ndim(delta) == 0:
        if x_mu < 0 or x_mu > x_nu:
            raise ValueError("need 0 <= x_mu <= x_nu")
        if not (0.0 < delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        return min_admissible_p_scalar(float(x_mu), float(x_nu), float(delta))
    x_mu, x_nu, delta = np.broadcast_arrays(
        np.asarray(x_mu, float), np.asarray(x_nu, float), np.asarray(delta, float))
    if np.any(x_mu < 0) or np.any(x_mu > x_nu):
        raise ValueError("need 0 <= x_mu <= x_nu")
    gap = x_nu - x_mu
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(gap > 0, 0.5 - delta * x_mu / (4.0 * gap), 0.0)
    p = np.maximum(p, 0.0)
    bad = (p > 0) & ~((4.0 * p - 2.0) * gap >= -delta * x_mu)
    while np.any(bad):
        p[bad] = np.nextafter(p[bad], 1.0)
        bad = (p > 0) & ~((4.0 * p - 2.0) * gap >= -delta * x_mu)
    return p


def lemma1_lower_bound(t: TradeAlgebraInput):
    """Guaranteed floor (b * x_mu)**2 on the expected norm growth.

    Only valid for admissible trades; raises ``ValueError`` otherwise.
    """
    if not np.all(check_admissibility(t)):
        raise ValueError("lower bound requires an admissible trade")
    return (t.b * t.x_mu) ** 2


def two_outcome_expectation(x, mu: int, nu: int, b: float, p: float) -> np.ndarray:
    """Exact per-agent expected post-trade wealth, enumerating s = +1 and s = -1."""
    from .model import apply_trade

    return p * apply_trade(x, mu, nu, b, 1) + (1.0 - p) * apply_trade(x, mu, nu, b, -1)
