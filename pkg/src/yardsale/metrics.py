"""Concentration and condensation measures on wealth vectors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TradeGraph

DEFAULT_WEALTHY_THRESHOLD = 0.01


@dataclass(frozen=True)
class CondensationReport:
    gap: float
    wealthy_set: tuple[int, ...]
    is_independent: bool
    threshold: float


def norm2_squared(x) -> float:
    a = np.asarray(x, dtype=np.float64)
    return float(np.dot(a, a))


def concentration_ratio(x) -> float:
    """||x||_2 / ||x||_1; equals 1 exactly on multiples of a basis vector."""
    a = np.asarray(x, dtype=np.float64)
    l1 = float(np.abs(a).sum())
    if l1 == 0.0:
        raise ValueError("concentration ratio undefined for the zero vector")
    return math.sqrt(norm2_squared(a)) / l1


def gini(x) -> float:
    """Mean-absolute-difference Gini index via the sorted-rank identity.

    sum_i sum_j |x_i - x_j| = 2 * sum_k (2k - N - 1) x_(k) for ascending x_(k).
    """
    a = np.sort(np.asarray(x, dtype=np.float64))
    n = a.shape[0]
    total = a.sum()
    if total == 0.0:
        return 0.0
    ranks = np.arange(1, n + 1, dtype=np.float64)
    pair_sum = 2.0 * float(np.dot(2.0 * ranks - n - 1.0, a))
    return max(0.0, pair_sum / (2.0 * n * total))


def condensation_gap(x, g: TradeGraph) -> float:
    """Largest over edges of the poorer endpoint's wealth; zero exactly on the condensed set."""
    ei, ej = g.edge_arrays
    a = np.asarray(x, dtype=np.float64)
    return float(np.minimum(a[ei], a[ej]).max())


def wealthy_set(x, g: TradeGraph, threshold: float = DEFAULT_WEALTHY_THRESHOLD) -> CondensationReport:
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    a = np.asarray(x, dtype=np.float64)
    rich = tuple(int(i) for i in np.flatnonzero(a > threshold))
    members = set(rich)
    independent = not any(i in members and j in members for i, j in g.edges)
    return CondensationReport(condensation_gap(a, g), rich, independent, threshold)
