"""Generalized yard-sale wealth exchange on trading graphs."""
from .harness import RunConfig, RunResult, EnsembleSummary, StopReason, run_ensemble, run_single
from .model import (
    ConstantB,
    ConstantP,
    PerAgentB,
    PolicySet,
    RngStreams,
    SaturatingPovertyP,
    TradeEvent,
    TradeGraph,
    UniformB,
    fair_coin,
)

__all__ = [
    "ConstantB", "ConstantP", "EnsembleSummary", "PerAgentB", "PolicySet", "RngStreams",
    "RunConfig", "RunResult", "SaturatingPovertyP", "StopReason", "TradeEvent", "TradeGraph",
    "UniformB", "fair_coin", "run_ensemble", "run_single",
]
