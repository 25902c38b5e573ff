"""Aggressive Q-learning with ensembles (AQE) in numpy."""

from .agent import Agent, evaluate
from .config import AgentConfig, RunConfig, parse_config
from .critic import Aggregator, CriticEnsemble, aggregate, compute_targets, keep_k

__all__ = [
    "Agent",
    "AgentConfig",
    "Aggregator",
    "CriticEnsemble",
    "RunConfig",
    "aggregate",
    "compute_targets",
    "evaluate",
    "keep_k",
    "parse_config",
]

__version__ = "0.1.0"
