"""Hierarchical Thompson sampling for contextual bandits with several shared latent parameters."""

__version__ = "0.1.0"

from .agents import AGENTS, GHierTS, GHierTSFa, HierTS, IndTS, LinTS, LinUCB, OracleAgent, make_agent
from .errors import (
    ConfigError,
    DataError,
    GHierTSError,
    NotPositiveDefinite,
    NumericalError,
)
from .model import Constant, FixedPool, HierModelSpec, Matrices, UniformCube, Weights
from .posterior import (
    SufficientStats,
    conditional_posterior,
    decomposed_marginal_posterior,
    factored_hyper_posterior,
    hyper_posterior,
    joint_posterior_oracle,
)
from .presets import SyntheticProblem
from .sim import bayes_regret, run_episode, sweep
from .theory import BoundInputs, regret_bound

__all__ = [
    "AGENTS",
    "BoundInputs",
    "ConfigError",
    "Constant",
    "DataError",
    "FixedPool",
    "GHierTS",
    "GHierTSError",
    "GHierTSFa",
    "HierModelSpec",
    "HierTS",
    "IndTS",
    "LinTS",
    "LinUCB",
    "Matrices",
    "NotPositiveDefinite",
    "NumericalError",
    "OracleAgent",
    "SufficientStats",
    "SyntheticProblem",
    "UniformCube",
    "Weights",
    "bayes_regret",
    "conditional_posterior",
    "decomposed_marginal_posterior",
    "factored_hyper_posterior",
    "hyper_posterior",
    "joint_posterior_oracle",
    "make_agent",
    "regret_bound",
    "run_episode",
    "sweep",
]
