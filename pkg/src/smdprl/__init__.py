"""Offline reinforcement learning on semi-Markov decision processes.

Duration-aware agents (SDQN, SDDQN, SBCQ), their fixed-step baselines
(DQN, DDQN, BCQ), a deterministic options grid world, an exact tabular
planning oracle, and an offline dataset pipeline.
"""

from .agents import Algorithm
from .core import (
    OptionDef,
    OptionTransition,
    PrimitiveAction,
    RunConfig,
    discounted_return,
    interpolated_option_return,
    mdp_baseline_target,
    smdp_target,
)
from .gridworld import OFFLINE, ONLINE, EnvVariant, GridEnv, GridState

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "EnvVariant",
    "GridEnv",
    "GridState",
    "OFFLINE",
    "ONLINE",
    "OptionDef",
    "OptionTransition",
    "PrimitiveAction",
    "RunConfig",
    "discounted_return",
    "interpolated_option_return",
    "mdp_baseline_target",
    "smdp_target",
]
