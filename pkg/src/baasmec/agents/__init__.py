from .dqn import DqnAgent, EpsilonSchedule, classic_dqn_target, double_dqn_target, masked_argmax_rows
from .ga import GaParams, ga_optimize
from .replay import Experience, ReplayBuffer
from .tabular import TabularQAgent, q_learning_update

__all__ = [
    "DqnAgent", "EpsilonSchedule", "classic_dqn_target", "double_dqn_target", "masked_argmax_rows",
    "GaParams", "ga_optimize", "Experience", "ReplayBuffer", "TabularQAgent", "q_learning_update",
]
