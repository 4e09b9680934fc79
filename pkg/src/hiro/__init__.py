"""Two-level goal-conditioned hierarchical RL with off-policy goal relabeling, in numpy."""

from .correction import CorrectionStrategy, relabel
from .envs import make_env, success_of_episode
from .goals import GoalSpace, cosine_reward, goal_transition, intrinsic_reward, project
from .hrl import HiroConfig, HiroTrainer
from .nn import AdamState, Mlp, adam_step, backward, forward, soft_update
from .replay import HighSegment, LowTransition, RingBuffer
from .td3 import Batch, Td3Agent

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Batch", "CorrectionStrategy", "GoalSpace", "HighSegment", "HiroConfig",
    "HiroTrainer", "LowTransition", "Mlp", "RingBuffer", "Td3Agent", "adam_step", "backward",
    "cosine_reward", "forward", "goal_transition", "intrinsic_reward", "make_env", "project",
    "relabel", "soft_update", "success_of_episode",
]
