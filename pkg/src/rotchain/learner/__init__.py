"""Off-policy goal-conditioned learning: HER replay and DDPG."""

from .ddpg import PolicyParams, TrainConfig, act, train_cycle
from .replay import Episode, ReplayBuffer, Transition, TransitionBatch, sample_relabeled_batch, store_episode
from .training import CurvePoint, evaluate_policy, train

__all__ = [
    "CurvePoint",
    "Episode",
    "PolicyParams",
    "ReplayBuffer",
    "TrainConfig",
    "Transition",
    "TransitionBatch",
    "act",
    "evaluate_policy",
    "sample_relabeled_batch",
    "store_episode",
    "train",
    "train_cycle",
]
