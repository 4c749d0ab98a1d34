"""Hand-written controllers used as harness references.

They speak the same ``act(obs, goal)`` interface as trained policies, so they
can stand in for a :class:`~rotchain.hierarchy.PolicySet` entry or a
baseline when checking the evaluation machinery itself.
"""

from __future__ import annotations

import numpy as np

from ..env import ACTION_DIM
from ..rotations import qconj, qmul


class ScriptedController:
    """Proportional-derivative controller on the rotation-vector error.

    With a noise-free environment and high gains it reaches any subgoal
    well within a step budget, which makes it an upper bound for the
    executor.
    """

    def __init__(self, kp: float = 4.0, kd: float = 3.0):
        self.kp = kp
        self.kd = kd

    def act(self, obs: np.ndarray, goal: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(obs)
        goal = np.atleast_2d(goal)
        q, omega = obs[:, :4], obs[:, 4:7]
        err = qmul(goal, qconj(q))
        err = err * np.where(err[:, :1] < 0, -1.0, 1.0)
        vec_norm = np.linalg.norm(err[:, 1:], axis=1)
        angle = 2.0 * np.arctan2(vec_norm, err[:, 0])
        axis = err[:, 1:] / np.maximum(vec_norm, 1e-12)[:, None]
        return np.clip(self.kp * axis * angle[:, None] - self.kd * omega, -1.0, 1.0)


class RandomController:
    """Uniform random actions from a private generator."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def act(self, obs: np.ndarray, goal: np.ndarray) -> np.ndarray:
        n = len(np.atleast_2d(obs))
        return self.rng.uniform(-1.0, 1.0, size=(n, ACTION_DIM))
