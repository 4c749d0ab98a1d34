"""Episode replay buffer with "future"-strategy hindsight relabeling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import ACTION_DIM, GOAL_DIM, OBS_DIM, compute_reward
from ..errors import EmptyBufferError, InvalidInputError
from ..rotations import UnitQuaternion


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    achieved_goal: UnitQuaternion
    next_achieved_goal: UnitQuaternion
    desired_goal: UnitQuaternion
    episode_id: int
    step_index: int


@dataclass
class Episode:
    """One rollout stored as arrays.

    ``observations`` and ``achieved_goals`` carry ``T + 1`` rows (the final
    row is the state after the last action); ``actions``, ``desired_goals``
    and ``rewards`` carry ``T`` rows.
    """

    observations: np.ndarray
    achieved_goals: np.ndarray
    actions: np.ndarray
    desired_goals: np.ndarray
    rewards: np.ndarray
    episode_id: int = 0

    def __len__(self) -> int:
        return len(self.actions)

    def transition(self, k: int) -> Transition:
        return Transition(
            observation=self.observations[k],
            action=self.actions[k],
            reward=float(self.rewards[k]),
            next_observation=self.observations[k + 1],
            achieved_goal=UnitQuaternion.from_array(self.achieved_goals[k]),
            next_achieved_goal=UnitQuaternion.from_array(self.achieved_goals[k + 1]),
            desired_goal=UnitQuaternion.from_array(self.desired_goals[k]),
            episode_id=self.episode_id,
            step_index=k,
        )

    def transitions(self) -> list[Transition]:
        return [self.transition(k) for k in range(len(self))]


@dataclass
class TransitionBatch:
    observation: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_observation: np.ndarray
    achieved_goal: np.ndarray
    next_achieved_goal: np.ndarray
    desired_goal: np.ndarray
    episode_id: np.ndarray
    step_index: np.ndarray
    relabeled: np.ndarray
    goal_index: np.ndarray
    """Row of ``achieved_goals`` used as the new goal (-1 when not relabeled)."""

    def __len__(self) -> int:
        return len(self.reward)


class ReplayBuffer:
    """Fixed-capacity store of whole episodes; the oldest episode is evicted first."""

    def __init__(self, capacity: int = 1_000_000, episode_length: int = 100):
        if episode_length < 1 or capacity < episode_length:
            raise InvalidInputError("capacity must hold at least one episode")
        self.capacity = capacity
        self.episode_length = episode_length
        self.max_episodes = capacity // episode_length
        T = episode_length
        # grown lazily up to max_episodes rows
        self._obs = np.empty((0, T + 1, OBS_DIM))
        self._ag = np.empty((0, T + 1, GOAL_DIM))
        self._actions = np.empty((0, T, ACTION_DIM))
        self._goals = np.empty((0, T, GOAL_DIM))
        self._rewards = np.empty((0, T))
        self._ids = np.empty(0, dtype=np.int64)
        self._next = 0
        self.n_episodes = 0

    @property
    def size(self) -> int:
        return self.n_episodes * self.episode_length

    def episode_ids(self) -> list[int]:
        """Stored episode ids, oldest first."""
        if self.n_episodes < self.max_episodes:
            order = range(self.n_episodes)
        else:
            order = [(self._next + i) % self.max_episodes for i in range(self.max_episodes)]
        return [int(self._ids[i]) for i in order]

    def _grow(self, rows: int) -> None:
        def pad(a):
            extra = np.zeros((rows,) + a.shape[1:], dtype=a.dtype)
            return np.concatenate([a, extra])

        self._obs, self._ag = pad(self._obs), pad(self._ag)
        self._actions, self._goals = pad(self._actions), pad(self._goals)
        self._rewards, self._ids = pad(self._rewards), pad(self._ids)

    def store_episode(self, episode: Episode) -> None:
        T = self.episode_length
        shapes = {
            "observations": (episode.observations, (T + 1, OBS_DIM)),
            "achieved_goals": (episode.achieved_goals, (T + 1, GOAL_DIM)),
            "actions": (episode.actions, (T, ACTION_DIM)),
            "desired_goals": (episode.desired_goals, (T, GOAL_DIM)),
            "rewards": (episode.rewards, (T,)),
        }
        for name, (value, shape) in shapes.items():
            if np.shape(value) != shape:
                raise InvalidInputError(
                    f"incomplete episode: {name} has shape {np.shape(value)}, expected {shape}")
        slot = self._next
        if slot >= len(self._ids):
            self._grow(min(max(16, len(self._ids)), self.max_episodes - len(self._ids)))
        self._obs[slot] = episode.observations
        self._ag[slot] = episode.achieved_goals
        self._actions[slot] = episode.actions
        self._goals[slot] = episode.desired_goals
        self._rewards[slot] = episode.rewards
        self._ids[slot] = episode.episode_id
        self._next = (slot + 1) % self.max_episodes
        self.n_episodes = min(self.n_episodes + 1, self.max_episodes)

    def episode(self, episode_id: int) -> Episode:
        for slot in range(self.n_episodes):
            if self._ids[slot] == episode_id:
                return Episode(self._obs[slot].copy(), self._ag[slot].copy(),
                               self._actions[slot].copy(), self._goals[slot].copy(),
                               self._rewards[slot].copy(), int(episode_id))
        raise KeyError(episode_id)

    def sample_relabeled_batch(self, batch_size: int, her_k: float, tolerance: float,
                               rng: np.random.Generator) -> TransitionBatch:
        """Uniform transitions; each relabeled with probability ``k / (k + 1)``.

        A relabeled transition takes as its goal the achieved goal of a
        uniformly chosen strictly-later state of the same episode, and its
        reward is recomputed. Stored data is never modified.
        """
        if self.n_episodes == 0:
            raise EmptyBufferError("cannot sample from an empty replay buffer")
        if her_k < 0:
            raise InvalidInputError("her_k must be non-negative")
        T = self.episode_length
        ep = rng.integers(0, self.n_episodes, size=batch_size)
        t = rng.integers(0, T, size=batch_size)
        p_relabel = her_k / (her_k + 1.0)
        relabel = rng.uniform(size=batch_size) < p_relabel
        # future state index in t+1 .. T (inclusive)
        future = t + 1 + np.floor(rng.uniform(size=batch_size) * (T - t)).astype(int)
        future = np.minimum(future, T)

        desired = self._goals[ep, t].copy()
        desired[relabel] = self._ag[ep[relabel], future[relabel]]
        next_ag = self._ag[ep, t + 1]
        reward = compute_reward(next_ag, desired, tolerance)
        return TransitionBatch(
            observation=self._obs[ep, t],
            action=self._actions[ep, t],
            reward=reward,
            next_observation=self._obs[ep, t + 1],
            achieved_goal=self._ag[ep, t],
            next_achieved_goal=next_ag,
            desired_goal=desired,
            episode_id=self._ids[ep],
            step_index=t,
            relabeled=relabel,
            goal_index=np.where(relabel, future, -1),
        )


def store_episode(buffer: ReplayBuffer, episode: Episode) -> None:
    buffer.store_episode(episode)


def sample_relabeled_batch(buffer: ReplayBuffer, batch_size: int, her_k: float,
                           tolerance: float, rng: np.random.Generator) -> TransitionBatch:
    return buffer.sample_relabeled_batch(batch_size, her_k, tolerance, rng)
