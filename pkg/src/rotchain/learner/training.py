"""Rollout collection, held-out evaluation and the full training loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..env import EnvBatch, EnvConfig, TaskKind
from ..errors import InvalidInputError
from .ddpg import PolicyParams, TrainConfig, act, train_cycle
from .replay import Episode, ReplayBuffer

log = logging.getLogger(__name__)

SEED_SPACE = 2**62


@dataclass(frozen=True)
class CurvePoint:
    cycle: int
    env_steps: int
    success_rate: float
    critic_loss: float = float("nan")
    mean_abs_q: float = float("nan")


def collect_episodes(params: PolicyParams, task: TaskKind, env_config: EnvConfig,
                     seeds: Sequence[int], rng: np.random.Generator,
                     first_id: int = 0, explore: bool = True) -> list[Episode]:
    """Roll out one full episode per seed with the current policy.

    Episodes run side by side, but the policy is fixed for the whole batch
    so the data equals that of running them one after another.
    """
    T = env_config.episode_length
    envs = EnvBatch.reset(task, env_config, seeds)
    n = len(envs)
    obs = np.empty((n, T + 1, envs.observations().shape[1]))
    actions = np.empty((n, T, 3))
    rewards = np.empty((n, T))
    obs[:, 0] = envs.observations()
    for t in range(T):
        actions[:, t] = act(params, obs[:, t], envs.goal, explore=explore, rng=rng)
        obs[:, t + 1], rewards[:, t], _, _ = envs.step(actions[:, t])
    achieved = obs[:, :, :4]
    goals = np.repeat(envs.goal[:, None], T, axis=1)
    return [Episode(obs[i], achieved[i].copy(), actions[i], goals[i], rewards[i], first_id + i)
            for i in range(n)]


def evaluate_policy(params, task: TaskKind, env_config: EnvConfig,
                    seeds: Sequence[int], horizon: int | None = None) -> np.ndarray:
    """Final-step success (bool array) of the greedy policy, one episode per seed."""
    config = env_config if horizon is None else env_config.replace(episode_length=horizon)
    envs = EnvBatch.reset(task, config, seeds)
    obs = envs.observations()
    success = np.zeros(len(envs), dtype=bool)
    for _ in range(config.episode_length):
        obs, _, success, _ = envs.step(params.act(obs, envs.goal))
    return success


def update_normalizers(params: PolicyParams, episodes: Sequence[Episode]) -> None:
    obs = np.concatenate([ep.observations for ep in episodes])
    goals = np.concatenate([np.concatenate([ep.desired_goals, ep.achieved_goals]) for ep in episodes])
    params.obs_norm.update(obs)
    params.goal_norm.update(goals)


def train(task: TaskKind | str, env_config: EnvConfig, train_config: TrainConfig,
          progress: bool = False) -> tuple[PolicyParams, list[CurvePoint]]:
    """Train a goal-conditioned policy on ``task``; deterministic given the seed.

    Each cycle collects ``cycle_episodes`` exploratory episodes, runs
    :func:`train_cycle` and then scores the greedy policy on a fixed set of
    held-out episodes drawn once at the start of the run.

    With ``keep_best`` the returned parameters are a snapshot of the cycle
    with the highest held-out success (latest wins ties) rather than the
    last cycle's; the curve always covers every cycle.
    """
    task = TaskKind.parse(task)
    cfg = train_config
    T = env_config.episode_length
    per_cycle = cfg.cycle_episodes * T
    n_cycles = cfg.total_timesteps // per_cycle
    if n_cycles < 1:
        raise InvalidInputError(
            f"total_timesteps {cfg.total_timesteps} is below one cycle ({per_cycle} steps)")
    rng = np.random.default_rng(cfg.seed)
    params = PolicyParams.create(cfg, rng, task=task.value)
    buffer = ReplayBuffer(max(cfg.buffer_size, T), T)
    eval_seeds = [int(s) for s in rng.integers(0, SEED_SPACE, size=cfg.eval_episodes)]
    curve: list[CurvePoint] = []
    best, best_rate = None, -1.0
    env_steps = 0
    start = time.perf_counter()
    for cycle in range(n_cycles):
        seeds = [int(s) for s in rng.integers(0, SEED_SPACE, size=cfg.cycle_episodes)]
        episodes = collect_episodes(params, task, env_config, seeds, rng,
                                    first_id=cycle * cfg.cycle_episodes)
        env_steps += per_cycle
        for ep in episodes:
            buffer.store_episode(ep)
        update_normalizers(params, episodes)
        diag = train_cycle(params, buffer, cfg, rng, tolerance=env_config.tolerance)
        rate = float(np.mean(evaluate_policy(params, task, env_config, eval_seeds)))
        curve.append(CurvePoint(cycle + 1, env_steps, rate, diag["critic_loss"], diag["mean_abs_q"]))
        if cfg.keep_best and rate >= best_rate:
            best, best_rate = params.snapshot(), rate
        if progress:
            log.info("%s cycle %d steps %d success %.2f loss %.4f |Q| %.2f (%.0fs)",
                     task.value, cycle + 1, env_steps, rate, diag["critic_loss"],
                     diag["mean_abs_q"], time.perf_counter() - start)
    if best is not None:
        params = best
    return params, curve


def write_curve(curve: Sequence[CurvePoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle", "env_steps", "success_rate"])
        for point in curve:
            writer.writerow([point.cycle, point.env_steps, repr(point.success_rate)])


def read_curve(path: str | Path) -> list[CurvePoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [CurvePoint(int(r["cycle"]), int(r["env_steps"]), float(r["success_rate"])) for r in rows]
