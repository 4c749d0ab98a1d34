"""Sequential execution of primitive rotation policies along a Davenport plan.

A 3D goal is decomposed into a chain of single-axis rotations
(:func:`rotchain.rotations.plan`); the primitive policy for each step's axis
is then run toward that step's precomputed subgoal. Subgoals are fixed at
planning time, so an imperfect step is never corrected by later ones unless
the diagnostic ``replan`` option is switched on.

Two entry points share the same semantics: :func:`execute` drives a single
:class:`~rotchain.env.CubeRotationEnv`, while :func:`execute_batch` runs many
cases in lockstep for evaluation.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .env import CubeRotationEnv, EnvBatch, EnvConfig, GoalSpec, step as env_step
from .errors import ConfigurationError, InvalidInputError
from .rotations import (
    ZXZ,
    ZYZ,
    Axis,
    Chain,
    DavenportPlan,
    PlanStep,
    UnitQuaternion,
    plan,
    qcanonical,
    qconj,
    qdecompose,
    qdistance,
    qfrom_axis_angle,
    qmul,
    quat_distance,
    wrap_angle,
)

MAX_PLAN_STEPS = 3


class Policy(Protocol):
    def act(self, obs: np.ndarray, goal: np.ndarray) -> np.ndarray: ...


class ChainChoice(enum.Enum):
    ZXZ = "z-x-z"
    ZYZ = "z-y-z"
    BEST_OF_BOTH = "best"

    @property
    def chain(self) -> Chain:
        if self is ChainChoice.BEST_OF_BOTH:
            raise InvalidInputError("best-of selection has no single chain")
        return Chain.parse(self.value)


@dataclass(frozen=True)
class ExecConfig:
    """Executor settings.

    ``carry_over`` hands steps left unused by the first half of a split
    rotation to its second half; ``replan`` recomputes the remaining
    subgoals from the achieved pose after every chain position.
    """

    chain: ChainChoice = ChainChoice.BEST_OF_BOTH
    split_large: bool = True
    per_step_budget: int = 100
    tolerance: float = 0.1
    carry_over: bool = False
    replan: bool = False

    def __post_init__(self):
        if self.per_step_budget < 1:
            raise InvalidInputError("per_step_budget must be at least 1")
        if not self.tolerance > 0:
            raise InvalidInputError("tolerance must be positive")
        if isinstance(self.chain, str):
            object.__setattr__(self, "chain", ChainChoice(self.chain))

    @property
    def horizon(self) -> int:
        return MAX_PLAN_STEPS * self.per_step_budget


class PolicySet:
    """Primitive policies keyed by the world axis they rotate about."""

    def __init__(self, policies: Mapping[Axis | str, Policy]):
        self.policies = {Axis.parse(k): v for k, v in policies.items()}
        if Axis.Z not in self.policies:
            raise ConfigurationError("a policy set needs a z-axis policy")
        if Axis.X not in self.policies and Axis.Y not in self.policies:
            raise ConfigurationError("a policy set needs an x- or y-axis policy")

    def __getitem__(self, axis: Axis) -> Policy:
        try:
            return self.policies[Axis.parse(axis)]
        except KeyError:
            raise ConfigurationError(f"no policy for the {Axis.parse(axis).label} axis") from None

    def covers(self, chain: Chain) -> bool:
        return all(a in self.policies for a in chain.axes)

    def require(self, chain: Chain) -> None:
        missing = [a.label for a in chain.axes if a not in self.policies]
        if missing:
            raise ConfigurationError(f"chain {chain} needs policies for axes {sorted(set(missing))}")


@dataclass(frozen=True)
class StepRecord:
    axis: Axis
    angle: float
    subgoal: UnitQuaternion
    steps_used: int
    achieved: UnitQuaternion
    step_success: bool


@dataclass(frozen=True)
class ExecTrace:
    plan: DavenportPlan
    records: tuple[StepRecord, ...]
    final: UnitQuaternion
    final_distance: float
    success: bool
    chain_used: Chain

    @property
    def total_steps(self) -> int:
        return sum(r.steps_used for r in self.records)

    def to_record(self) -> dict:
        return {
            "chain": self.chain_used.label,
            "success": bool(self.success),
            "final_distance": float(self.final_distance),
            "total_steps": int(self.total_steps),
            "final": list(self.final),
            "steps": [
                {
                    "axis": r.axis.label,
                    "angle": float(r.angle),
                    "subgoal": list(r.subgoal),
                    "steps_used": int(r.steps_used),
                    "achieved": list(r.achieved),
                    "step_success": bool(r.step_success),
                }
                for r in self.records
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def piece_budgets(steps: Sequence[PlanStep], per_step_budget: int) -> list[int]:
    """Split each chain position's budget evenly across its pieces."""
    budgets = []
    seen: dict[int, int] = {}
    for s in steps:
        k = seen.get(s.source, 0)
        share = per_step_budget // s.parts
        if k == s.parts - 1:
            share = per_step_budget - share * (s.parts - 1)
        budgets.append(share)
        seen[s.source] = k + 1
    return budgets


def execute(env: CubeRotationEnv, policies: PolicySet, initial: UnitQuaternion,
            goal: UnitQuaternion, config: ExecConfig, seed: int = 0) -> ExecTrace:
    """Run the hierarchical controller for one (initial, goal) pair.

    The environment is reset to ``initial`` with noise drawn from ``seed``
    and a horizon of three step budgets, so runs with different chains or
    split settings see the same noise sequence.
    """
    if config.chain is ChainChoice.BEST_OF_BOTH:
        return execute_best_of(env, policies, initial, goal, config, seed)
    chain = config.chain.chain
    policies.require(chain)
    env.config = env.config.replace(episode_length=config.horizon, tolerance=config.tolerance)
    env.reset_to(initial, goal, seed)
    current_plan = plan(initial, goal, chain, config.split_large)
    pending = list(current_plan.steps)
    budgets = piece_budgets(pending, config.per_step_budget)
    records = []
    carry = 0
    while pending:
        piece = pending.pop(0)
        budget = budgets.pop(0) + carry
        carry = 0
        policy = policies[piece.axis]
        target = piece.subgoal.array
        used = 0
        while used < budget:
            if qdistance(env.state.orientation, target) < config.tolerance:
                break
            obs = env.state.observation_array()[None]
            action = policy.act(obs, target[None])[0]
            env.state, _, _, _ = env_step(env.state, action, GoalSpec(goal), env.config)
            used += 1
        achieved = UnitQuaternion.from_array(env.state.orientation)
        ok = quat_distance(achieved, piece.subgoal) < config.tolerance
        records.append(StepRecord(piece.axis, piece.angle, piece.subgoal, used, achieved, ok))
        splits_continue = bool(pending) and pending[0].source == piece.source
        if config.carry_over and splits_continue:
            carry = budget - used
        if config.replan and pending and not splits_continue:
            fresh = plan(achieved, goal, chain, config.split_large)
            pending = [s for s in fresh.steps if s.source > piece.source]
            budgets = piece_budgets(pending, config.per_step_budget)
    final = UnitQuaternion.from_array(env.state.orientation)
    distance = quat_distance(final, goal)
    return ExecTrace(current_plan, tuple(records), final, distance,
                     distance < config.tolerance, chain)


def pick_best(zxz: ExecTrace, zyz: ExecTrace) -> ExecTrace:
    """Successful trace first, then smaller final distance; ties go to z-x-z."""
    if zxz.success:
        return zxz
    if zyz.success:
        return zyz
    return zyz if zyz.final_distance < zxz.final_distance else zxz


def execute_best_of(env: CubeRotationEnv, policies: PolicySet, initial: UnitQuaternion,
                    goal: UnitQuaternion, config: ExecConfig, seed: int = 0) -> ExecTrace:
    """Try both evaluated chains from identical resets and keep the better trace."""
    from dataclasses import replace

    zxz = execute(env, policies, initial, goal, replace(config, chain=ChainChoice.ZXZ), seed)
    zyz = execute(env, policies, initial, goal, replace(config, chain=ChainChoice.ZYZ), seed)
    return pick_best(zxz, zyz)


# ---------------------------------------------------------------------------
# Batched execution
# ---------------------------------------------------------------------------

@dataclass
class BatchResult:
    """Per-case outcome arrays of :func:`execute_batch`.

    ``piece_*`` arrays have one column per plan piece (at most six);
    ``piece_valid`` marks the columns a case actually uses.
    """

    chain: Chain
    final: np.ndarray
    final_distance: np.ndarray
    success: np.ndarray
    total_steps: np.ndarray
    piece_axis: np.ndarray
    piece_angle: np.ndarray
    piece_subgoal: np.ndarray
    piece_steps: np.ndarray
    piece_achieved: np.ndarray
    piece_success: np.ndarray
    piece_valid: np.ndarray
    piece_source: np.ndarray = field(repr=False, default=None)
    piece_parts: np.ndarray = field(repr=False, default=None)
    initial: np.ndarray = field(repr=False, default=None)
    goal: np.ndarray = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.success)

    def trace(self, i: int) -> ExecTrace:
        initial = UnitQuaternion.from_array(self.initial[i])
        goal = UnitQuaternion.from_array(self.goal[i])
        cols = np.flatnonzero(self.piece_valid[i])
        records = tuple(
            StepRecord(Axis(int(self.piece_axis[i, j])), float(self.piece_angle[i, j]),
                       UnitQuaternion.from_array(self.piece_subgoal[i, j]),
                       int(self.piece_steps[i, j]),
                       UnitQuaternion.from_array(self.piece_achieved[i, j]),
                       bool(self.piece_success[i, j]))
            for j in cols
        )
        steps = tuple(PlanStep(r.axis, r.angle, r.subgoal, int(self.piece_source[i, j]),
                               int(self.piece_parts[i, j]))
                      for r, j in zip(records, cols))
        return ExecTrace(DavenportPlan(initial, goal, self.chain, steps), records,
                         UnitQuaternion.from_array(self.final[i]), float(self.final_distance[i]),
                         bool(self.success[i]), self.chain)


def batch_plans(initial: np.ndarray, goal: np.ndarray, chain: Chain, split: bool):
    """Vectorised :func:`plan`: piece axes, angles, subgoals, sources, parts."""
    n = len(initial)
    relative = qmul(goal, qconj(initial))
    angles = wrap_angle(qdecompose(relative, chain.indices))
    width = 2 * MAX_PLAN_STEPS if split else MAX_PLAN_STEPS
    axis = np.zeros((n, width), dtype=int)
    piece_angle = np.zeros((n, width))
    source = np.zeros((n, width), dtype=int)
    parts = np.ones((n, width), dtype=int)
    valid = np.zeros((n, width), dtype=bool)
    col = np.zeros(n, dtype=int)
    rows = np.arange(n)
    for k, ax in enumerate(chain.indices):
        a = angles[:, k]
        large = split & (np.abs(a) > np.pi / 2)
        first = np.where(large, np.copysign(np.pi / 2, a), a)
        for piece, value, present in ((0, first, np.ones(n, bool)), (1, a - first, large)):
            idx = col[present]
            r = rows[present]
            axis[r, idx] = ax
            piece_angle[r, idx] = value[present]
            source[r, idx] = k
            parts[r, idx] = np.where(large[present], 2, 1)
            valid[r, idx] = True
            col[present] += 1
    subgoal = np.zeros((n, width, 4))
    current = np.asarray(initial, dtype=float)
    for j in range(width):
        rot = qfrom_axis_angle(axis[:, j], piece_angle[:, j])
        nxt = qcanonical(qmul(rot, current))
        current = np.where(valid[:, j, None], nxt, current)
        subgoal[:, j] = current
    return axis, piece_angle, subgoal, source, parts, valid


def execute_batch(policies: PolicySet, initial: np.ndarray, goal: np.ndarray,
                  seeds: Sequence[int], env_config: EnvConfig, config: ExecConfig,
                  chain: Chain) -> BatchResult:
    """Run :func:`execute` semantics for many cases side by side.

    Cases that finish a piece early simply wait (without stepping) until
    every case is done with that piece, which leaves each case's trajectory
    identical to a sequential run. ``replan`` is not supported here.
    """
    if config.replan:
        raise ConfigurationError("replanning is only available in execute()")
    policies.require(chain)
    initial = np.asarray(initial, dtype=float)
    goal = np.asarray(goal, dtype=float)
    n = len(initial)
    env_config = env_config.replace(episode_length=config.horizon, tolerance=config.tolerance)
    envs = EnvBatch.start_at(initial, goal, env_config, seeds)
    axis, angle, subgoal, source, parts, valid = batch_plans(initial, goal, chain, config.split_large)
    width = axis.shape[1]
    B = config.per_step_budget
    budget = np.where(parts == 2, B // 2, B)
    second = np.zeros_like(valid)
    second[:, 1:] = valid[:, 1:] & (source[:, 1:] == source[:, :-1])
    budget = np.where(second, B - B // 2, budget)
    steps = np.zeros((n, width), dtype=int)
    achieved = np.zeros((n, width, 4))
    piece_ok = np.zeros((n, width), dtype=bool)
    carry = np.zeros(n, dtype=int)
    for j in range(width):
        limit = np.where(valid[:, j], budget[:, j] + carry, 0)
        target = subgoal[:, j]
        used = np.zeros(n, dtype=int)
        while True:
            running = (used < limit) & (qdistance(envs.orientation, target) >= config.tolerance)
            if not running.any():
                break
            actions = np.zeros((n, 3))
            obs = envs.observations()
            for ax in np.unique(axis[running, j]):
                rows = running & (axis[:, j] == ax)
                actions[rows] = policies[Axis(int(ax))].act(obs[rows], target[rows])
            envs.step(actions, mask=running)
            used += running
        steps[:, j] = used
        achieved[:, j] = envs.orientation
        piece_ok[:, j] = qdistance(envs.orientation, target) < config.tolerance
        if config.carry_over and j + 1 < width:
            carry = np.where(second[:, j + 1], limit - used, 0)
    distance = qdistance(envs.orientation, goal)
    return BatchResult(
        chain=chain,
        final=envs.orientation.copy(),
        final_distance=distance,
        success=distance < config.tolerance,
        total_steps=steps.sum(axis=1),
        piece_axis=axis,
        piece_angle=angle,
        piece_subgoal=subgoal,
        piece_steps=steps,
        piece_achieved=achieved,
        piece_success=piece_ok & valid,
        piece_valid=valid,
        piece_source=source,
        piece_parts=parts,
        initial=initial,
        goal=goal,
    )


def best_of_mask(zxz: BatchResult, zyz: BatchResult) -> np.ndarray:
    """True where the z-y-z result is the one :func:`pick_best` would keep."""
    return ~zxz.success & (zyz.success | (zyz.final_distance < zxz.final_distance))


def run_direct(policy: Policy, initial: np.ndarray, goal: np.ndarray, seeds: Sequence[int],
               env_config: EnvConfig, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Run one goal-conditioned policy for exactly ``horizon`` steps per case.

    Returns final orientations and final distances.
    """
    env_config = env_config.replace(episode_length=horizon)
    envs = EnvBatch.start_at(initial, goal, env_config, seeds)
    obs = envs.observations()
    for _ in range(horizon):
        obs, _, _, _ = envs.step(policy.act(obs, envs.goal))
    return envs.orientation.copy(), qdistance(envs.orientation, envs.goal)
