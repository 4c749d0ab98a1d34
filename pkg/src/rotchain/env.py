"""Goal-conditioned cube-rotation tasks on a damped rigid-body plant.

The plant stands in for a dexterous hand: the action is an angular
acceleration command about the three world axes, the cube spins with
per-axis gains and viscous damping, and poses with no face resting flat
pick up a random angular-velocity drift. Rewards are sparse (0 on success,
-1 otherwise) and success means the cube is within ``tolerance`` radians of
the goal orientation.

Every function here has a batched twin operating on stacked arrays so that
many episodes can advance in lockstep; the single-episode API calls the
batched code with a batch of one, which keeps both paths bit-identical.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EpisodeExhaustedError, InvalidInputError
from .rotations import (
    Axis,
    UnitQuaternion,
    face_alignment,
    qcanonical,
    qdistance,
    qfrom_axis_angle,
    qfrom_rotvec,
    qmul,
    random_flat_quaternions,
    random_quaternions,
)

OBS_DIM = 10
GOAL_DIM = 4
ACTION_DIM = 3
FLAT_TOLERANCE = 0.2
PARALLEL_ANGLES = (-math.pi, -math.pi / 2, 0.0, math.pi / 2, math.pi)


class TaskKind(enum.Enum):
    ROTATE_Z = "rotate-z"
    ROTATE_X = "rotate-x"
    ROTATE_Y = "rotate-y"
    ROTATE_PARALLEL = "rotate-parallel"
    ROTATE_XYZ = "rotate-xyz"

    @property
    def axis(self) -> Axis | None:
        return {
            TaskKind.ROTATE_X: Axis.X,
            TaskKind.ROTATE_Y: Axis.Y,
            TaskKind.ROTATE_Z: Axis.Z,
        }.get(self)

    @classmethod
    def parse(cls, value: "str | TaskKind") -> "TaskKind":
        if isinstance(value, TaskKind):
            return value
        key = value.strip().lower().replace("_", "-")
        aliases = {
            "rotatez": "rotate-z",
            "rotatex": "rotate-x",
            "rotatey": "rotate-y",
            "rotateparallel": "rotate-parallel",
            "rotatexyz": "rotate-xyz",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise InvalidInputError(f"unknown task {value!r}") from None

    @classmethod
    def for_axis(cls, axis: Axis) -> "TaskKind":
        return {Axis.X: cls.ROTATE_X, Axis.Y: cls.ROTATE_Y, Axis.Z: cls.ROTATE_Z}[Axis.parse(axis)]


@dataclass(frozen=True)
class EnvConfig:
    """Plant and episode parameters.

    Attributes:
        episode_length: steps per episode.
        dt: integration step in seconds.
        gain: angular acceleration per unit action about world x, y, z (rad/s^2).
        damping: viscous damping rate (1/s).
        control_noise: std of the additive acceleration noise (rad/s^2).
        tilt_drift: std of the angular-velocity drift on non-flat poses, per
            square-root second (rad/s per sqrt(s)).
        omega_max: per-axis angular velocity limit (rad/s).
        tolerance: success radius in radians.
        seed: default seed for environments built from this config.
    """

    episode_length: int = 100
    dt: float = 0.05
    gain: tuple[float, float, float] = (1.0, 1.0, 2.0)
    damping: float = 0.5
    control_noise: float = 0.05
    tilt_drift: float = 0.1
    omega_max: float = 2.0
    tolerance: float = 0.1
    seed: int = 0

    def __post_init__(self):
        gain = tuple(float(g) for g in self.gain)
        object.__setattr__(self, "gain", gain)
        if len(gain) != 3:
            raise InvalidInputError("gain needs three components")
        if int(self.episode_length) < 1:
            raise InvalidInputError("episode_length must be at least 1")
        positive = [self.dt, self.omega_max, self.tolerance, *gain]
        if any(not v > 0 for v in positive):
            raise InvalidInputError("dt, omega_max, tolerance and gains must be positive")
        if any(v < 0 for v in (self.damping, self.control_noise, self.tilt_drift)):
            raise InvalidInputError("damping and noise levels must be non-negative")

    def replace(self, **changes) -> "EnvConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EnvConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise InvalidInputError(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, value)
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "EnvConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def _parse_value(key: str, value: str):
    try:
        if key == "gain":
            return tuple(float(v) for v in value.replace("(", "").replace(")", "").split(","))
        if key in ("episode_length", "seed"):
            return int(value)
        return float(value)
    except ValueError:
        raise InvalidInputError(f"bad value for {key}: {value!r}") from None


@dataclass(frozen=True)
class GoalSpec:
    desired: UnitQuaternion


@dataclass(frozen=True)
class Observation:
    orientation: UnitQuaternion
    angular_velocity: tuple[float, float, float]
    previous_action: tuple[float, float, float]

    @property
    def array(self) -> np.ndarray:
        return np.concatenate([self.orientation.array, self.angular_velocity, self.previous_action])

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Observation":
        values = np.asarray(values, dtype=float)
        return cls(
            UnitQuaternion.from_array(values[:4]),
            tuple(float(v) for v in values[4:7]),
            tuple(float(v) for v in values[7:10]),
        )


@dataclass
class EnvState:
    """Mutable per-episode state.

    ``noise`` is the episode's pre-drawn table of standard normals (one row
    of six per step: three for control noise, three for tilt drift); it is
    the only randomness consumed by :func:`step`.
    """

    orientation: np.ndarray
    angular_velocity: np.ndarray
    previous_action: np.ndarray
    step_count: int
    noise: np.ndarray = field(repr=False)

    def observation(self) -> Observation:
        return Observation.from_array(self.observation_array())

    def observation_array(self) -> np.ndarray:
        return np.concatenate([self.orientation, self.angular_velocity, self.previous_action])


# ---------------------------------------------------------------------------
# Goals and rewards
# ---------------------------------------------------------------------------

def sample_rotation(task: TaskKind, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Draw goal rotations ``(4,)`` or ``(n, 4)`` from a task's distribution."""
    task = TaskKind.parse(task)
    count = 1 if n is None else n
    if task.axis is not None:
        angles = rng.uniform(-math.pi, math.pi, size=count)
        out = qfrom_axis_angle(int(task.axis), angles)
    elif task is TaskKind.ROTATE_PARALLEL:
        spin = qfrom_axis_angle(2, rng.uniform(-math.pi, math.pi, size=count))
        choices = np.array(PARALLEL_ANGLES)
        rx = qfrom_axis_angle(0, choices[rng.integers(0, len(choices), size=count)])
        ry = qfrom_axis_angle(1, choices[rng.integers(0, len(choices), size=count)])
        out = qmul(spin, qmul(ry, rx))
    else:
        out = random_quaternions(rng, count)
    out = qcanonical(out)
    return out[0] if n is None else out


def sample_goal(task: TaskKind, rng: np.random.Generator,
                initial: UnitQuaternion | None = None) -> GoalSpec:
    """Sample a goal; with ``initial`` the rotation is applied on top of it."""
    rotation = sample_rotation(task, rng)
    if initial is not None:
        rotation = qcanonical(qmul(rotation, initial.array))
    return GoalSpec(UnitQuaternion.from_array(rotation))


def compute_reward(achieved, desired, tolerance: float = 0.1):
    """Sparse reward: 0 when strictly within ``tolerance`` radians, else -1.

    Accepts :class:`UnitQuaternion` values or ``(..., 4)`` arrays.
    """
    if isinstance(achieved, UnitQuaternion):
        achieved = achieved.array
    if isinstance(desired, UnitQuaternion):
        desired = desired.array
    reward = np.where(qdistance(achieved, desired) < tolerance, 0.0, -1.0)
    return float(reward) if reward.ndim == 0 else reward


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def advance(orientation: np.ndarray, omega: np.ndarray, action: np.ndarray,
            noise: np.ndarray, config: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """One integration step for stacked states ``(n, 4)``, ``(n, 3)``."""
    action = np.clip(action, -1.0, 1.0)
    gain = np.asarray(config.gain)
    accel = gain * action + config.control_noise * noise[..., :3]
    omega = (1.0 - config.damping * config.dt) * omega + config.dt * accel
    if config.tilt_drift > 0:
        tilted = face_alignment(orientation) > FLAT_TOLERANCE
        drift = config.tilt_drift * math.sqrt(config.dt) * noise[..., 3:]
        omega = omega + np.where(tilted[..., None], drift, 0.0)
    omega = np.clip(omega, -config.omega_max, config.omega_max)
    orientation = qcanonical(qmul(qfrom_rotvec(omega * config.dt), orientation))
    return orientation, omega


def initial_orientations(task: TaskKind, rng: np.random.Generator, n: int) -> np.ndarray:
    if TaskKind.parse(task).axis is not None:
        return random_flat_quaternions(rng, n)
    return random_quaternions(rng, n)


def reset(task: TaskKind, config: EnvConfig, seed: int | None = None
          ) -> tuple[EnvState, Observation, GoalSpec]:
    """Start an episode; identical seeds give identical episodes."""
    batch = EnvBatch.reset(task, config, [config.seed if seed is None else seed])
    state = batch.state(0)
    return state, state.observation(), GoalSpec(UnitQuaternion.from_array(batch.goal[0]))


def reset_to(initial: UnitQuaternion, config: EnvConfig, seed: int) -> EnvState:
    """Episode state starting at a given orientation (noise drawn from ``seed``)."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((config.episode_length, 6))
    return EnvState(initial.array, np.zeros(3), np.zeros(3), 0, noise)


def step(state: EnvState, action, goal: GoalSpec, config: EnvConfig
         ) -> tuple[EnvState, Observation, float, dict]:
    """Advance one step. Returns ``(state, observation, reward, info)``."""
    if state.step_count >= config.episode_length:
        raise EpisodeExhaustedError(
            f"episode finished after {config.episode_length} steps")
    action = np.clip(np.asarray(action, dtype=float).reshape(3), -1.0, 1.0)
    q, omega = advance(state.orientation[None], state.angular_velocity[None],
                       action[None], state.noise[state.step_count][None], config)
    new_state = EnvState(q[0], omega[0], action, state.step_count + 1, state.noise)
    distance = float(qdistance(q[0], goal.desired.array))
    success = distance < config.tolerance
    reward = 0.0 if success else -1.0
    return new_state, new_state.observation(), reward, {"is_success": success, "distance": distance}


class EnvBatch:
    """``n`` independent episodes advanced in lockstep.

    Row ``i`` evolves exactly like a single environment reset with
    ``seeds[i]``.
    """

    def __init__(self, orientation, goal, noise, config: EnvConfig):
        n = len(orientation)
        self.config = config
        self.orientation = np.asarray(orientation, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        self.noise = noise
        self.omega = np.zeros((n, 3))
        self.previous_action = np.zeros((n, 3))
        self.row_steps = np.zeros(n, dtype=int)

    @classmethod
    def reset(cls, task: TaskKind, config: EnvConfig, seeds: Sequence[int]) -> "EnvBatch":
        task = TaskKind.parse(task)
        orientation, goal, noise = [], [], []
        for seed in seeds:
            rng = np.random.default_rng(seed)
            initial = initial_orientations(task, rng, 1)[0]
            orientation.append(initial)
            goal.append(qcanonical(qmul(sample_rotation(task, rng), initial)))
            noise.append(rng.standard_normal((config.episode_length, 6)))
        return cls(np.array(orientation), np.array(goal), np.array(noise), config)

    @classmethod
    def start_at(cls, initial: np.ndarray, goal: np.ndarray, config: EnvConfig,
                 seeds: Sequence[int]) -> "EnvBatch":
        """Episodes from given orientations; noise rows match :func:`reset_to`."""
        noise = np.array([np.random.default_rng(s).standard_normal((config.episode_length, 6))
                          for s in seeds])
        return cls(np.array(initial, dtype=float), np.array(goal, dtype=float), noise, config)

    def __len__(self) -> int:
        return len(self.orientation)

    def state(self, i: int) -> EnvState:
        return EnvState(self.orientation[i].copy(), self.omega[i].copy(),
                        self.previous_action[i].copy(), int(self.row_steps[i]), self.noise[i])

    def observations(self) -> np.ndarray:
        return np.concatenate([self.orientation, self.omega, self.previous_action], axis=1)

    def step(self, actions: np.ndarray, mask: np.ndarray | None = None):
        """Advance all rows (or only ``mask`` rows) by one step.

        Masked-out rows do not move and do not consume noise; the per-row
        step counters live in ``row_steps``.
        """
        rows = np.arange(len(self)) if mask is None else np.flatnonzero(mask)
        if np.any(self.row_steps[rows] >= self.config.episode_length):
            raise EpisodeExhaustedError("episode length exceeded")
        actions = np.clip(np.asarray(actions, dtype=float), -1.0, 1.0)
        if mask is not None:
            actions = actions[rows] if len(actions) == len(self) else actions
        noise = self.noise[rows, self.row_steps[rows]]
        q, omega = advance(self.orientation[rows], self.omega[rows], actions, noise, self.config)
        self.orientation[rows] = q
        self.omega[rows] = omega
        self.previous_action[rows] = actions
        self.row_steps[rows] += 1
        distance = qdistance(self.orientation, self.goal)
        success = distance < self.config.tolerance
        reward = np.where(success, 0.0, -1.0)
        return self.observations(), reward, success, distance


class CubeRotationEnv:
    """Stateful wrapper over :func:`reset` / :func:`step` for interactive use."""

    def __init__(self, task: TaskKind | str, config: EnvConfig | None = None):
        self.task = TaskKind.parse(task)
        self.config = config or EnvConfig()
        self.state: EnvState | None = None
        self.goal: GoalSpec | None = None

    def reset(self, seed: int | None = None) -> tuple[Observation, GoalSpec]:
        self.state, obs, self.goal = reset(self.task, self.config, seed)
        return obs, self.goal

    def reset_to(self, initial: UnitQuaternion, goal: UnitQuaternion, seed: int) -> Observation:
        self.state = reset_to(initial, self.config, seed)
        self.goal = GoalSpec(goal)
        return self.state.observation()

    def step(self, action):
        if self.state is None:
            raise InvalidInputError("call reset() before step()")
        self.state, obs, reward, info = step(self.state, action, self.goal, self.config)
        return obs, reward, info


def export_trajectory(records: Sequence[dict], path: str | Path) -> None:
    """Write ``{step, quaternion, action, reward}`` records as JSON lines."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({
                "step": int(rec["step"]),
                "quaternion": [float(v) for v in rec["quaternion"]],
                "action": [float(v) for v in rec["action"]],
                "reward": float(rec["reward"]),
            }) + "\n")
