"""Goal-conditioned deterministic policy gradient (actor-critic with target networks)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ..env import ACTION_DIM, GOAL_DIM, OBS_DIM
from ..errors import InvalidInputError
from ..rotations import qconj, qmul, qto_rotvec
from .networks import MLP, Adam
from .normalizer import Normalizer
from .replay import ReplayBuffer, TransitionBatch


ERROR_DIM = 3
ERROR_UNIT = 0.5


@dataclass(frozen=True)
class TrainConfig:
    """Learning hyperparameters. Budgets are in environment steps."""

    total_timesteps: int = 200_000
    cycle_episodes: int = 50
    updates_per_cycle: int = 40
    batch_size: int = 256
    gamma: float = 0.98
    polyak: float = 0.95
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    her_k: float = 4.0
    noise_sigma: float = 0.2
    random_eps: float = 0.3
    action_l2: float = 1.0
    hidden: tuple[int, ...] = (256, 256, 256)
    buffer_size: int = 1_000_000
    norm_clip: float = 5.0
    eval_episodes: int = 100
    keep_best: bool = True
    # append the rotation vector of goal ⊗ orientation⁻¹ to the network input
    goal_error_features: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.her_k < 0:
            raise InvalidInputError("her_k must be non-negative")
        if not 0.0 <= self.polyak <= 1.0:
            raise InvalidInputError("polyak must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidInputError("gamma must lie in [0, 1)")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown train config keys: {sorted(unknown)}")
        data = dict(data)
        if "hidden" in data:
            data["hidden"] = tuple(data["hidden"])
        return cls(**data)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        """Parse ``key = value`` lines (``#`` comments) on top of ``base``."""
        base = base or cls()
        types = {f.name: type(getattr(base, f.name)) for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep:
                raise InvalidInputError(f"line {lineno}: expected key = value")
            if key not in types:
                raise InvalidInputError(f"line {lineno}: unknown key {key!r}")
            try:
                if types[key] is tuple:
                    values[key] = tuple(int(v) for v in value.strip("()").split(",") if v.strip())
                elif types[key] is bool:
                    if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(value)
                    values[key] = value.lower() in ("true", "1", "yes")
                elif types[key] is int:
                    values[key] = int(float(value))
                else:
                    values[key] = float(value)
            except ValueError:
                raise InvalidInputError(f"line {lineno}: bad value for {key}: {value!r}") from None
        return replace(base, **values)


@dataclass
class PolicyParams:
    """Actor, critic, their target copies and the input normalisers."""

    actor: MLP
    critic: MLP
    actor_target: MLP
    critic_target: MLP
    obs_norm: Normalizer
    goal_norm: Normalizer
    config: TrainConfig
    task: str = ""
    actor_opt: Adam = field(default=None, repr=False)
    critic_opt: Adam = field(default=None, repr=False)

    def __post_init__(self):
        if self.actor_opt is None:
            self.actor_opt = Adam(self.actor.params, lr=self.config.lr_actor)
        if self.critic_opt is None:
            self.critic_opt = Adam(self.critic.params, lr=self.config.lr_critic)

    @classmethod
    def create(cls, config: TrainConfig, rng: np.random.Generator, task: str = "") -> "PolicyParams":
        in_dim = OBS_DIM + GOAL_DIM + (ERROR_DIM if config.goal_error_features else 0)
        actor = MLP((in_dim, *config.hidden, ACTION_DIM), output="tanh", rng=rng)
        critic = MLP((in_dim + ACTION_DIM, *config.hidden, 1), output="linear", rng=rng)
        return cls(
            actor=actor,
            critic=critic,
            actor_target=actor.copy(),
            critic_target=critic.copy(),
            obs_norm=Normalizer(OBS_DIM, clip_range=config.norm_clip),
            goal_norm=Normalizer(GOAL_DIM, clip_range=config.norm_clip),
            config=config,
            task=task,
        )

    def snapshot(self) -> "PolicyParams":
        """Independent copy of networks and normalisers (fresh optimiser state)."""
        return PolicyParams(
            actor=self.actor.copy(),
            critic=self.critic.copy(),
            actor_target=self.actor_target.copy(),
            critic_target=self.critic_target.copy(),
            obs_norm=Normalizer.from_state(self.obs_norm.state()),
            goal_norm=Normalizer.from_state(self.goal_norm.state()),
            config=self.config,
            task=self.task,
        )

    @property
    def q_bounds(self) -> tuple[float, float]:
        return -1.0 / (1.0 - self.config.gamma), 0.0

    def inputs(self, obs: np.ndarray, goal: np.ndarray) -> np.ndarray:
        parts = [self.obs_norm.normalize(obs), self.goal_norm.normalize(goal)]
        if self.config.goal_error_features:
            parts.append(goal_error(obs, goal))
        return np.concatenate(parts, axis=-1)

    def act(self, obs: np.ndarray, goal: np.ndarray, explore: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
        return act(self, obs, goal, explore=explore, rng=rng)


def goal_error(obs: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """Rotation vector of ``goal ⊗ orientation⁻¹`` in units of :data:`ERROR_UNIT` radians.

    A fixed, parameter-free feature. The fine unit keeps errors around the
    0.1 rad success tolerance well resolved at the network input.
    """
    return qto_rotvec(qmul(goal, qconj(obs[..., :GOAL_DIM]))) / ERROR_UNIT


def act(params: PolicyParams, observation, goal, explore: bool = False,
        rng: np.random.Generator | None = None) -> np.ndarray:
    """Actions in ``[-1, 1]^3`` for one or a batch of (observation, goal) rows."""
    obs = np.asarray(observation, dtype=float)
    single = obs.ndim == 1
    obs = np.atleast_2d(obs)
    goal = np.atleast_2d(np.asarray(goal, dtype=float))
    action = params.actor(params.inputs(obs, goal))
    if explore:
        if rng is None:
            raise InvalidInputError("exploration needs an rng")
        cfg = params.config
        action = action + cfg.noise_sigma * rng.standard_normal(action.shape)
        action = np.clip(action, -1.0, 1.0)
        random_action = rng.uniform(-1.0, 1.0, size=action.shape)
        pick = rng.uniform(size=(len(action), 1)) < cfg.random_eps
        action = np.where(pick, random_action, action)
    action = np.clip(action, -1.0, 1.0)
    return action[0] if single else action


def critic_targets(params: PolicyParams, batch: TransitionBatch) -> np.ndarray:
    """Clipped one-step bootstrap targets ``r + gamma * Q'(s', g, pi'(s', g))``."""
    x_next = params.inputs(batch.next_observation, batch.desired_goal)
    a_next = params.actor_target(x_next)
    q_next = params.critic_target(np.concatenate([x_next, a_next], axis=1))[:, 0]
    y = batch.reward + params.config.gamma * q_next
    lo, hi = params.q_bounds
    return np.clip(y, lo, hi)


def critic_loss_and_grads(params: PolicyParams, x: np.ndarray, action: np.ndarray,
                          target: np.ndarray) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Mean squared Bellman error and its parameter gradients."""
    q, cache = params.critic.forward(np.concatenate([x, action], axis=1))
    err = q[:, 0] - target
    loss = float(np.mean(err ** 2))
    grad_q = (2.0 / len(err)) * err[:, None]
    grads, _ = params.critic.backward(cache, grad_q)
    return loss, grads, q[:, 0]


def actor_loss_and_grads(params: PolicyParams, x: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """``-mean Q(s, g, pi(s, g)) + action_l2 * mean(pi^2)`` and actor gradients."""
    action, actor_cache = params.actor.forward(x)
    q, critic_cache = params.critic.forward(np.concatenate([x, action], axis=1))
    n = len(x)
    l2 = params.config.action_l2
    loss = float(-np.mean(q) + l2 * np.mean(action ** 2))
    _, grad_in = params.critic.backward(critic_cache, np.full((n, 1), -1.0 / n))
    grad_action = grad_in[:, -ACTION_DIM:] + l2 * 2.0 * action / action.size
    grads, _ = params.actor.backward(actor_cache, grad_action)
    return loss, grads


def update_targets(params: PolicyParams) -> None:
    params.actor_target.soft_update(params.actor, params.config.polyak)
    params.critic_target.soft_update(params.critic, params.config.polyak)


def gradient_step(params: PolicyParams, batch: TransitionBatch) -> tuple[float, float]:
    target = critic_targets(params, batch)
    x = params.inputs(batch.observation, batch.desired_goal)
    critic_loss, critic_grads, q = critic_loss_and_grads(params, x, batch.action, target)
    params.critic_opt.step(params.critic.params, critic_grads)
    _, actor_grads = actor_loss_and_grads(params, x)
    params.actor_opt.step(params.actor.params, actor_grads)
    update_targets(params)
    return critic_loss, float(np.mean(np.abs(q)))


def train_cycle(params: PolicyParams, buffer: ReplayBuffer, config: TrainConfig,
                rng: np.random.Generator, tolerance: float = 0.1) -> dict:
    """Apply ``updates_per_cycle`` gradient steps on HER-relabeled batches.

    Targets track the main networks by polyak averaging after every step.
    Returns diagnostics; with too little data nothing is changed and
    ``applied`` is False.
    """
    if buffer.size < config.batch_size:
        return {"applied": False, "critic_loss": float("nan"), "mean_abs_q": float("nan"), "updates": 0}
    losses, qs = [], []
    for _ in range(config.updates_per_cycle):
        batch = buffer.sample_relabeled_batch(config.batch_size, config.her_k, tolerance, rng)
        loss, mean_q = gradient_step(params, batch)
        losses.append(loss)
        qs.append(mean_q)
    return {
        "applied": True,
        "critic_loss": float(np.mean(losses)) if losses else 0.0,
        "mean_abs_q": float(np.mean(qs)) if qs else 0.0,
        "updates": config.updates_per_cycle,
    }
