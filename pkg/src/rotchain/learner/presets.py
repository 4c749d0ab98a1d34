"""Named training presets.

``full`` presets use the reference HER configuration and the full budgets
(2M steps for RotateZ, 4M for RotateX/RotateY, 10M for the end-to-end
baselines). ``desk`` presets shrink budgets tenfold-or-more and use a
smaller, more frequently updated network, a weaker action penalty and the
goal-error input features (see :func:`~rotchain.learner.ddpg.goal_error`)
so a run fits on one CPU core in minutes; the baseline desk budget equals the summed desk budgets of the
primitives it is compared against.

Seeds are fixed per task and listed in :data:`DESK_SEEDS`.
"""

from __future__ import annotations

from ..env import TaskKind
from ..errors import InvalidInputError
from .ddpg import TrainConfig

FULL_BUDGETS = {
    TaskKind.ROTATE_Z: 2_000_000,
    TaskKind.ROTATE_X: 4_000_000,
    TaskKind.ROTATE_Y: 4_000_000,
    TaskKind.ROTATE_PARALLEL: 10_000_000,
    TaskKind.ROTATE_XYZ: 10_000_000,
}
DESK_BUDGETS = {
    TaskKind.ROTATE_Z: 200_000,
    TaskKind.ROTATE_X: 400_000,
    TaskKind.ROTATE_Y: 400_000,
    TaskKind.ROTATE_PARALLEL: 1_000_000,
    TaskKind.ROTATE_XYZ: 1_000_000,
}
# Documented seed list for desk-scale runs (one seed per task).
DESK_SEEDS = {
    TaskKind.ROTATE_Z: 1,
    TaskKind.ROTATE_X: 2,
    TaskKind.ROTATE_Y: 3,
    TaskKind.ROTATE_PARALLEL: 4,
    TaskKind.ROTATE_XYZ: 5,
}
_DESK_OVERRIDES = dict(hidden=(128, 128), updates_per_cycle=400, polyak=0.98, action_l2=0.1,
                       goal_error_features=True)
SCALES = ("desk", "full")


def preset(task: TaskKind | str, scale: str = "desk") -> TrainConfig:
    """Training config for ``task`` at ``scale`` (``"desk"`` or ``"full"``)."""
    task = TaskKind.parse(task)
    if scale == "full":
        return TrainConfig(total_timesteps=FULL_BUDGETS[task], seed=DESK_SEEDS[task])
    if scale == "desk":
        return TrainConfig(total_timesteps=DESK_BUDGETS[task], seed=DESK_SEEDS[task], **_DESK_OVERRIDES)
    raise InvalidInputError(f"unknown preset scale {scale!r}; expected one of {SCALES}")


def preset_name(task: TaskKind | str, scale: str = "desk") -> str:
    return f"{scale}-{TaskKind.parse(task).value}"
