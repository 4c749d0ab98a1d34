"""Policy checkpoints.

A checkpoint is a NumPy ``.npz`` archive (every member a ``.npy`` array in
C/row-major order) holding:

``header``
    JSON text: ``format`` ("rotchain-policy"), ``version``, ``task``, the
    layer sizes and output activations of actor and critic, and the full
    training config.
``actor/<i>``, ``critic/<i>``, ``actor_target/<i>``, ``critic_target/<i>``
    Parameters in layer order ``W0, b0, W1, b1, ...`` with ``W`` shaped
    ``(fan_in, fan_out)``.
``obs_norm/<field>``, ``goal_norm/<field>``
    Normaliser statistics (running sums, count, mean, std, eps and clip).

Loading checks the header and every array shape; values round-trip bit
for bit. Optimiser moments are not stored.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..env import ACTION_DIM, GOAL_DIM, OBS_DIM
from ..errors import InvalidInputError, LoadError
from .ddpg import ERROR_DIM, PolicyParams, TrainConfig
from .networks import MLP
from .normalizer import Normalizer

FORMAT = "rotchain-policy"
VERSION = 1
_NETS = ("actor", "critic", "actor_target", "critic_target")


def save_policy(params: PolicyParams, path: str | Path) -> None:
    header = {
        "format": FORMAT,
        "version": VERSION,
        "task": params.task,
        "actor_sizes": list(params.actor.sizes),
        "critic_sizes": list(params.critic.sizes),
        "actor_output": params.actor.output,
        "critic_output": params.critic.output,
        "train_config": params.config.to_dict(),
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    for name in _NETS:
        for i, p in enumerate(getattr(params, name).params):
            arrays[f"{name}/{i}"] = np.ascontiguousarray(p)
    for name in ("obs_norm", "goal_norm"):
        for key, value in getattr(params, name).state().items():
            arrays[f"{name}/{key}"] = value
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _net_from(data, name: str, sizes, output: str) -> MLP:
    net = MLP.__new__(MLP)
    net.sizes = tuple(sizes)
    net.output = output
    net.params = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        for j, shape in enumerate(((fan_in, fan_out), (fan_out,))):
            key = f"{name}/{2 * i + j}"
            if key not in data:
                raise LoadError(f"checkpoint is missing {key}")
            value = np.array(data[key], dtype=float)
            if value.shape != shape:
                raise LoadError(f"{key} has shape {value.shape}, expected {shape}")
            net.params.append(value)
    return net


def load_policy(path: str | Path) -> PolicyParams:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise LoadError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        if "header" not in data:
            raise LoadError(f"{path} has no header")
        header = json.loads(str(data["header"]))
        if header.get("format") != FORMAT:
            raise LoadError(f"{path} is not a policy checkpoint")
        if header.get("version") != VERSION:
            raise LoadError(f"unsupported checkpoint version {header.get('version')}")
        actor_sizes = header["actor_sizes"]
        critic_sizes = header["critic_sizes"]
        try:
            config = TrainConfig.from_dict(header["train_config"])
        except (KeyError, TypeError, InvalidInputError) as exc:
            raise LoadError(f"checkpoint has an invalid training config: {exc}") from exc
        in_dim = OBS_DIM + GOAL_DIM + (ERROR_DIM if config.goal_error_features else 0)
        if actor_sizes[0] != in_dim or actor_sizes[-1] != ACTION_DIM:
            raise LoadError(f"actor layout {actor_sizes} does not match the observation/goal layout")
        if critic_sizes[0] != in_dim + ACTION_DIM or critic_sizes[-1] != 1:
            raise LoadError(f"critic layout {critic_sizes} does not match the observation/goal layout")
        nets = {}
        for name in _NETS:
            sizes = actor_sizes if name.startswith("actor") else critic_sizes
            output = header["actor_output"] if name.startswith("actor") else header["critic_output"]
            nets[name] = _net_from(data, name, sizes, output)
        norms = {}
        for name, size in (("obs_norm", OBS_DIM), ("goal_norm", GOAL_DIM)):
            prefix = f"{name}/"
            state = {k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)}
            try:
                norms[name] = Normalizer.from_state(state)
            except KeyError as exc:
                raise LoadError(f"checkpoint is missing {name} field {exc}") from exc
            if norms[name].size != size:
                raise LoadError(f"{name} has {norms[name].size} coordinates, expected {size}")
    return PolicyParams(config=config, task=header.get("task", ""), **nets, **norms)
