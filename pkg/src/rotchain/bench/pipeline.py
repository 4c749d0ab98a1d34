"""End-to-end desk pipeline: train primitives (and a baseline), evaluate, report."""

from __future__ import annotations

import logging
from pathlib import Path

from ..env import EnvConfig, TaskKind
from ..hierarchy import ExecConfig, PolicySet
from ..learner.checkpoint import load_policy, save_policy
from ..learner.presets import preset
from ..learner.training import train, write_curve
from ..rotations import Axis
from . import report as report_mod
from .evaluate import dump_outcomes, evaluate
from .testset import gen_testset, save as save_testset

log = logging.getLogger(__name__)

PRIMITIVES = (TaskKind.ROTATE_Z, TaskKind.ROTATE_X, TaskKind.ROTATE_Y)
BASELINE_TASK = TaskKind.ROTATE_XYZ


def train_or_load(task: TaskKind, out_dir: Path, scale: str, env_config: EnvConfig,
                  reuse: bool = False, **overrides):
    """Train ``task`` with its preset (plus ``overrides``) unless a checkpoint exists and ``reuse``."""
    path = out_dir / f"{task.value}.npz"
    if reuse and path.exists():
        return load_policy(path)
    config = preset(task, scale).replace(**overrides)
    params, curve = train(task, env_config, config, progress=True)
    save_policy(params, path)
    write_curve(curve, out_dir / f"{task.value}.curve.csv")
    return params


def run_pipeline(out_dir: str | Path, scale: str = "desk", seed: int = 0, baseline: bool = True,
                 per_bucket: int | None = None, env_config: EnvConfig | None = None,
                 reuse: bool = False, **overrides) -> dict[str, Path]:
    """Run every stage and return the paths of the artifacts written to ``out_dir``.

    ``overrides`` are applied to every training preset (e.g. a reduced
    ``total_timesteps`` for smoke tests).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env_config = env_config or EnvConfig()
    policies = {}
    for task in PRIMITIVES:
        policies[task.axis] = train_or_load(task, out_dir, scale, env_config, reuse, **overrides)
    baselines = {}
    if baseline:
        baselines[BASELINE_TASK.value] = train_or_load(BASELINE_TASK, out_dir, scale, env_config,
                                                       reuse, **overrides)
    testset = gen_testset(seed)
    paths = {"testset": out_dir / "testset.txt", "traces": out_dir / "traces.jsonl",
             "csv": out_dir / "report.csv", "table": out_dir / "report.txt"}
    save_testset(testset, paths["testset"])
    if per_bucket:
        testset = testset.subset(per_bucket)
    evaluation = evaluate(testset, PolicySet({Axis(a): p for a, p in policies.items()}), baselines,
                          env_config, ExecConfig())
    dump_outcomes(evaluation, paths["traces"])
    report = report_mod.build_report(evaluation)
    paths["csv"].write_text(report_mod.to_csv(report))
    paths["table"].write_text(report_mod.to_table(report))
    return paths
