"""Shared fixtures: the desk-scale training run used by the acceptance suite."""

import time
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from rotchain.bench.evaluate import Evaluation, load_outcomes
from rotchain.bench.pipeline import BASELINE_TASK, PRIMITIVES, run_pipeline, train_or_load
from rotchain.env import EnvConfig, TaskKind

# One line per acceptance criterion, printed in the terminal summary.
CRITERIA: dict[int, tuple[bool, str]] = {}

TESTSET_SEED = 2024


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@dataclass
class DeskRun:
    out_dir: Path
    policies: dict = field(repr=False)
    train_seconds: dict
    paths: dict
    evaluation: Evaluation = field(repr=False)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory) -> DeskRun:
    """Train the desk primitives and the RotateXYZ baseline, then run the full evaluation.

    Training goes through the same code path as the pipeline; the pipeline
    is then run on the saved checkpoints so its report covers the whole test set.
    """
    out = tmp_path_factory.mktemp("desk-run")
    env_config = EnvConfig()
    policies, seconds = {}, {}
    for task in (*PRIMITIVES, BASELINE_TASK):
        start = time.perf_counter()
        policies[task] = train_or_load(task, out, "desk", env_config)
        seconds[task] = time.perf_counter() - start
    paths = run_pipeline(out, scale="desk", seed=TESTSET_SEED, env_config=env_config, reuse=True)
    return DeskRun(out, policies, seconds, paths, load_outcomes(paths["traces"]))


@pytest.fixture(scope="session")
def primitive_policies(desk_run):
    return {task.axis: desk_run.policies[task] for task in PRIMITIVES}


@pytest.fixture(scope="session")
def baseline_policy(desk_run):
    return desk_run.policies[TaskKind.ROTATE_XYZ]
