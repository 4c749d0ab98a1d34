"""Test-set evaluation of the hierarchical controller and end-to-end baselines.

Every (case, method) pair yields one :class:`Outcome`. Outcomes are written
as JSON lines, and :func:`rotchain.bench.report.build_report` aggregates
them; because aggregation reads nothing but stored outcomes, a report can
be recomputed from the trace file alone.

Methods
-------
``z-x-z`` / ``z-y-z``
    The hierarchical executor restricted to one chain.
``best-of``
    Per case, the better of the two chain traces (successful first, then
    smaller final distance, ties to z-x-z).
``baseline:<name>``
    A goal-conditioned policy run directly on the 3D goal for exactly
    ``baseline_horizon`` steps.

All methods share the per-case environment seed from
:meth:`TestSet.env_seeds`, so comparisons between methods are paired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..env import EnvConfig
from ..errors import LoadError
from ..hierarchy import (
    BatchResult,
    ChainChoice,
    ExecConfig,
    Policy,
    PolicySet,
    best_of_mask,
    execute_batch,
    run_direct,
)
from ..rotations import ZXZ, ZYZ
from .testset import TestSet

BASELINE_HORIZON = 300
CHAIN_METHODS = {"z-x-z": ZXZ, "z-y-z": ZYZ}
BEST_OF = "best-of"
TRACE_FORMAT = "rotchain-traces"
TRACE_VERSION = 1


@dataclass(frozen=True)
class Outcome:
    """Result of one method on one test case."""

    case: int
    method: str
    required_rotations: int
    parallel_comparable: bool
    success: bool
    final_distance: float
    steps: int
    trace: dict | None = field(default=None, compare=False)

    def to_record(self) -> dict:
        rec = {
            "case": self.case,
            "method": self.method,
            "required_rotations": self.required_rotations,
            "parallel_comparable": self.parallel_comparable,
            "success": self.success,
            "final_distance": self.final_distance,
            "steps": self.steps,
        }
        if self.trace is not None:
            rec["trace"] = self.trace
        return rec

    @classmethod
    def from_record(cls, rec: dict, tolerance: float = 0.1) -> "Outcome":
        try:
            out = cls(int(rec["case"]), str(rec["method"]), int(rec["required_rotations"]),
                      bool(rec["parallel_comparable"]), bool(rec["success"]),
                      float(rec["final_distance"]), int(rec["steps"]), rec.get("trace"))
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"malformed outcome record: {exc}") from exc
        if out.success != (out.final_distance < tolerance):
            raise LoadError(f"case {out.case} ({out.method}): success flag disagrees with distance")
        return out


@dataclass
class Evaluation:
    """All outcomes of one evaluation run plus the settings that produced them."""

    outcomes: list[Outcome]
    meta: dict

    def methods(self) -> list[str]:
        return list(dict.fromkeys(o.method for o in self.outcomes))

    def by_method(self, method: str) -> list[Outcome]:
        return [o for o in self.outcomes if o.method == method]

    def success_vector(self, method: str) -> np.ndarray:
        """Per-case success (ordered by case id) for paired statistics."""
        rows = sorted(self.by_method(method), key=lambda o: o.case)
        return np.array([o.success for o in rows], dtype=bool)


def _chain_outcomes(testset: TestSet, result: BatchResult, method: str,
                    keep_traces: bool) -> list[Outcome]:
    out = []
    for i, case in enumerate(testset.cases):
        trace = result.trace(i).to_record() if keep_traces else None
        out.append(Outcome(case.id, method, case.required_rotations, case.parallel_comparable,
                           bool(result.success[i]), float(result.final_distance[i]),
                           int(result.total_steps[i]), trace))
    return out


def evaluate(testset: TestSet, policies: PolicySet | None, baselines: Mapping[str, Policy] | None,
             env_config: EnvConfig, exec_config: ExecConfig | None = None,
             baseline_horizon: int = BASELINE_HORIZON, keep_traces: bool = True,
             noise_seed: int | None = None) -> Evaluation:
    """Evaluate the hierarchical controller and any baselines on ``testset``.

    Args:
        testset: Cases to run.
        policies: Primitive policies; ``None`` skips the chain methods.
        baselines: Named end-to-end policies (may be empty).
        env_config: Dynamics; the horizon is overridden per method.
        exec_config: Executor settings. ``chain`` selects which chain methods
            run: a single chain, or both plus ``best-of``.
        baseline_horizon: Steps given to each baseline episode.
        keep_traces: Store full execution traces in the outcomes.
        noise_seed: Base for the per-case environment seeds; defaults to the
            test set's generation seed.
    """
    exec_config = exec_config or ExecConfig()
    initial, goal = testset.arrays()
    seeds = testset.env_seeds(noise_seed)
    outcomes: list[Outcome] = []
    if policies is not None:
        if exec_config.chain is ChainChoice.BEST_OF_BOTH:
            wanted = list(CHAIN_METHODS)
        else:
            wanted = [exec_config.chain.chain.label]
        results = {}
        for name in wanted:
            results[name] = execute_batch(policies, initial, goal, seeds, env_config,
                                          exec_config, CHAIN_METHODS[name])
            outcomes += _chain_outcomes(testset, results[name], name, keep_traces)
        if len(results) == 2:
            zxz, zyz = results["z-x-z"], results["z-y-z"]
            pick = best_of_mask(zxz, zyz)
            for i, case in enumerate(testset.cases):
                src, label = (zyz, "z-y-z") if pick[i] else (zxz, "z-x-z")
                trace = {"selected": label} if keep_traces else None
                outcomes.append(Outcome(case.id, BEST_OF, case.required_rotations,
                                        case.parallel_comparable, bool(src.success[i]),
                                        float(src.final_distance[i]), int(src.total_steps[i]),
                                        trace))
    for name, policy in (baselines or {}).items():
        final, distance = run_direct(policy, initial, goal, seeds, env_config, baseline_horizon)
        for i, case in enumerate(testset.cases):
            trace = {"final": [float(v) for v in final[i]]} if keep_traces else None
            outcomes.append(Outcome(case.id, f"baseline:{name}", case.required_rotations,
                                    case.parallel_comparable, bool(distance[i] < exec_config.tolerance),
                                    float(distance[i]), baseline_horizon, trace))
    meta = {
        "testset_seed": testset.seed,
        "noise_seed": testset.seed if noise_seed is None else noise_seed,
        "cases": len(testset),
        "tolerance": exec_config.tolerance,
        "split_large": exec_config.split_large,
        "per_step_budget": exec_config.per_step_budget,
        "carry_over": exec_config.carry_over,
        "baseline_horizon": baseline_horizon,
        "env_config": env_config.to_text(),
    }
    return Evaluation(outcomes, meta)


def dump_outcomes(evaluation: Evaluation, path: str | Path) -> None:
    """Write a header line followed by one JSON record per outcome."""
    with open(path, "w") as fh:
        header = {"format": TRACE_FORMAT, "version": TRACE_VERSION, **evaluation.meta}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for o in evaluation.outcomes:
            fh.write(json.dumps(o.to_record(), sort_keys=True) + "\n")


def load_outcomes(path: str | Path) -> Evaluation:
    lines = Path(path).read_text().splitlines()
    return parse_outcomes(lines)


def parse_outcomes(lines: Iterable[str]) -> Evaluation:
    it = iter(lines)
    try:
        header = json.loads(next(it))
    except (StopIteration, json.JSONDecodeError) as exc:
        raise LoadError("trace file has no header") from exc
    if header.get("format") != TRACE_FORMAT:
        raise LoadError("not a trace file")
    if header.get("version") != TRACE_VERSION:
        raise LoadError(f"unsupported trace version {header.get('version')}")
    tol = float(header.get("tolerance", 0.1))
    outcomes = []
    for line in it:
        if line.strip():
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"bad trace line: {exc}") from exc
            outcomes.append(Outcome.from_record(rec, tol))
    meta = {k: v for k, v in header.items() if k not in ("format", "version")}
    return Evaluation(outcomes, meta)


def paired_difference(a: Sequence[bool], b: Sequence[bool]) -> tuple[float, float]:
    """Mean and standard error of the per-case difference ``a - b``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if len(d) < 2:
        return float(d.mean()) if len(d) else 0.0, float("inf")
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(len(d)))


def two_proportion(a: Sequence[bool], b: Sequence[bool]) -> tuple[float, float]:
    """Difference of success rates of two independent samples and its standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pa, pb = a.mean(), b.mean()
    se = np.sqrt(pa * (1 - pa) / len(a) + pb * (1 - pb) / len(b))
    return float(pa - pb), float(se)
