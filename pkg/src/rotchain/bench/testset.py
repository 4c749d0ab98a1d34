"""Stratified test set of (initial, goal) pose pairs.

Cases are bucketed by how many non-negligible extrinsic rotations they
need (1, 2 or 3) and by whether their tilt angle is a multiple of a quarter
turn, i.e. whether a policy trained on RotateParallel goals could in
principle solve them. Bucket sizes are fixed:

=================  ===  ====  ====
rotations            1     2     3
=================  ===  ====  ====
parallel subset    200  1000  2000
all cases          600  2000  4000
=================  ===  ====  ====
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import LoadError
from ..rotations import (
    EVALUATED_CHAINS,
    SUCCESS_TOLERANCE,
    UnitQuaternion,
    count_required_rotations_array,
    qcanonical,
    qcompose,
    qconj,
    qdecompose,
    qmul,
    random_flat_quaternions,
)

FORMAT = "rotchain-testset"
VERSION = 1
PARALLEL_COUNTS = {1: 200, 2: 1000, 3: 2000}
TOTAL_COUNTS = {1: 600, 2: 2000, 3: 4000}
QUARTER_TURNS = (0.0, math.pi / 2, math.pi)
_COLUMNS = ["id", "init_w", "init_x", "init_y", "init_z",
            "goal_w", "goal_x", "goal_y", "goal_z", "required_rotations", "parallel_comparable"]


@dataclass(frozen=True)
class TestCase:
    id: int
    initial: UnitQuaternion
    goal: UnitQuaternion
    required_rotations: int
    parallel_comparable: bool


@dataclass(frozen=True)
class TestSet:
    cases: tuple[TestCase, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.cases)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        initial = np.array([c.initial.array for c in self.cases]).reshape(-1, 4)
        goal = np.array([c.goal.array for c in self.cases]).reshape(-1, 4)
        return initial, goal

    def env_seeds(self, base: int | None = None) -> list[int]:
        """Per-case environment seeds, derived from ``base`` (default: the generation seed)."""
        base = self.seed if base is None else base
        return [case_seed(base, c.id) for c in self.cases]

    def bucket_counts(self) -> dict[tuple[str, int], int]:
        counts = {}
        for n in (1, 2, 3):
            counts[("parallel", n)] = sum(c.parallel_comparable and c.required_rotations == n
                                          for c in self.cases)
            counts[("xyz", n)] = sum(c.required_rotations == n for c in self.cases)
        return counts

    def subset(self, per_bucket: int) -> "TestSet":
        """First ``per_bucket`` cases of each (rotations, comparability) stratum."""
        taken: dict[tuple[int, bool], int] = {}
        keep = []
        for c in self.cases:
            key = (c.required_rotations, c.parallel_comparable)
            if taken.get(key, 0) < per_bucket:
                keep.append(c)
                taken[key] = taken.get(key, 0) + 1
        return TestSet(tuple(keep), self.seed)


def case_seed(seed: int, case_id: int) -> int:
    """Environment seed for one case (shared by every method evaluated on it)."""
    return int(np.random.SeedSequence([int(seed), int(case_id)]).generate_state(1, np.uint64)[0])


def tilt_is_quarter_turn(initial: np.ndarray, goal: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Whether the middle Davenport angle (for z-x-z and z-y-z) is 0, ±pi/2 or ±pi."""
    relative = qmul(goal, qconj(initial))
    ok = np.ones(len(relative), dtype=bool)
    for chain in EVALUATED_CHAINS:
        beta = np.abs(qdecompose(relative, chain.indices)[:, 1])
        ok &= np.min(np.abs(beta[:, None] - np.array(QUARTER_TURNS)), axis=1) <= atol
    return ok


def _sample_relative(rng: np.random.Generator, n: int, n_rot: int, parallel: bool,
                     tol: float) -> np.ndarray:
    """``n`` candidate relative rotations for one bucket (vectorised)."""

    def free_angles():
        return rng.choice([-1.0, 1.0], size=n) * rng.uniform(tol, math.pi, size=n)

    if parallel:
        # A half-turn tilt folds the outer angles together, so it can only
        # produce one- or two-rotation cases.
        tilts = [math.pi / 2, -math.pi / 2] if n_rot == 3 else [math.pi / 2, -math.pi / 2, math.pi]
        tilt = rng.choice(tilts, size=n)
    else:
        tilt = free_angles()
    first, second = free_angles(), free_angles()
    zeros = np.zeros(n)
    coin = rng.uniform(size=n) < 0.5
    if n_rot == 1:
        # Non-parallel single rotations must be tilts; parallel ones may also be spins.
        spin_only = coin & parallel
        angles = np.stack([np.where(spin_only, first, 0.0), np.where(spin_only, 0.0, tilt), zeros], axis=1)
    elif n_rot == 2:
        angles = np.stack([np.where(coin, first, 0.0), tilt, np.where(coin, 0.0, second)], axis=1)
    else:
        angles = np.stack([first, tilt, second], axis=1)
    use_zyz = rng.integers(0, 2, size=n).astype(bool)
    out = qcompose(angles, EVALUATED_CHAINS[0].indices)
    out[use_zyz] = qcompose(angles[use_zyz], EVALUATED_CHAINS[1].indices)
    return out


def gen_testset(seed: int, tol: float = SUCCESS_TOLERANCE) -> TestSet:
    """Build the stratified test set by sampling Davenport triples per bucket.

    Each bucket draws candidate triples with exactly the required number of
    angles of magnitude at least ``tol`` (tilts quantised to quarter turns
    for the parallel-comparable part), composes them with a resting initial
    pose with random spin, and keeps the first candidates whose labels
    survive an independent re-check with
    :func:`count_required_rotations_array` and :func:`tilt_is_quarter_turn`.
    """
    rng = np.random.default_rng(seed)
    cases: list[TestCase] = []
    for n_rot in (1, 2, 3):
        for parallel, count in ((True, PARALLEL_COUNTS[n_rot]),
                                (False, TOTAL_COUNTS[n_rot] - PARALLEL_COUNTS[n_rot])):
            made = 0
            while made < count:
                batch = 2 * (count - made) + 16
                relative = _sample_relative(rng, batch, n_rot, parallel, tol)
                initial = random_flat_quaternions(rng, batch)
                goal = qcanonical(qmul(relative, initial))
                ok = ((count_required_rotations_array(initial, goal, tol) == n_rot)
                      & (tilt_is_quarter_turn(initial, goal) == parallel))
                for i in np.flatnonzero(ok)[: count - made]:
                    cases.append(TestCase(len(cases), UnitQuaternion.from_array(initial[i]),
                                          UnitQuaternion.from_array(goal[i]), n_rot, parallel))
                    made += 1
    testset = TestSet(tuple(cases), int(seed))
    validate(testset, tol)
    return testset


def validate(testset: TestSet, tol: float = SUCCESS_TOLERANCE, full: bool = True) -> None:
    """Raise :class:`LoadError` unless bucket sizes and case labels are consistent."""
    counts = testset.bucket_counts()
    for n in (1, 2, 3):
        if counts[("parallel", n)] != PARALLEL_COUNTS[n] or counts[("xyz", n)] != TOTAL_COUNTS[n]:
            raise LoadError(f"bucket counts {counts} do not match the required stratification")
    if len(testset) != sum(TOTAL_COUNTS.values()):
        raise LoadError(f"test set has {len(testset)} cases")
    if full:
        initial, goal = testset.arrays()
        needed = count_required_rotations_array(initial, goal, tol)
        flags = tilt_is_quarter_turn(initial, goal)
        for c, n, f in zip(testset.cases, needed, flags):
            if c.required_rotations != n or c.parallel_comparable != f:
                raise LoadError(f"case {c.id} labels disagree with its poses")


def dumps(testset: TestSet) -> str:
    out = io.StringIO()
    out.write(f"# {FORMAT} version={VERSION} seed={testset.seed} cases={len(testset)}\n")
    out.write(",".join(_COLUMNS) + "\n")
    for c in testset.cases:
        values = [str(c.id), *(repr(v) for v in c.initial), *(repr(v) for v in c.goal),
                  str(c.required_rotations), "1" if c.parallel_comparable else "0"]
        out.write(",".join(values) + "\n")
    return out.getvalue()


def save(testset: TestSet, path: str | Path) -> None:
    Path(path).write_text(dumps(testset))


def loads(text: str, check: bool = True) -> TestSet:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {FORMAT} "):
        raise LoadError("not a test set file")
    meta = dict(item.split("=", 1) for item in lines[0][2 + len(FORMAT):].split())
    if int(meta.get("version", -1)) != VERSION:
        raise LoadError(f"unsupported test set version {meta.get('version')}")
    if lines[1].split(",") != _COLUMNS:
        raise LoadError("unexpected test set columns")
    cases = []
    for row in lines[2:]:
        parts = row.split(",")
        if len(parts) != len(_COLUMNS):
            raise LoadError(f"malformed test set record: {row!r}")
        vals = [float(v) for v in parts[1:9]]
        cases.append(TestCase(int(parts[0]), UnitQuaternion.from_array(vals[:4]),
                              UnitQuaternion.from_array(vals[4:]), int(parts[9]), parts[10] == "1"))
    testset = TestSet(tuple(cases), int(meta["seed"]))
    if int(meta.get("cases", -1)) != len(cases):
        raise LoadError("case count in header does not match the records")
    if check:
        validate(testset)
    return testset


def load(path: str | Path, check: bool = True) -> TestSet:
    return loads(Path(path).read_text(), check=check)
