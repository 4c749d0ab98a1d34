"""Rotation algebra: unit quaternions, the goal metric and Davenport chains.

Quaternions are stored scalar-first, ``[w, x, y, z]``. Every composition is
read in the fixed world frame: ``quat_mul(a, b)`` is the rotation ``b``
followed by the rotation ``a``. Chains are extrinsic, so a triple
``(alpha, beta, gamma)`` on chain ``a1-a2-a3`` means "rotate by ``alpha``
about world ``a1``, then ``beta`` about world ``a2``, then ``gamma`` about
world ``a3``".

The module has two layers. Vectorised helpers prefixed with ``q`` operate on
``(..., 4)`` arrays and are what the simulator and the evaluation harness
use in their inner loops. The typed API (:class:`UnitQuaternion`,
:func:`decompose`, :func:`plan`, ...) wraps them for single values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

SUCCESS_TOLERANCE = 0.1
DEGENERATE_EPS = 1e-9
_SIGN_EPS = 1e-12


# ---------------------------------------------------------------------------
# Vectorised array helpers
# ---------------------------------------------------------------------------

def wrap_angle(angle):
    """Wrap angles to the half-open interval ``(-pi, pi]``."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a ⊗ b`` over the trailing axis (broadcasts)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def qconj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qcanonical(q: np.ndarray) -> np.ndarray:
    """Normalise and fix the double-cover sign.

    The result has ``w >= 0``; when ``w`` is zero (within 1e-12) the first
    nonzero vector component is made positive.
    """
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    # Already-unit inputs are left untouched so canonicalisation is idempotent
    # bit for bit (serialised poses reload exactly).
    q = np.where(np.abs(norm - 1.0) <= 1e-14, q, q / norm)
    sign = np.where(q[..., 0] < -_SIGN_EPS, -1.0, 1.0)
    near_zero = np.abs(q[..., 0]) <= _SIGN_EPS
    if np.any(near_zero):
        vec = q[..., 1:]
        nonzero = np.abs(vec) > _SIGN_EPS
        first = np.argmax(nonzero, axis=-1)
        lead = np.take_along_axis(vec, first[..., None], axis=-1)[..., 0]
        sign = np.where(near_zero & (lead < 0.0), -1.0, sign)
        sign = np.where(near_zero & (lead >= 0.0), 1.0, sign)
    return q * sign[..., None]


def qfrom_axis_angle(axis: int | np.ndarray, angle) -> np.ndarray:
    """Quaternion for a rotation about a world axis (``0, 1, 2`` = x, y, z).

    ``axis`` may be an integer array broadcast against ``angle``. The result
    is not canonicalised so that products of half-turns stay exact.
    """
    angle = np.asarray(angle, dtype=float)
    axis = np.asarray(axis)
    shape = np.broadcast_shapes(axis.shape, angle.shape)
    axis = np.broadcast_to(axis, shape)
    half = 0.5 * np.broadcast_to(angle, shape)
    out = np.zeros(shape + (4,))
    out[..., 0] = np.cos(half)
    np.put_along_axis(out, (axis + 1)[..., None], np.sin(half)[..., None], axis=-1)
    return out


def qfrom_rotvec(rotvec: np.ndarray) -> np.ndarray:
    """Quaternion from rotation vectors ``(..., 3)`` (axis times angle)."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1)
    half = 0.5 * angle
    small = angle < 1e-8
    # sin(angle/2)/angle, with its Taylor series near zero
    safe = np.where(small, 1.0, angle)
    scale = np.where(small, 0.5 - angle * angle / 48.0, np.sin(half) / safe)
    out = np.empty(rotvec.shape[:-1] + (4,))
    out[..., 0] = np.cos(half)
    out[..., 1:] = rotvec * scale[..., None]
    return out


def qto_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vectors ``(..., 3)`` with angle in ``[0, pi]`` (inverse of :func:`qfrom_rotvec`)."""
    q = np.asarray(q, dtype=float)
    q = q * np.where(q[..., :1] < 0, -1.0, 1.0)
    v = np.linalg.norm(q[..., 1:], axis=-1)
    angle = 2.0 * np.arctan2(v, q[..., 0])
    small = v < 1e-8
    # angle / sin(angle/2) -> 2 / w as v -> 0
    scale = np.where(small, 2.0 / np.maximum(q[..., 0], 1e-300), angle / np.where(small, 1.0, v))
    return q[..., 1:] * scale[..., None]


def qdistance(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Angular distance ``arccos(2<q1, q2>^2 - 1)`` in radians.

    Evaluated as ``2 * atan2(|v|, |s|)`` where ``(s, v)`` is the relative
    quaternion ``conj(q1) ⊗ q2``. ``s`` equals the inner product, so the two
    expressions agree exactly in real arithmetic; this form keeps full
    precision near 0 and pi, where the arccos loses about half the digits.
    """
    rel = qmul(qconj(q1), q2)
    s = np.abs(rel[..., 0])
    v = np.linalg.norm(rel[..., 1:], axis=-1)
    return 2.0 * np.arctan2(v, s)


def qdistance_arccos(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Literal ``arccos(2<q1, q2>^2 - 1)`` with the argument clamped."""
    inner = np.sum(np.asarray(q1, dtype=float) * np.asarray(q2, dtype=float), axis=-1)
    return np.arccos(np.clip(2.0 * inner * inner - 1.0, -1.0, 1.0))


def qto_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices ``(..., 3, 3)`` from quaternions."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def qdecompose(q: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Extrinsic proper-Davenport angles ``(..., 3)`` for chain ``axes``.

    ``axes`` is ``(i, j, i)`` with ``i != j``. Returns ``(alpha, beta, gamma)``
    with ``R = R_i(gamma) R_j(beta) R_i(alpha)``. Of the two solutions for a
    nondegenerate rotation the one with the smaller ``|alpha| + |gamma|`` is
    kept (``beta >= 0`` on ties). When ``beta`` is within 1e-9 of 0 or pi
    the free angle is folded into ``alpha`` and ``gamma`` is set to zero.
    """
    i, j, last = axes
    if last != i or i == j:
        raise InvalidInputError(f"not a proper Davenport chain: {axes}")
    k = 3 - i - j
    eps = (i - j) * (j - k) * (k - i) / 2.0
    q = np.asarray(q, dtype=float)
    a = q[..., 0]
    b = q[..., 1 + i]
    c = q[..., 1 + j]
    d = q[..., 1 + k] * eps

    beta = 2.0 * np.arctan2(np.hypot(c, d), np.hypot(a, b))
    half_sum = np.arctan2(b, a)
    half_diff = np.arctan2(d, c)
    alpha = wrap_angle(half_sum - half_diff)
    gamma = wrap_angle(half_sum + half_diff)

    alt_alpha = wrap_angle(alpha + np.pi)
    alt_gamma = wrap_angle(gamma + np.pi)
    use_alt = np.abs(alt_alpha) + np.abs(alt_gamma) < np.abs(alpha) + np.abs(gamma) - _SIGN_EPS
    alpha = np.where(use_alt, alt_alpha, alpha)
    gamma = np.where(use_alt, alt_gamma, gamma)
    beta = np.where(use_alt, -beta, beta)

    flat = np.abs(beta) < DEGENERATE_EPS
    flipped = np.abs(np.pi - np.abs(beta)) < DEGENERATE_EPS
    alpha = np.where(flat, wrap_angle(2.0 * half_sum), alpha)
    alpha = np.where(flipped, wrap_angle(-2.0 * half_diff), alpha)
    gamma = np.where(flat | flipped, 0.0, gamma)
    beta = np.where(flat, 0.0, beta)
    beta = np.where(flipped, np.pi, beta)
    return np.stack([alpha, beta, gamma], axis=-1)


def qcompose(angles: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`qdecompose` (not canonicalised)."""
    angles = np.asarray(angles, dtype=float)
    r1 = qfrom_axis_angle(axes[0], angles[..., 0])
    r2 = qfrom_axis_angle(axes[1], angles[..., 1])
    r3 = qfrom_axis_angle(axes[2], angles[..., 2])
    return qmul(r3, qmul(r2, r1))


def random_quaternions(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Uniformly distributed rotations (normalised 4D Gaussians)."""
    shape = (4,) if n is None else (n, 4)
    return qcanonical(rng.standard_normal(shape))


def random_flat_quaternions(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Resting poses: the cube's own z face up, random spin about world z."""
    count = 1 if n is None else n
    out = qcanonical(qfrom_axis_angle(2, rng.uniform(-np.pi, np.pi, size=count)))
    return out[0] if n is None else out


def face_alignment(q: np.ndarray) -> np.ndarray:
    """Angle between world z and the closest cube face normal (radians)."""
    # columns of R are the body axes in world coordinates
    m = qto_matrix(q)
    vertical = np.abs(m[..., 2, :])
    horizontal = np.hypot(m[..., 0, :], m[..., 1, :])
    return np.min(np.arctan2(horizontal, vertical), axis=-1)


# ---------------------------------------------------------------------------
# Typed API
# ---------------------------------------------------------------------------

class Axis(enum.IntEnum):
    X = 0
    Y = 1
    Z = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: "str | int | Axis") -> "Axis":
        if isinstance(value, Axis):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise InvalidInputError(f"unknown axis {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True, init=False)
class UnitQuaternion:
    """A rotation as a canonical unit quaternion (``w >= 0``).

    The constructor normalises its arguments and fixes the double-cover sign,
    so ``UnitQuaternion(-1, 0, 0, 0) == UnitQuaternion.identity()``.
    """

    w: float
    x: float
    y: float
    z: float

    def __init__(self, w: float, x: float, y: float, z: float):
        raw = np.array([w, x, y, z], dtype=float)
        if not np.all(np.isfinite(raw)):
            raise InvalidInputError(f"non-finite quaternion {raw}")
        if np.linalg.norm(raw) < 1e-12:
            raise InvalidInputError("zero quaternion has no rotation")
        canon = qcanonical(raw)
        for name, value in zip("wxyz", canon):
            object.__setattr__(self, name, float(value))

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "UnitQuaternion":
        w, x, y, z = (float(v) for v in values)
        return cls(w, x, y, z)

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @property
    def array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def inverse(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def as_matrix(self) -> np.ndarray:
        return qto_matrix(self.array)

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        return quat_mul(self, other)

    def __iter__(self):
        return iter((self.w, self.x, self.y, self.z))


@dataclass(frozen=True)
class Chain:
    """An ordered triple of world axes whose middle axis differs from both ends."""

    axes: tuple[Axis, Axis, Axis]

    def __post_init__(self):
        axes = tuple(Axis.parse(a) for a in self.axes)
        if len(axes) != 3:
            raise InvalidInputError("a chain needs exactly three axes")
        if axes[1] in (axes[0], axes[2]):
            raise InvalidInputError(f"middle axis must differ from the outer axes: {axes}")
        if axes[0] != axes[2]:
            # Tait-Bryan chains are not supported
            raise InvalidInputError(f"outer axes must match: {axes}")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def parse(cls, text: str) -> "Chain":
        parts = [p for p in text.replace("-", " ").split() if p]
        if len(parts) == 1 and len(parts[0]) == 3:
            parts = list(parts[0])
        return cls(tuple(Axis.parse(p) for p in parts))

    @property
    def label(self) -> str:
        return "-".join(a.label for a in self.axes)

    @property
    def indices(self) -> tuple[int, int, int]:
        return tuple(int(a) for a in self.axes)

    def __str__(self) -> str:
        return self.label


ZXZ = Chain((Axis.Z, Axis.X, Axis.Z))
ZYZ = Chain((Axis.Z, Axis.Y, Axis.Z))
ALL_CHAINS = tuple(
    Chain.parse(c) for c in ("z-x-z", "x-y-x", "y-z-y", "z-y-z", "x-z-x", "y-x-y")
)
EVALUATED_CHAINS = (ZXZ, ZYZ)


@dataclass(frozen=True)
class DavenportTriple:
    chain: Chain
    angles: tuple[float, float, float]

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        if len(angles) != 3 or not all(math.isfinite(a) for a in angles):
            raise InvalidInputError(f"bad Davenport angles {self.angles}")
        object.__setattr__(self, "angles", angles)

    @property
    def alpha(self) -> float:
        return self.angles[0]

    @property
    def beta(self) -> float:
        return self.angles[1]

    @property
    def gamma(self) -> float:
        return self.angles[2]


@dataclass(frozen=True)
class PlanStep:
    """One primitive rotation of a plan.

    ``source`` is the chain position (0, 1, 2) the step came from and
    ``parts`` the number of pieces that position was split into.
    """

    axis: Axis
    angle: float
    subgoal: UnitQuaternion
    source: int = 0
    parts: int = 1


@dataclass(frozen=True)
class DavenportPlan:
    initial: UnitQuaternion
    goal: UnitQuaternion
    chain: Chain
    steps: tuple[PlanStep, ...]

    @property
    def final(self) -> UnitQuaternion:
        return self.steps[-1].subgoal if self.steps else self.initial


def quat_mul(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion:
    """Rotation ``b`` followed by rotation ``a`` (world frame)."""
    return UnitQuaternion.from_array(qmul(a.array, b.array))


def quat_inverse(q: UnitQuaternion) -> UnitQuaternion:
    return q.inverse()


def quat_from_axis_angle(axis: Axis | str | int, angle: float) -> UnitQuaternion:
    if not math.isfinite(angle):
        raise InvalidInputError(f"angle must be finite, got {angle}")
    return UnitQuaternion.from_array(qfrom_axis_angle(int(Axis.parse(axis)), angle))


def quat_distance(q1: UnitQuaternion, q2: UnitQuaternion) -> float:
    """Angle in ``[0, pi]`` of the rotation taking ``q1`` to ``q2``."""
    return float(qdistance(q1.array, q2.array))


def is_success(achieved: UnitQuaternion, desired: UnitQuaternion,
               tol: float = SUCCESS_TOLERANCE) -> bool:
    """True iff the orientations are strictly closer than ``tol`` radians."""
    if not tol > 0:
        raise InvalidInputError(f"tolerance must be positive, got {tol}")
    return quat_distance(achieved, desired) < tol


def decompose(relative: UnitQuaternion, chain: Chain) -> DavenportTriple:
    """Split a rotation into three extrinsic rotations about ``chain``.

    The result satisfies ``R = R_a3(gamma) R_a2(beta) R_a1(alpha)``.
    """
    angles = qdecompose(relative.array, chain.indices)
    return DavenportTriple(chain, tuple(float(a) for a in angles))


def compose(triple: DavenportTriple) -> UnitQuaternion:
    return UnitQuaternion.from_array(qcompose(np.array(triple.angles), triple.chain.indices))


def split_large(angle: float) -> list[float]:
    """Split a rotation larger than a quarter turn into ``±pi/2`` plus a remainder.

    >>> split_large(0.3)
    [0.3]
    """
    if not math.isfinite(angle) or abs(angle) > math.pi:
        raise InvalidInputError(f"angle must lie in [-pi, pi], got {angle}")
    if abs(angle) <= math.pi / 2:
        return [angle]
    first = math.copysign(math.pi / 2, angle)
    return [first, angle - first]


def plan(initial: UnitQuaternion, goal: UnitQuaternion, chain: Chain,
         split: bool = True) -> DavenportPlan:
    """Chain of primitive subgoals taking ``initial`` to ``goal``.

    Zero-angle steps are kept, so an unsplit plan always has three steps.
    """
    relative = quat_mul(goal, initial.inverse())
    triple = decompose(relative, chain)
    steps = []
    current = initial.array
    for source, (axis, angle) in enumerate(zip(chain.axes, triple.angles)):
        angle = wrap_angle(angle)
        pieces = split_large(angle) if split else [angle]
        for piece in pieces:
            current = qcanonical(qmul(qfrom_axis_angle(int(axis), piece), current))
            steps.append(PlanStep(axis, piece, UnitQuaternion.from_array(current),
                                  source=source, parts=len(pieces)))
    return DavenportPlan(initial, goal, chain, tuple(steps))


def drop_trivial_steps(plan_: DavenportPlan, tol: float = SUCCESS_TOLERANCE) -> list[PlanStep]:
    """Steps whose rotation is at least ``tol`` (for reporting only)."""
    return [s for s in plan_.steps if abs(s.angle) >= tol]


def count_required_rotations(initial: UnitQuaternion, goal: UnitQuaternion,
                             tol: float = SUCCESS_TOLERANCE) -> int:
    """Fewest non-negligible rotations over the z-x-z and z-y-z chains."""
    return int(count_required_rotations_array(initial.array, goal.array, tol))


def count_required_rotations_array(initial: np.ndarray, goal: np.ndarray,
                                   tol: float = SUCCESS_TOLERANCE) -> np.ndarray:
    relative = qmul(goal, qconj(initial))
    counts = []
    for chain in EVALUATED_CHAINS:
        angles = wrap_angle(qdecompose(relative, chain.indices))
        counts.append(np.sum(np.abs(angles) >= tol, axis=-1))
    return np.minimum(*counts)
