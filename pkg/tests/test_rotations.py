import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from rotchain.errors import InvalidInputError
from rotchain.rotations import (
    ALL_CHAINS,
    ZXZ,
    ZYZ,
    Axis,
    Chain,
    DavenportTriple,
    UnitQuaternion,
    compose,
    count_required_rotations,
    decompose,
    face_alignment,
    is_success,
    plan,
    qcanonical,
    qcompose,
    qdecompose,
    qdistance,
    qdistance_arccos,
    qmul,
    qfrom_rotvec,
    qto_matrix,
    qto_rotvec,
    quat_distance,
    quat_from_axis_angle,
    quat_inverse,
    quat_mul,
    random_flat_quaternions,
    random_quaternions,
    split_large,
    wrap_angle,
)


def to_scipy(q):
    q = np.asarray(q)
    return Rotation.from_quat(np.concatenate([q[..., 1:], q[..., :1]], axis=-1))


unit_quats = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: UnitQuaternion(*v))
angles = st.floats(-math.pi, math.pi, allow_nan=False)
chains = st.sampled_from(ALL_CHAINS)


class TestQuaternionBasics:
    def test_canonical_sign(self):
        q = UnitQuaternion(-1.0, 0.0, 0.0, 0.0)
        assert q == UnitQuaternion.identity()
        assert UnitQuaternion(0.0, -1.0, 0.0, 0.0).x == 1.0

    def test_zero_and_nan_rejected(self):
        with pytest.raises(InvalidInputError):
            UnitQuaternion(0, 0, 0, 0)
        with pytest.raises(InvalidInputError):
            UnitQuaternion(float("nan"), 0, 0, 1)

    def test_axis_angle_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            quat_from_axis_angle("z", float("nan"))

    def test_matrix_matches_scipy(self):
        rng = np.random.default_rng(0)
        q = random_quaternions(rng, 200)
        np.testing.assert_allclose(qto_matrix(q), to_scipy(q).as_matrix(), atol=1e-12)

    def test_composition_order_is_world_frame(self):
        # Rx(pi/2) after Rz(pi/2): the matrix product R_x @ R_z
        a = quat_from_axis_angle(Axis.X, math.pi / 2)
        b = quat_from_axis_angle(Axis.Z, math.pi / 2)
        np.testing.assert_allclose(quat_mul(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)

    @given(unit_quats)
    def test_inverse(self, q):
        assert quat_distance(quat_mul(q, quat_inverse(q)), UnitQuaternion.identity()) < 1e-7

    @given(unit_quats)
    def test_canonicalisation_idempotent(self, q):
        again = qcanonical(q.array)
        assert np.array_equal(again, q.array)

    def test_wrap_angle_range(self):
        values = wrap_angle(np.array([-math.pi, math.pi, 3 * math.pi, -3 * math.pi + 1e-3, 0.0]))
        assert np.all(values > -math.pi) and np.all(values <= math.pi)
        assert values[0] == pytest.approx(math.pi)


class TestDistance:
    def test_known_values(self):
        ident = UnitQuaternion.identity()
        assert quat_distance(ident, quat_from_axis_angle("z", 0.1)) == pytest.approx(0.1, abs=1e-15)
        assert quat_distance(ident, quat_from_axis_angle("x", math.pi)) == pytest.approx(math.pi)
        assert quat_distance(ident, ident) == 0.0

    def test_double_cover_invariance(self):
        rng = np.random.default_rng(1)
        q1, q2 = random_quaternions(rng, 100), random_quaternions(rng, 100)
        np.testing.assert_array_equal(qdistance(q1, q2), qdistance(q1, -q2))

    def test_matches_scipy_relative_angle(self):
        rng = np.random.default_rng(2)
        q1, q2 = random_quaternions(rng, 1000), random_quaternions(rng, 1000)
        oracle = (to_scipy(q1).inv() * to_scipy(q2)).magnitude()
        np.testing.assert_allclose(qdistance(q1, q2), oracle, atol=1e-9)

    def test_agrees_with_arccos_form_away_from_ends(self):
        rng = np.random.default_rng(3)
        q1, q2 = random_quaternions(rng, 1000), random_quaternions(rng, 1000)
        d = qdistance(q1, q2)
        keep = (d > 1e-3) & (d < math.pi - 1e-3)
        np.testing.assert_allclose(d[keep], qdistance_arccos(q1, q2)[keep], atol=1e-9)

    @given(unit_quats, unit_quats)
    def test_metric_symmetry_and_range(self, a, b):
        d = quat_distance(a, b)
        assert 0.0 <= d <= math.pi + 1e-12
        assert d == pytest.approx(quat_distance(b, a), abs=1e-12)

    @given(unit_quats, unit_quats, unit_quats)
    @settings(max_examples=50)
    def test_triangle_inequality(self, a, b, c):
        assert quat_distance(a, c) <= quat_distance(a, b) + quat_distance(b, c) + 1e-9


class TestRotationVector:
    def test_matches_scipy(self):
        q = random_quaternions(np.random.default_rng(11), 1000)
        np.testing.assert_allclose(qto_rotvec(q), to_scipy(q).as_rotvec(), atol=1e-12)
        np.testing.assert_array_equal(qto_rotvec(q), qto_rotvec(-q))

    def test_inverse_of_qfrom_rotvec_including_tiny_angles(self):
        rng = np.random.default_rng(12)
        rv = rng.normal(size=(200, 3))
        rv *= (rng.uniform(0, math.pi, 200) / np.linalg.norm(rv, axis=1))[:, None]
        rv[:5] *= 1e-10
        np.testing.assert_allclose(qto_rotvec(qfrom_rotvec(rv)), rv, rtol=1e-9, atol=1e-15)


class TestSuccess:
    def test_strict_boundary(self):
        ident = UnitQuaternion.identity()
        assert is_success(ident, quat_from_axis_angle("z", 0.1 - 1e-6))
        assert not is_success(ident, quat_from_axis_angle("z", 0.1))

    def test_tolerance_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            is_success(UnitQuaternion.identity(), UnitQuaternion.identity(), tol=0.0)


class TestDecomposition:
    def test_single_axis_examples(self):
        assert decompose(quat_from_axis_angle("z", 0.7), ZXZ).angles == pytest.approx((0.7, 0, 0), abs=1e-12)
        assert decompose(quat_from_axis_angle("x", 1.1), ZXZ).angles == pytest.approx((0, 1.1, 0), abs=1e-12)
        assert decompose(quat_from_axis_angle("x", -1.1), ZXZ).angles == pytest.approx((0, -1.1, 0), abs=1e-12)
        assert decompose(UnitQuaternion.identity(), ZYZ).angles == (0.0, 0.0, 0.0)

    def test_two_rotation_example(self):
        q = quat_mul(quat_from_axis_angle("x", 1.0), quat_from_axis_angle("z", 1.0))
        assert decompose(q, ZXZ).angles == pytest.approx((1.0, 1.0, 0.0), abs=1e-12)
        assert count_required_rotations(UnitQuaternion.identity(), q) == 2

    def test_round_trip_all_chains(self):
        rng = np.random.default_rng(4)
        q = random_quaternions(rng, 10_000)
        for chain in ALL_CHAINS:
            back = qcompose(qdecompose(q, chain.indices), chain.indices)
            assert np.max(qdistance(q, back)) < 1e-9

    def test_matches_scipy_extrinsic_euler(self):
        rng = np.random.default_rng(5)
        q = random_quaternions(rng, 500)
        for chain in ALL_CHAINS:
            seq = "".join(a.label for a in chain.axes)
            angles = qdecompose(q, chain.indices)
            mats = Rotation.from_euler(seq, angles).as_matrix()
            np.testing.assert_allclose(mats, qto_matrix(q), atol=1e-9)

    def test_middle_angle_range(self):
        rng = np.random.default_rng(6)
        angles = qdecompose(random_quaternions(rng, 2000), ZXZ.indices)
        assert np.all(np.abs(angles) <= math.pi + 1e-12)

    def test_solution_minimises_outer_angles(self):
        rng = np.random.default_rng(7)
        a = qdecompose(random_quaternions(rng, 2000), ZYZ.indices)
        alt = np.abs(wrap_angle(a[:, 0] + math.pi)) + np.abs(wrap_angle(a[:, 2] + math.pi))
        assert np.all(np.abs(a[:, 0]) + np.abs(a[:, 2]) <= alt + 1e-12)

    @pytest.mark.parametrize("beta", [0.0, math.pi])
    def test_gimbal_degeneracy_folds_into_alpha(self, beta):
        q = qcompose(np.array([0.4, beta, 0.3]), ZXZ.indices)
        angles = qdecompose(q, ZXZ.indices)
        assert angles[2] == 0.0
        assert abs(angles[1]) == pytest.approx(beta)
        assert qdistance(qcompose(angles, ZXZ.indices), q) < 1e-12

    @given(chains, angles, angles, angles)
    def test_round_trip_property(self, chain, a, b, c):
        q = compose(DavenportTriple(chain, (a, b, c)))
        back = compose(decompose(q, chain))
        assert quat_distance(q, back) < 1e-9

    def test_invalid_chains(self):
        with pytest.raises(InvalidInputError):
            Chain.parse("z-z-x")
        with pytest.raises(InvalidInputError):
            Chain.parse("x-y-z")
        with pytest.raises(InvalidInputError):
            qdecompose(np.array([1.0, 0, 0, 0]), (0, 1, 2))

    def test_chain_parsing(self):
        assert Chain.parse("zxz") == ZXZ
        assert Chain.parse("Z-Y-Z") == ZYZ
        assert ZXZ.label == "z-x-z"


class TestPlan:
    def test_identity_plan(self):
        ident = UnitQuaternion.identity()
        p = plan(ident, ident, ZXZ)
        assert len(p.steps) == 3
        assert all(s.angle == 0.0 for s in p.steps)
        assert quat_distance(p.final, ident) == 0.0

    def test_endpoint_is_goal(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            a = UnitQuaternion.from_array(random_quaternions(rng))
            b = UnitQuaternion.from_array(random_quaternions(rng))
            for chain in (ZXZ, ZYZ):
                for split in (False, True):
                    p = plan(a, b, chain, split)
                    assert quat_distance(p.final, b) < 1e-9

    def test_split_only_changes_interior_subgoals(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            a = UnitQuaternion.from_array(random_quaternions(rng))
            b = UnitQuaternion.from_array(random_quaternions(rng))
            plain = plan(a, b, ZXZ, split=False)
            split = plan(a, b, ZXZ, split=True)
            # last piece of each chain position lands on the unsplit subgoal
            for k, step in enumerate(plain.steps):
                last = [s for s in split.steps if s.source == k][-1]
                assert quat_distance(last.subgoal, step.subgoal) < 1e-9
            assert all(abs(s.angle) <= math.pi / 2 + 1e-12 for s in split.steps)

    def test_subgoals_follow_extrinsic_order(self):
        ident = UnitQuaternion.identity()
        goal = quat_mul(quat_from_axis_angle("x", 1.0), quat_from_axis_angle("z", 1.0))
        p = plan(ident, goal, ZXZ, split=False)
        assert quat_distance(p.steps[0].subgoal, quat_from_axis_angle("z", 1.0)) < 1e-12
        assert [s.axis for s in p.steps] == [Axis.Z, Axis.X, Axis.Z]

    def test_split_large(self):
        assert split_large(0.3) == [0.3]
        assert split_large(-2.0) == pytest.approx([-math.pi / 2, -2.0 + math.pi / 2])
        assert split_large(math.pi / 2) == [math.pi / 2]
        with pytest.raises(InvalidInputError):
            split_large(4.0)

    def test_required_rotations_threshold(self):
        ident = UnitQuaternion.identity()
        assert count_required_rotations(ident, quat_from_axis_angle("z", 0.0999)) == 0
        assert count_required_rotations(ident, quat_from_axis_angle("z", 0.1)) == 1
        # a pure y rotation needs one step on z-y-z and three on z-x-z
        assert count_required_rotations(ident, quat_from_axis_angle("y", 1.0)) == 1


def test_flat_poses_have_face_up():
    rng = np.random.default_rng(10)
    q = random_flat_quaternions(rng, 500)
    assert np.max(face_alignment(q)) < 1e-9
    tilted = qmul(np.array([math.cos(0.25), math.sin(0.25), 0, 0]), q)
    np.testing.assert_allclose(face_alignment(tilted), 0.5, atol=1e-9)
