import math

import numpy as np
import pytest

from rotchain.env import (
    ACTION_DIM,
    OBS_DIM,
    PARALLEL_ANGLES,
    CubeRotationEnv,
    EnvBatch,
    EnvConfig,
    GoalSpec,
    TaskKind,
    compute_reward,
    export_trajectory,
    reset,
    reset_to,
    sample_goal,
    sample_rotation,
    step,
)
from rotchain.errors import EpisodeExhaustedError, InvalidInputError
from rotchain.rotations import (
    ZXZ,
    ZYZ,
    UnitQuaternion,
    face_alignment,
    qdecompose,
    qdistance,
    quat_from_axis_angle,
    quat_mul,
)

QUIET = EnvConfig(control_noise=0.0, tilt_drift=0.0)


class TestConfig:
    def test_defaults(self):
        cfg = EnvConfig()
        assert cfg.episode_length == 100
        assert cfg.dt == 0.05
        assert cfg.gain == (1.0, 1.0, 2.0)
        assert cfg.tolerance == 0.1

    def test_text_round_trip(self, tmp_path):
        cfg = EnvConfig(gain=(1.5, 1.0, 3.0), tilt_drift=0.2, seed=9)
        path = tmp_path / "env.cfg"
        cfg.save(path)
        assert EnvConfig.load(path) == cfg

    def test_comments_and_errors(self):
        cfg = EnvConfig.from_text("# plant\ndamping = 0.7  # per second\n")
        assert cfg.damping == 0.7
        with pytest.raises(InvalidInputError):
            EnvConfig.from_text("nonsense = 1\n")
        with pytest.raises(InvalidInputError):
            EnvConfig.from_text("dt 0.1\n")
        with pytest.raises(InvalidInputError):
            EnvConfig(episode_length=0)
        with pytest.raises(InvalidInputError):
            EnvConfig(gain=(1.0, -1.0, 1.0))


class TestTasks:
    def test_five_tasks_and_aliases(self):
        assert len(TaskKind) == 5
        assert TaskKind.parse("RotateXYZ") is TaskKind.ROTATE_XYZ
        assert TaskKind.parse("rotate_z") is TaskKind.ROTATE_Z
        with pytest.raises(InvalidInputError):
            TaskKind.parse("rotate-w")

    def test_single_axis_goals(self):
        rng = np.random.default_rng(0)
        z = sample_rotation(TaskKind.ROTATE_Z, rng, 500)
        angles = qdecompose(z, ZXZ.indices)
        np.testing.assert_allclose(angles[:, 1:], 0.0, atol=1e-12)
        x = sample_rotation(TaskKind.ROTATE_X, rng, 500)
        np.testing.assert_allclose(x[:, 2:], 0.0, atol=0)
        y = sample_rotation(TaskKind.ROTATE_Y, rng, 500)
        np.testing.assert_allclose(y[:, [1, 3]], 0.0, atol=0)

    def test_parallel_goal_tilts_are_quantised(self):
        rng = np.random.default_rng(1)
        q = sample_rotation(TaskKind.ROTATE_PARALLEL, rng, 2000)
        for chain in (ZXZ, ZYZ):
            beta = np.abs(qdecompose(q, chain.indices)[:, 1])
            gap = np.min(np.abs(beta[:, None] - np.abs(np.array(PARALLEL_ANGLES))), axis=1)
            assert np.max(gap) < 1e-9

    def test_xyz_goals_are_uniform(self):
        # Oracle: rejection sampling from the 4-ball, independent of the Gaussian construction.
        rng = np.random.default_rng(2)
        q = sample_rotation(TaskKind.ROTATE_XYZ, rng, 10_000)
        d = qdistance(np.array([1.0, 0, 0, 0]), q)
        ref_rng = np.random.default_rng(3)
        cand = ref_rng.uniform(-1, 1, size=(40_000, 4))
        cand = cand[np.linalg.norm(cand, axis=1) <= 1][:10_000]
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        ref = qdistance(np.array([1.0, 0, 0, 0]), cand)
        se = math.sqrt(d.var() / len(d) + ref.var() / len(ref))
        assert abs(d.mean() - ref.mean()) < 3 * se
        # closed form of the mean angle of a uniform rotation: pi/2 + 2/pi
        assert abs(d.mean() - (math.pi / 2 + 2 / math.pi)) < 3 * d.std() / math.sqrt(len(d))

    def test_sample_goal_on_top_of_initial(self):
        rng = np.random.default_rng(4)
        init = quat_from_axis_angle("z", 0.3)
        goal = sample_goal(TaskKind.ROTATE_Z, rng, init)
        rel = quat_mul(goal.desired, init.inverse())
        assert abs(qdecompose(rel.array, ZXZ.indices)[1]) < 1e-12


class TestReset:
    def test_deterministic(self):
        a = reset(TaskKind.ROTATE_X, EnvConfig(), seed=5)
        b = reset(TaskKind.ROTATE_X, EnvConfig(), seed=5)
        assert a[1] == b[1] and a[2] == b[2]
        np.testing.assert_array_equal(a[0].noise, b[0].noise)
        assert a[0].step_count == 0

    def test_primitive_tasks_start_flat(self):
        for task in (TaskKind.ROTATE_Z, TaskKind.ROTATE_X, TaskKind.ROTATE_Y):
            for seed in range(50):
                state, obs, _ = reset(task, EnvConfig(), seed)
                assert face_alignment(state.orientation) < 1e-9
                assert obs.previous_action == (0.0, 0.0, 0.0)
                assert obs.angular_velocity == (0.0, 0.0, 0.0)

    def test_observation_layout(self):
        state, obs, _ = reset(TaskKind.ROTATE_XYZ, EnvConfig(), 0)
        assert obs.array.shape == (OBS_DIM,)


class TestStep:
    def test_zero_action_fixed_point(self):
        init = UnitQuaternion.from_array([0.5, 0.5, 0.5, 0.5])
        state = reset_to(init, QUIET, 0)
        goal = GoalSpec(UnitQuaternion.identity())
        for _ in range(20):
            state, _, _, _ = step(state, np.zeros(ACTION_DIM), goal, QUIET)
        np.testing.assert_array_equal(state.orientation, init.array)

    def test_pure_spin_stays_flat(self):
        state = reset_to(quat_from_axis_angle("z", 0.4), QUIET, 0)
        goal = GoalSpec(UnitQuaternion.identity())
        for _ in range(100):
            state, _, _, _ = step(state, [0.0, 0.0, 1.0], goal, QUIET)
            angles = qdecompose(state.orientation, ZXZ.indices)
            assert angles[1] == 0.0

    def test_constant_action_closed_form(self):
        # omega_k = g a dt sum_{i<k} (1 - lambda dt)^i ; angle = dt sum omega_k (until omega_max binds)
        cfg = QUIET.replace(omega_max=100.0)
        state = reset_to(UnitQuaternion.identity(), cfg, 0)
        goal = GoalSpec(UnitQuaternion.identity())
        decay = 1 - cfg.damping * cfg.dt
        omega, angle = 0.0, 0.0
        for _ in range(30):
            state, _, _, _ = step(state, [0.5, 0.0, 0.0], goal, cfg)
            omega = decay * omega + cfg.dt * cfg.gain[0] * 0.5
            angle += omega * cfg.dt
        assert state.angular_velocity[0] == pytest.approx(omega, rel=1e-12)
        assert qdistance(state.orientation, quat_from_axis_angle("x", angle).array) < 1e-12

    def test_actions_clipped_and_omega_bounded(self):
        state = reset_to(UnitQuaternion.identity(), EnvConfig(), 1)
        goal = GoalSpec(UnitQuaternion.identity())
        for _ in range(100):
            state, obs, _, _ = step(state, [10.0, -10.0, 10.0], goal, EnvConfig())
            assert np.all(np.abs(state.angular_velocity) <= EnvConfig().omega_max)
        assert obs.previous_action == (1.0, -1.0, 1.0)

    def test_reward_matches_compute_reward(self):
        cfg = EnvConfig()
        state, _, goal = reset(TaskKind.ROTATE_Z, cfg, 3)
        rng = np.random.default_rng(0)
        for _ in range(100):
            state, obs, reward, info = step(state, rng.uniform(-1, 1, 3), goal, cfg)
            assert reward == compute_reward(obs.orientation, goal.desired, cfg.tolerance)
            assert info["is_success"] == (reward == 0.0)

    def test_near_goal_reward(self):
        goal = GoalSpec(quat_from_axis_angle("z", 0.05))
        state = reset_to(UnitQuaternion.identity(), QUIET, 0)
        _, _, reward, info = step(state, np.zeros(3), goal, QUIET)
        assert reward == 0.0 and info["is_success"]

    def test_episode_exhaustion(self):
        cfg = EnvConfig(episode_length=3)
        state, _, goal = reset(TaskKind.ROTATE_Z, cfg, 0)
        for _ in range(3):
            state, *_ = step(state, np.zeros(3), goal, cfg)
        with pytest.raises(EpisodeExhaustedError):
            step(state, np.zeros(3), goal, cfg)

    def test_unit_norm_over_long_runs(self):
        cfg = EnvConfig(episode_length=10_000)
        batch = EnvBatch.reset(TaskKind.ROTATE_XYZ, cfg, [0, 1, 2])
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            batch.step(rng.uniform(-1, 1, (3, 3)))
        np.testing.assert_allclose(np.linalg.norm(batch.orientation, axis=1), 1.0, atol=1e-9)

    def test_tilt_drift_only_when_tilted(self):
        cfg = EnvConfig(control_noise=0.0, tilt_drift=1.0)
        flat = reset_to(quat_from_axis_angle("z", 1.0), cfg, 0)
        after, *_ = step(flat, np.zeros(3), GoalSpec(UnitQuaternion.identity()), cfg)
        np.testing.assert_array_equal(after.angular_velocity, 0.0)
        tilted = reset_to(quat_from_axis_angle("x", 0.6), cfg, 0)
        after, *_ = step(tilted, np.zeros(3), GoalSpec(UnitQuaternion.identity()), cfg)
        assert np.linalg.norm(after.angular_velocity) > 0


class TestBatch:
    def test_batch_equals_sequential(self):
        cfg = EnvConfig()
        seeds = [11, 12, 13, 14]
        batch = EnvBatch.reset(TaskKind.ROTATE_XYZ, cfg, seeds)
        singles = [reset(TaskKind.ROTATE_XYZ, cfg, s) for s in seeds]
        rng = np.random.default_rng(0)
        for _ in range(cfg.episode_length):
            actions = rng.uniform(-1, 1, (4, 3))
            batch.step(actions)
            singles = [step(st, a, g, cfg)[:1] + (o, g) for (st, o, g), a in zip(singles, actions)]
        for i, (st, _, g) in enumerate(singles):
            np.testing.assert_array_equal(batch.orientation[i], st.orientation)
            np.testing.assert_array_equal(batch.goal[i], g.desired.array)

    def test_masked_rows_wait(self):
        cfg = EnvConfig()
        batch = EnvBatch.reset(TaskKind.ROTATE_Z, cfg, [1, 2])
        before = batch.orientation.copy()
        batch.step(np.ones((2, 3)), mask=np.array([True, False]))
        np.testing.assert_array_equal(batch.orientation[1], before[1])
        assert list(batch.row_steps) == [1, 0]

    def test_start_at_matches_reset_to(self):
        cfg = EnvConfig()
        init = UnitQuaternion.from_array([0.9, 0.1, 0.3, 0.2])
        batch = EnvBatch.start_at(init.array[None], init.array[None], cfg, [42])
        np.testing.assert_array_equal(batch.noise[0], reset_to(init, cfg, 42).noise)


def test_z_easier_than_x_for_fixed_controller():
    # A proportional controller with identical gains: the larger z gain makes z goals easier.
    cfg = EnvConfig()

    def run(task):
        batch = EnvBatch.reset(task, cfg, range(500))
        for _ in range(cfg.episode_length):
            obs = batch.observations()
            err = np.stack([_rotvec_error(o[:4], g) for o, g in zip(obs, batch.goal)])
            _, _, success, _ = batch.step(np.clip(1.0 * err - 1.0 * obs[:, 4:7], -1, 1))
        return success.mean()

    z, x = run(TaskKind.ROTATE_Z), run(TaskKind.ROTATE_X)
    se = math.sqrt(z * (1 - z) / 500 + x * (1 - x) / 500)
    assert z - x > 2 * se


def _rotvec_error(q, g):
    from rotchain.rotations import qconj, qmul

    r = qmul(g, qconj(q))
    r = r if r[0] >= 0 else -r
    n = np.linalg.norm(r[1:])
    return np.zeros(3) if n < 1e-12 else r[1:] / n * 2 * math.atan2(n, r[0])


def test_cube_env_and_trajectory_export(tmp_path):
    env = CubeRotationEnv("rotate-z")
    with pytest.raises(InvalidInputError):
        env.step(np.zeros(3))
    obs, goal = env.reset(seed=0)
    records = []
    for t in range(5):
        obs, reward, info = env.step([0.0, 0.0, 0.5])
        records.append({"step": t, "quaternion": obs.orientation.array, "action": obs.previous_action,
                        "reward": reward})
    path = tmp_path / "traj.jsonl"
    export_trajectory(records, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 5 and '"quaternion"' in lines[0]
