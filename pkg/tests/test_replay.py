import math

import numpy as np
import pytest

from rotchain.env import GOAL_DIM, OBS_DIM, compute_reward
from rotchain.errors import EmptyBufferError, InvalidInputError
from rotchain.learner.replay import Episode, ReplayBuffer, sample_relabeled_batch, store_episode
from rotchain.rotations import qcanonical, qfrom_axis_angle


def synthetic_episode(rng, T, episode_id):
    """Achieved goals walk about z in small steps so that some relabels succeed."""
    angles = np.cumsum(rng.normal(0, 0.08, T + 1))
    ag = qcanonical(qfrom_axis_angle(2, angles))
    obs = np.concatenate([ag, rng.normal(size=(T + 1, OBS_DIM - GOAL_DIM))], axis=1)
    goal = qcanonical(qfrom_axis_angle(2, rng.uniform(-math.pi, math.pi)))
    goals = np.repeat(goal[None], T, axis=0)
    rewards = compute_reward(ag[1:], goals)
    return Episode(obs, ag, rng.uniform(-1, 1, (T, 3)), goals, rewards, episode_id)


@pytest.fixture(scope="module")
def filled():
    rng = np.random.default_rng(0)
    T = 20
    buf = ReplayBuffer(capacity=1000 * T, episode_length=T)
    episodes = [synthetic_episode(rng, T, i) for i in range(1000)]
    for ep in episodes:
        buf.store_episode(ep)
    return buf, {ep.episode_id: ep for ep in episodes}


def test_relabeling_oracle(filled):
    buf, episodes = filled
    rng = np.random.default_rng(1)
    batch = buf.sample_relabeled_batch(20_000, 4, 0.1, rng)
    for i in range(len(batch)):
        ep = episodes[int(batch.episode_id[i])]
        t = int(batch.step_index[i])
        np.testing.assert_array_equal(batch.observation[i], ep.observations[t])
        if batch.relabeled[i]:
            j = int(batch.goal_index[i])
            assert t < j <= len(ep)
            np.testing.assert_array_equal(batch.desired_goal[i], ep.achieved_goals[j])
        else:
            np.testing.assert_array_equal(batch.desired_goal[i], ep.desired_goals[t])
    recomputed = compute_reward(batch.next_achieved_goal, batch.desired_goal, 0.1)
    assert np.array_equal(recomputed, batch.reward)
    p = 4 / 5
    se = math.sqrt(p * (1 - p) / len(batch))
    assert abs(batch.relabeled.mean() - p) < 3 * se


def test_her_k_zero_never_relabels(filled):
    buf, _ = filled
    batch = buf.sample_relabeled_batch(500, 0, 0.1, np.random.default_rng(2))
    assert not batch.relabeled.any()
    assert np.all(batch.goal_index == -1)


def test_sampling_does_not_modify_storage(filled):
    buf, episodes = filled
    before = buf.episode(5).desired_goals.copy()
    buf.sample_relabeled_batch(5000, 4, 0.1, np.random.default_rng(3))
    np.testing.assert_array_equal(buf.episode(5).desired_goals, before)


def test_empty_and_invalid():
    buf = ReplayBuffer(capacity=100, episode_length=10)
    with pytest.raises(EmptyBufferError):
        buf.sample_relabeled_batch(4, 4, 0.1, np.random.default_rng(0))
    store_episode(buf, synthetic_episode(np.random.default_rng(0), 10, 0))
    with pytest.raises(InvalidInputError):
        sample_relabeled_batch(buf, 4, -1, 0.1, np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        ReplayBuffer(capacity=5, episode_length=10)


def test_shape_validation():
    buf = ReplayBuffer(capacity=100, episode_length=10)
    ep = synthetic_episode(np.random.default_rng(0), 9, 0)
    with pytest.raises(InvalidInputError):
        buf.store_episode(ep)


def test_ring_buffer_drops_oldest():
    rng = np.random.default_rng(4)
    buf = ReplayBuffer(capacity=30, episode_length=10)
    for i in range(5):
        buf.store_episode(synthetic_episode(rng, 10, i))
    assert buf.episode_ids() == [2, 3, 4]
    assert buf.size == 30
    with pytest.raises(KeyError):
        buf.episode(0)


def test_transitions_view():
    ep = synthetic_episode(np.random.default_rng(5), 6, 3)
    tr = ep.transitions()
    assert len(tr) == 6
    assert tr[2].step_index == 2 and tr[2].episode_id == 3
    np.testing.assert_array_equal(tr[2].next_observation, ep.observations[3])
