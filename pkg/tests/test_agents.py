import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marl_access.agents import (
    Learner,
    ReplayBuffer,
    TemperatureSchedule,
    boltzmann_probs,
    dqn_target,
    drqn_learn_step,
    select_action,
    select_actions,
)
from marl_access.mixers import Batch, independent_td_loss
from marl_access.nn import Adam, ConfigError, NetSpec, QNetwork


def test_boltzmann_two_actions():
    p = boltzmann_probs([1.0, 0.0], 1.0)
    assert p[0] == pytest.approx(math.e / (math.e + 1))
    assert p.round(3).tolist() == [0.731, 0.269]


def test_boltzmann_equal_q_uniform():
    for tau in (0.01, 1.0, 200.0):
        assert np.allclose(boltzmann_probs([0.0, 0.0, 0.0], tau), 1 / 3)


def test_boltzmann_greedy_limit():
    p = boltzmann_probs([0.3, 0.5, 0.1], 1e-4)
    assert p[1] == pytest.approx(1.0)
    # exact ties split the mass
    assert boltzmann_probs([2.0, 2.0, -1.0], 1e-4).round(6).tolist() == [0.5, 0.5, 0.0]


def test_boltzmann_rejects_bad_temperature():
    with pytest.raises(ValueError):
        boltzmann_probs([1.0], 0.0)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6),
    st.floats(1e-3, 1e3),
)
def test_boltzmann_is_a_distribution(q, tau):
    p = boltzmann_probs(q, tau)
    assert np.all(p >= 0) and np.all(np.isfinite(p))
    assert p.sum() == pytest.approx(1.0)


def test_empty_buffer_never_transmits():
    rng = np.random.default_rng(0)
    assert all(select_action([0.0, 50.0, 50.0], 0, 0.1, rng) == 0 for _ in range(50))
    acts = select_actions(np.tile([0.0, 50.0, 50.0], (4, 1)), [0, 1, 0, 1], 0.1, rng)
    assert acts[0] == acts[2] == 0 and acts[1] > 0 and acts[3] > 0


def test_select_actions_frequencies():
    rng = np.random.default_rng(3)
    k = 20000
    q = np.tile([1.0, 0.0], (k, 1))
    acts = select_actions(q, np.ones(k), 1.0, rng)
    p = math.e / (math.e + 1)
    assert abs(np.mean(acts == 0) - p) < 3 * math.sqrt(p * (1 - p) / k)


def test_dqn_target_examples():
    assert dqn_target(1.0, 0.9, [0.5, 2.0]) == pytest.approx(2.8)
    assert dqn_target(1.0, 0.0, [5.0]) == 1.0
    assert dqn_target(1.0, 0.9, [5.0], terminal=True) == 1.0
    with pytest.raises(ValueError):
        dqn_target(0.0, 1.0, [0.0])


def test_temperature_schedule_endpoints():
    s = TemperatureSchedule(200.0, 0.1, 59)
    assert s.tau == 200.0
    taus = [s.update() for _ in range(70)]
    assert taus[58] == pytest.approx(0.1)
    assert taus[-1] == pytest.approx(0.1)
    assert all(a >= b for a, b in zip(taus, taus[1:]))
    ratios = [b / a for a, b in zip(taus[:58], taus[1:59])]
    assert np.allclose(ratios, ratios[0])


def test_replay_fifo_eviction():
    rb = ReplayBuffer(3, 2, 4)
    for i in range(5):
        rb.add(np.full((2, 4), i), [i % 2, 0], float(i), np.full((2, 4), i + 1), False, 0)
    assert len(rb) == 3
    assert sorted(rb.rewards.tolist()) == [2.0, 3.0, 4.0]


def test_replay_sampling_uniform():
    rb = ReplayBuffer(10, 1, 1)
    for i in range(10):
        rb.add(np.zeros((1, 1)), [0], float(i), np.zeros((1, 1)), False, 0)
    rng = np.random.default_rng(0)
    counts = np.zeros(10)
    draws = 2000
    for _ in range(draws):
        np.add.at(counts, rb.sample(10, 1, rng)[:, 0], 1)
    expected = draws * 10 / 10
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 27.9  # 99.9th percentile of chi-square with 9 dof


def test_replay_sequences_stay_inside_one_episode():
    rb = ReplayBuffer(20, 1, 1)
    for i in range(20):
        rb.add(np.zeros((1, 1)), [0], 0.0, np.zeros((1, 1)), i % 5 == 4, i // 5)
    idx = rb.sample(200, 3, np.random.default_rng(1))
    eps = rb.episode[idx]
    assert np.all(eps == eps[:, :1])
    assert np.all(np.diff(idx, axis=1) == 1)


def test_replay_batch_appends_ids():
    rb = ReplayBuffer(4, 3, 2)
    rb.add(np.ones((3, 2)), [1, 0, 2], 1.0, np.zeros((3, 2)), True, 0)
    batch = rb.build_batch(np.array([[0]]), buffer_col=1, agent_ids=True)
    assert batch.obs.shape == (2, 1, 3, 5)
    assert batch.obs[0, 0, 2].tolist() == [1, 1, 0, 0, 1]
    assert batch.actions[0, 0].tolist() == [1, 0, 2]


def _fixed_batch(rng, n=2, d=6, a=3, b=16):
    obs = rng.integers(0, 2, size=(2, b, n, d)).astype(float)
    return Batch(
        obs=obs,
        actions=rng.integers(0, a, size=(1, b, n)),
        rewards=rng.integers(0, 3, size=(1, b)).astype(float),
        dones=np.ones((1, b)),
        buffer_col=d - 1,
    )


@pytest.mark.parametrize("algorithm", ["drqn", "vdn", "qmix"])
def test_learner_overfits_one_batch(algorithm):
    rng = np.random.default_rng(0)
    batch = _fixed_batch(rng)
    learner = Learner(NetSpec(6, 3, hidden1=16, hidden2=8), algorithm, 2, rng, lr=1e-2, dtype=np.float64)
    first = learner.loss_and_grads(batch)[0]
    for _ in range(300):
        learner.learn(batch)
    assert learner.loss_and_grads(batch)[0] < 0.05 * first


def test_learner_rejects_unknown_algorithm():
    with pytest.raises(ConfigError):
        Learner(NetSpec(4, 3), "ppo", 2, np.random.default_rng(0))


def test_target_refresh_copies_parameters():
    rng = np.random.default_rng(1)
    learner = Learner(NetSpec(6, 3, hidden1=8, hidden2=4), "qmix", 2, rng, lr=1e-2)
    learner.learn(_fixed_batch(rng))
    assert any(not np.array_equal(learner.net.params[k], learner.target.params[k]) for k in learner.net.params)
    learner.refresh_target()
    assert all(np.array_equal(learner.net.params[k], learner.target.params[k]) for k in learner.net.params)
    assert all(
        np.array_equal(learner.mixer.params[k], learner.target_mixer.params[k]) for k in learner.mixer.params
    )


def test_drqn_step_at_zero_loss_leaves_params():
    rng = np.random.default_rng(2)
    net = QNetwork(NetSpec(6, 3, hidden1=8, hidden2=4), rng=rng)
    batch = _fixed_batch(rng)
    q, _ = net.forward_sequence(batch.obs[:1].reshape(1, -1, 6))
    chosen = np.take_along_axis(q.reshape(1, 16, 2, 3), batch.actions[..., None], -1)[..., 0]
    # independent learners all share the team reward, so make it match each agent
    batch.actions[..., 1] = batch.actions[..., 0]
    batch.obs[:, :, 1] = batch.obs[:, :, 0]
    batch.rewards = chosen[..., 0]
    assert independent_td_loss(batch, net, net.copy(), 0.9)[0] == pytest.approx(0.0, abs=1e-20)
    before = {k: v.copy() for k, v in net.params.items()}
    drqn_learn_step(batch, net, net.copy(), Adam(net.params, lr=1e-2), 0.9)
    assert all(np.array_equal(before[k], net.params[k]) for k in before)
