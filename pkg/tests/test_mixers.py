import numpy as np
import pytest

from gradcheck import REL_TOL, check_params, max_rel_error, numeric_grad
from marl_access.mixers import (
    Batch,
    QMixer,
    independent_td_loss,
    joint_td_loss,
    masked_argmax,
    masked_max,
    qmix_mix,
    vdn_mix,
)
from marl_access.nn import NetSpec, QNetwork


def test_vdn_examples():
    assert vdn_mix([1.0, 2.0, -0.5]) == pytest.approx(2.5)
    assert vdn_mix([0.0, 0.0]) == 0.0
    assert vdn_mix([1.7]) == 1.7


def test_vdn_factored_greedy_equals_joint_argmax():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.normal(size=(3, 3))  # 3 agents, 3 actions
        best = max(
            ((a, b, c) for a in range(3) for b in range(3) for c in range(3)),
            key=lambda acts: vdn_mix([q[i, acts[i]] for i in range(3)]),
        )
        assert tuple(q.argmax(axis=1)) == best


def test_qmix_zero_params_give_zero():
    mixer = QMixer(3, 5, embed=4, rng=np.random.default_rng(0))
    for v in mixer.params.values():
        v[...] = 0
    rng = np.random.default_rng(1)
    assert not qmix_mix(rng.normal(size=(10, 3)), rng.normal(size=(10, 5)), mixer).any()


def test_qmix_monotone_under_increase():
    rng = np.random.default_rng(2)
    mixer = QMixer(4, 6, embed=8, rng=rng)
    for _ in range(200):
        q = rng.normal(size=4) * 3
        s = rng.normal(size=6)
        base = qmix_mix(q, s, mixer)[0]
        a = rng.integers(4)
        q2 = q.copy()
        q2[a] += rng.uniform(0.01, 2.0)
        assert qmix_mix(q2, s, mixer)[0] >= base - 1e-12


def qmix_min_partial(probes: int = 1000) -> float:
    """Smallest central-difference dQ_tot/dQ_a over random mixers, states and Q."""
    rng = np.random.default_rng(3)
    eps = 1e-6
    worst = np.inf
    for _ in range(probes):
        n, s_dim = int(rng.integers(1, 6)), int(rng.integers(1, 8))
        mixer = QMixer(n, s_dim, embed=int(rng.integers(1, 9)), rng=rng)
        q = rng.normal(size=n) * 5
        s = rng.normal(size=s_dim)
        a = rng.integers(n)
        up, down = q.copy(), q.copy()
        up[a] += eps
        down[a] -= eps
        d = (qmix_mix(up, s, mixer)[0] - qmix_mix(down, s, mixer)[0]) / (2 * eps)
        worst = min(worst, d)
    return float(worst)


def test_qmix_finite_difference_partials_non_negative():
    assert qmix_min_partial() >= -1e-8


def qmix_gradient_error(configs: int = 100) -> float:
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(configs):
        n, s_dim, e, b = (int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 5)),
                          int(rng.integers(1, 4)))
        mixer = QMixer(n, s_dim, embed=e, rng=rng)
        q = rng.normal(size=(b, n))
        s = rng.normal(size=(b, s_dim))
        y = rng.normal(size=b)

        def loss():
            out, _ = mixer.forward(q, s)
            return float(np.sum((out - y) ** 2))

        out, cache = mixer.forward(q, s)
        grads, dq = mixer.backward(cache, 2 * (out - y))
        worst = max(worst, check_params(mixer.params, grads, loss))
        worst = max(worst, max_rel_error(dq, numeric_grad(q, loss)))
    return worst


def test_qmix_gradients_match_finite_differences():
    worst = qmix_gradient_error()
    assert worst < REL_TOL, worst


def test_masked_max_respects_empty_buffers():
    q = np.array([[0.0, 5.0, 1.0], [2.0, 9.0, 3.0]])
    assert masked_max(q, np.array([1, 0])).tolist() == [5.0, 2.0]
    assert masked_argmax(q, np.array([1, 0])).tolist() == [1, 0]


# -- joint TD loss --------------------------------------------------------------


def toy_batch(rng, t, b, n, d, actions, buffer_col=0):
    obs = rng.normal(size=(t + 1, b, n, d))
    obs[..., buffer_col] = (rng.random((t + 1, b, n)) < 0.7).astype(float)
    return Batch(
        obs=obs,
        actions=rng.integers(0, actions, size=(t, b, n)),
        rewards=rng.integers(0, 3, size=(t, b)).astype(float),
        dones=(rng.random((t, b)) < 0.2).astype(float),
        buffer_col=buffer_col,
    )


def toy_net(rng, d, a, recurrent=False):
    return QNetwork(NetSpec(d, a, recurrent, 5, 4), rng=rng)


def vdn_pipeline_error(recurrent: bool, configs: int = 100) -> float:
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(configs):
        d, a = 4, 3
        net, target = toy_net(rng, d, a, recurrent), toy_net(rng, d, a, recurrent)
        batch = toy_batch(rng, int(rng.integers(1, 3)), 2, 2, d, a)
        _, grads, _ = joint_td_loss(batch, net, target, 0.9)
        worst = max(worst, check_params(net.params, grads, lambda: joint_td_loss(batch, net, target, 0.9)[0]))
    return worst


@pytest.mark.parametrize("recurrent", [False, True])
def test_vdn_pipeline_gradient_matches_finite_differences(recurrent):
    worst = vdn_pipeline_error(recurrent)
    assert worst < REL_TOL, worst


def qmix_pipeline_error(configs: int = 100) -> float:
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(configs):
        d, a, n = 3, 3, 2
        net, target = toy_net(rng, d, a), toy_net(rng, d, a)
        mixer = QMixer(n, n * d, embed=3, rng=rng)
        tmix = QMixer(n, n * d, embed=3, rng=rng)
        batch = toy_batch(rng, 1, 2, n, d, a)

        def loss():
            return joint_td_loss(batch, net, target, 0.9, mixer, tmix)[0]

        _, grads, mgrads = joint_td_loss(batch, net, target, 0.9, mixer, tmix)
        worst = max(worst, check_params(net.params, grads, loss))
        worst = max(worst, check_params(mixer.params, mgrads, loss))
    return worst


def test_qmix_pipeline_gradient_matches_finite_differences():
    worst = qmix_pipeline_error()
    assert worst < REL_TOL, worst


def test_vdn_single_agent_equals_dqn_loss():
    rng = np.random.default_rng(7)
    for recurrent in (False, True):
        net, target = toy_net(rng, 4, 3, recurrent), toy_net(rng, 4, 3, recurrent)
        batch = toy_batch(rng, 3, 4, 1, 4, 3)
        l_vdn, g_vdn, _ = joint_td_loss(batch, net, target, 0.95)
        l_dqn, g_dqn = independent_td_loss(batch, net, target, 0.95)
        assert l_vdn == pytest.approx(l_dqn, rel=1e-12)
        for k in g_vdn:
            assert np.allclose(g_vdn[k], g_dqn[k], rtol=1e-12, atol=1e-14)


def test_vdn_loss_against_hand_computation():
    rng = np.random.default_rng(8)
    net, target = toy_net(rng, 4, 3), toy_net(rng, 4, 3)
    batch = toy_batch(rng, 1, 3, 2, 4, 3)
    loss, _, _ = joint_td_loss(batch, net, target, 0.9)
    expected = 0.0
    for i in range(3):
        q_tot = 0.0
        next_sum = 0.0
        for n in range(2):
            q, _ = net.forward(batch.obs[0, i, n][None])
            q_tot += q[0, batch.actions[0, i, n]]
            qn, _ = target.forward(batch.obs[1, i, n][None])
            next_sum += qn[0].max() if batch.obs[1, i, n, 0] > 0 else qn[0, 0]
        y = batch.rewards[0, i] + 0.9 * (1 - batch.dones[0, i]) * next_sum
        expected += (y - q_tot) ** 2
    assert loss == pytest.approx(expected, rel=1e-12)


def test_zero_loss_when_targets_met():
    rng = np.random.default_rng(9)
    net = toy_net(rng, 4, 3)
    batch = toy_batch(rng, 1, 2, 2, 4, 3)
    batch.dones[:] = 1.0
    q, _ = net.forward_sequence(batch.obs[:1].reshape(1, 4, 4))
    chosen = np.take_along_axis(q.reshape(1, 2, 2, 3), batch.actions[..., None], -1)[..., 0]
    batch.rewards = chosen.sum(-1)
    loss, grads, _ = joint_td_loss(batch, net, net.copy(), 0.9)
    assert loss == pytest.approx(0.0, abs=1e-20)
    assert all(np.max(np.abs(g)) < 1e-12 for g in grads.values())


def test_parameter_sharing_identical_histories_identical_q():
    rng = np.random.default_rng(10)
    net = toy_net(rng, 4, 3)
    x = rng.normal(size=4)
    q, _ = net.forward(np.stack([x, x, rng.normal(size=4)]))
    assert np.array_equal(q[0], q[1])
