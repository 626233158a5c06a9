"""Value mixers for centralised training.

VDN adds the per-agent values. QMIX feeds them through a two-layer mixing
network whose weights are produced from the global state by hypernetworks
and passed through ``abs`` so that the joint value is monotone in every
agent's value.

Both mixers are used only while learning; execution reads each agent's own
Q-values.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .nn import TrainingError, check_finite, dense_backward, uniform_init


def vdn_mix(q_chosen) -> np.ndarray:
    """Sum over the last (agent) axis."""
    return np.sum(np.asarray(q_chosen, dtype=float), axis=-1)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


class QMixer:
    """Monotonic mixing network conditioned on the global state.

    Parameter names::

        hyper_w1.{w,b}   state -> N*E first-layer weights (abs applied)
        hyper_b1.{w,b}   state -> E first-layer bias
        hyper_w2.{w,b}   state -> E second-layer weights (abs applied)
        hyper_v1.{w,b}   state -> E, ReLU   } state-dependent output bias
        hyper_v2.{w,b}   E -> 1             }
    """

    def __init__(self, num_agents: int, state_dim: int, embed: int = 32, params=None, rng=None, dtype=np.float64):
        self.num_agents, self.state_dim, self.embed = num_agents, state_dim, embed
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = self.initial_params(rng, dtype)
        self.params = OrderedDict(params)

    def initial_params(self, rng, dtype=np.float64):
        n, s, e = self.num_agents, self.state_dim, self.embed
        p = OrderedDict()
        p["hyper_w1.w"] = uniform_init(rng, s, (s, n * e), dtype)
        p["hyper_w1.b"] = uniform_init(rng, s, (n * e,), dtype)
        p["hyper_b1.w"] = uniform_init(rng, s, (s, e), dtype)
        p["hyper_b1.b"] = uniform_init(rng, s, (e,), dtype)
        p["hyper_w2.w"] = uniform_init(rng, s, (s, e), dtype)
        p["hyper_w2.b"] = uniform_init(rng, s, (e,), dtype)
        p["hyper_v1.w"] = uniform_init(rng, s, (s, e), dtype)
        p["hyper_v1.b"] = uniform_init(rng, s, (e,), dtype)
        p["hyper_v2.w"] = uniform_init(rng, e, (e, 1), dtype)
        p["hyper_v2.b"] = uniform_init(rng, e, (1,), dtype)
        return p

    def copy(self) -> "QMixer":
        return QMixer(
            self.num_agents,
            self.state_dim,
            self.embed,
            OrderedDict((k, v.copy()) for k, v in self.params.items()),
        )

    def load_from(self, other: "QMixer") -> None:
        for k, v in other.params.items():
            self.params[k][...] = v

    def forward(self, q, state):
        """``q`` (B, N), ``state`` (B, S) -> (Q_tot (B,), cache)."""
        p = self.params
        q = np.asarray(q, dtype=float)
        state = np.asarray(state, dtype=float)
        b, n, e = q.shape[0], self.num_agents, self.embed
        raw_w1 = state @ p["hyper_w1.w"] + p["hyper_w1.b"]
        w1 = np.abs(raw_w1).reshape(b, n, e)
        b1 = state @ p["hyper_b1.w"] + p["hyper_b1.b"]
        pre = np.einsum("bn,bne->be", q, w1) + b1
        hid = elu(pre)
        raw_w2 = state @ p["hyper_w2.w"] + p["hyper_w2.b"]
        w2 = np.abs(raw_w2)
        v_pre = state @ p["hyper_v1.w"] + p["hyper_v1.b"]
        v_hid = np.maximum(v_pre, 0.0)
        v = (v_hid @ p["hyper_v2.w"] + p["hyper_v2.b"])[:, 0]
        q_tot = np.sum(hid * w2, axis=1) + v
        cache = dict(q=q, state=state, raw_w1=raw_w1, w1=w1, pre=pre, hid=hid, raw_w2=raw_w2, w2=w2,
                     v_pre=v_pre, v_hid=v_hid)
        return q_tot, cache

    def backward(self, cache, d_qtot):
        """Return (parameter gradients, dL/dq of shape (B, N))."""
        p = self.params
        d_qtot = np.asarray(d_qtot, dtype=float)
        state = cache["state"]
        b, n, e = cache["q"].shape[0], self.num_agents, self.embed
        grads = OrderedDict()

        d_w2 = d_qtot[:, None] * cache["hid"]
        d_raw_w2 = d_w2 * np.sign(cache["raw_w2"])
        _, grads["hyper_w2.w"], grads["hyper_w2.b"] = dense_backward(state, p["hyper_w2.w"], d_raw_w2)

        d_hid = d_qtot[:, None] * cache["w2"]
        d_pre = d_hid * elu_grad(cache["pre"])
        _, grads["hyper_b1.w"], grads["hyper_b1.b"] = dense_backward(state, p["hyper_b1.w"], d_pre)
        d_w1 = cache["q"][:, :, None] * d_pre[:, None, :]
        d_raw_w1 = (d_w1 * np.sign(cache["raw_w1"].reshape(b, n, e))).reshape(b, n * e)
        _, grads["hyper_w1.w"], grads["hyper_w1.b"] = dense_backward(state, p["hyper_w1.w"], d_raw_w1)
        d_q = np.einsum("bne,be->bn", cache["w1"], d_pre)

        d_vhid, grads["hyper_v2.w"], grads["hyper_v2.b"] = dense_backward(
            cache["v_hid"], p["hyper_v2.w"], d_qtot[:, None]
        )
        d_vpre = d_vhid * (cache["v_pre"] > 0)
        _, grads["hyper_v1.w"], grads["hyper_v1.b"] = dense_backward(state, p["hyper_v1.w"], d_vpre)
        return OrderedDict((k, grads[k]) for k in p), d_q


def qmix_mix(q, state, mixer: QMixer) -> np.ndarray:
    return mixer.forward(np.atleast_2d(q), np.atleast_2d(state))[0]


# -- batches and the joint TD loss ----------------------------------------


@dataclass
class Batch:
    """A minibatch of ``B`` sequences of ``T`` global transitions.

    ``obs`` holds ``T + 1`` steps so that step ``t + 1`` is the successor of
    step ``t``.
    """

    obs: np.ndarray  # (T+1, B, N, D)
    actions: np.ndarray  # (T, B, N) int
    rewards: np.ndarray  # (T, B)
    dones: np.ndarray  # (T, B) 1.0 on the last slot of an episode
    buffer_col: int  # column of the buffer bit inside an observation

    @property
    def shape(self):
        t, b, n, d = self.obs.shape
        return t - 1, b, n, d


def masked_max(q, buffer_bits):
    """Greedy value per agent where empty-buffer agents may only stay silent."""
    return np.where(buffer_bits > 0, q.max(axis=-1), q[..., 0])


def masked_argmax(q, buffer_bits):
    return np.where(buffer_bits > 0, q.argmax(axis=-1), 0)


def _agent_values(batch: Batch, net, target_net):
    t, b, n, d = batch.shape
    q_all, cache = net.forward_sequence(batch.obs[:t].reshape(t, b * n, d))
    q_all = q_all.reshape(t, b, n, -1)
    q_chosen = np.take_along_axis(q_all, batch.actions[..., None], axis=-1)[..., 0]
    q_next, _ = target_net.forward_sequence(batch.obs.reshape(t + 1, b * n, d))
    q_next = q_next[1:].reshape(t, b, n, -1)
    next_max = masked_max(q_next, batch.obs[1:, :, :, batch.buffer_col])
    return q_all, q_chosen, cache, next_max


def _scatter(dq_chosen, actions, num_actions):
    dq = np.zeros(actions.shape + (num_actions,))
    np.put_along_axis(dq, actions[..., None], dq_chosen[..., None], axis=-1)
    return dq


def joint_td_loss(batch: Batch, net, target_net, gamma: float, mixer=None, target_mixer=None):
    """Squared TD error of the mixed joint value.

    With ``mixer=None`` the VDN sum is used. The target is
    ``r + gamma * mix(per-agent greedy target values, next state)`` with no
    bootstrap past the last slot of an episode.

    Returns:
        ``(loss, net_grads, mixer_grads)``; ``mixer_grads`` is ``None`` for VDN.
    """
    t, b, n, d = batch.shape
    q_all, q_chosen, cache, next_max = _agent_values(batch, net, target_net)
    not_done = 1.0 - batch.dones
    if mixer is None:
        q_tot = q_chosen.sum(axis=-1)
        target = batch.rewards + gamma * not_done * next_max.sum(axis=-1)
    else:
        state = batch.obs.reshape(t + 1, b, n * d)
        q_tot, mix_cache = mixer.forward(q_chosen.reshape(t * b, n), state[:t].reshape(t * b, -1))
        next_tot, _ = target_mixer.forward(next_max.reshape(t * b, n), state[1:].reshape(t * b, -1))
        q_tot = q_tot.reshape(t, b)
        target = batch.rewards + gamma * not_done * next_tot.reshape(t, b)
    err = target - q_tot
    loss = float(np.sum(err * err))
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite joint TD loss ({loss})")
    d_qtot = -2.0 * err
    mixer_grads = None
    if mixer is None:
        d_chosen = np.broadcast_to(d_qtot[..., None], q_chosen.shape)
    else:
        mixer_grads, d_chosen = mixer.backward(mix_cache, d_qtot.reshape(t * b))
        d_chosen = d_chosen.reshape(t, b, n)
        check_finite(mixer_grads)
    dq = _scatter(d_chosen, batch.actions, q_all.shape[-1])
    grads = net.backward(cache, dq.reshape(t, b * n, -1))
    check_finite(grads)
    return loss, grads, mixer_grads


def independent_td_loss(batch: Batch, net, target_net, gamma: float):
    """Per-agent DQN loss with the shared team reward (no mixer)."""
    t, b, n, d = batch.shape
    q_all, q_chosen, cache, next_max = _agent_values(batch, net, target_net)
    target = batch.rewards[..., None] + gamma * (1.0 - batch.dones)[..., None] * next_max
    err = target - q_chosen
    loss = float(np.sum(err * err))
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite TD loss ({loss})")
    dq = _scatter(-2.0 * err, batch.actions, q_all.shape[-1])
    grads = net.backward(cache, dq.reshape(t, b * n, -1))
    check_finite(grads)
    return loss, grads
