"""Shared-parameter Q-agents: action selection, replay and learning steps."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import checkpoint
from .mixers import Batch, QMixer, independent_td_loss, joint_td_loss
from .nn import Adam, ConfigError, NetSpec, QNetwork, clip_by_global_norm

ALGORITHMS = ("drqn", "vdn", "qmix")


def boltzmann_probs(q, tau: float) -> np.ndarray:
    """Softmax of ``q / tau`` along the last axis, max-shifted for stability."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(q, dtype=float) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def select_action(q_values, buffer: int, tau: float, rng: np.random.Generator) -> int:
    if not buffer:
        return 0
    probs = boltzmann_probs(q_values, tau)
    return int(rng.choice(len(probs), p=probs))


def select_actions(q, buffers, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`select_action` for all devices of a slot.

    One uniform draw per device is consumed whether or not it holds a packet,
    so the random stream does not depend on buffer contents.
    """
    probs = boltzmann_probs(q, tau)
    u = rng.random(len(probs))
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    actions = (u[:, None] >= cdf).sum(axis=1)
    return np.where(np.asarray(buffers) > 0, actions, 0).astype(np.int64)


def dqn_target(reward: float, gamma: float, q_next, terminal: bool = False) -> float:
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if terminal:
        return float(reward)
    return float(reward + gamma * np.max(q_next))


class TemperatureSchedule:
    """Exponential decay of the Boltzmann temperature.

    The temperature moves from ``start`` to ``end`` in ``num_updates`` equal
    multiplicative steps and stays at ``end`` afterwards.
    """

    def __init__(self, start: float = 200.0, end: float = 0.1, num_updates: int = 59):
        if start <= 0 or end <= 0:
            raise ValueError("temperatures must be positive")
        self.start, self.end, self.num_updates = start, end, max(int(num_updates), 1)
        self.updates = 0

    @property
    def tau(self) -> float:
        frac = min(self.updates / self.num_updates, 1.0)
        return float(self.start * (self.end / self.start) ** frac)

    def update(self) -> float:
        self.updates += 1
        return self.tau


class ReplayBuffer:
    """FIFO store of global slot transitions.

    Observations are kept as ``uint8`` without agent IDs (IDs are appended
    when a batch is built). Entries are laid out in slot order so that a
    sequence of consecutive entries from one episode can be sampled for
    recurrent training.
    """

    def __init__(self, capacity: int, num_agents: int, raw_obs_dim: int):
        self.capacity = int(capacity)
        self.num_agents = num_agents
        self.obs = np.zeros((capacity, num_agents, raw_obs_dim), dtype=np.uint8)
        self.next_obs = np.zeros((capacity, num_agents, raw_obs_dim), dtype=np.uint8)
        self.actions = np.zeros((capacity, num_agents), dtype=np.int8)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=np.float32)
        self.episode = np.full(capacity, -1, dtype=np.int64)
        self.pos = 0
        self.size = 0

    def add(self, obs, actions, reward, next_obs, done, episode: int) -> None:
        i = self.pos
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = actions
        self.rewards[i] = reward
        self.dones[i] = float(done)
        self.episode[i] = episode
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self) -> int:
        return self.size

    def _valid_start(self, start, length):
        # oldest entry sits at self.pos once the ring has wrapped
        age = (start - (self.pos if self.size == self.capacity else 0)) % self.capacity
        if age + length > self.size:
            return False
        idx = (start + np.arange(length)) % self.capacity
        eps = self.episode[idx]
        return bool(np.all(eps == eps[0]))

    def sample(self, batch_size: int, seq_len: int, rng: np.random.Generator):
        """Uniformly sample ``batch_size`` runs of ``seq_len`` consecutive transitions.

        Returns index array of shape (batch_size, seq_len).
        """
        if self.size < seq_len:
            raise ValueError("not enough transitions stored")
        starts = []
        while len(starts) < batch_size:
            cand = int(rng.integers(self.size))
            if self.size == self.capacity:
                cand = (self.pos + cand) % self.capacity
            if seq_len == 1 or self._valid_start(cand, seq_len):
                starts.append(cand)
        starts = np.array(starts)
        return (starts[:, None] + np.arange(seq_len)[None, :]) % self.capacity

    def build_batch(self, idx, buffer_col: int, agent_ids: bool) -> Batch:
        """Assemble a :class:`Batch` from index array (B, T)."""
        idx = idx.T  # (T, B)
        t, b = idx.shape
        obs = np.concatenate([self.obs[idx], self.next_obs[idx[-1]][None]], axis=0).astype(np.float64)
        if agent_ids:
            n = self.num_agents
            ids = np.broadcast_to(np.eye(n), (t + 1, b, n, n))
            obs = np.concatenate([obs, ids], axis=-1)
        return Batch(
            obs=obs,
            actions=self.actions[idx].astype(np.int64),
            rewards=self.rewards[idx].astype(np.float64),
            dones=self.dones[idx].astype(np.float64),
            buffer_col=buffer_col,
        )


class Learner:
    """Online/target networks, optional mixer and optimizer for one algorithm."""

    def __init__(
        self,
        spec: NetSpec,
        algorithm: str,
        num_agents: int,
        rng: np.random.Generator,
        lr: float = 1e-4,
        gamma: float = 0.99,
        mixer_embed: int = 32,
        max_grad_norm: float | None = None,
        dtype=np.float64,
    ):
        if algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
        self.spec, self.algorithm, self.num_agents = spec, algorithm, num_agents
        self.gamma, self.max_grad_norm = gamma, max_grad_norm
        self.net = QNetwork(spec, rng=rng, dtype=dtype)
        self.target = self.net.copy()
        self.mixer = self.target_mixer = None
        if algorithm == "qmix":
            self.mixer = QMixer(num_agents, num_agents * spec.obs_dim, mixer_embed, rng=rng, dtype=dtype)
            self.target_mixer = self.mixer.copy()
        self.optimizer = Adam(self.trainable(), lr=lr)

    def trainable(self) -> "OrderedDict[str, np.ndarray]":
        params = checkpoint.namespaced("online", self.net.params)
        if self.mixer is not None:
            params.update(checkpoint.namespaced("mixer", self.mixer.params))
        return params

    def refresh_target(self) -> None:
        self.target.load_from(self.net)
        if self.mixer is not None:
            self.target_mixer.load_from(self.mixer)

    def loss_and_grads(self, batch: Batch):
        if self.algorithm == "drqn":
            loss, grads = independent_td_loss(batch, self.net, self.target, self.gamma)
            return loss, checkpoint.namespaced("online", grads)
        loss, grads, mixer_grads = joint_td_loss(
            batch, self.net, self.target, self.gamma, self.mixer, self.target_mixer
        )
        grads = checkpoint.namespaced("online", grads)
        if mixer_grads is not None:
            grads.update(checkpoint.namespaced("mixer", mixer_grads))
        return loss, grads

    def learn(self, batch: Batch) -> float:
        loss, grads = self.loss_and_grads(batch)
        grads = clip_by_global_norm(grads, self.max_grad_norm)
        self.optimizer.step(self.trainable(), grads)
        return loss

    # checkpoints -----------------------------------------------------------

    def blocks(self) -> "OrderedDict[str, np.ndarray]":
        out = checkpoint.namespaced("online", self.net.params)
        out.update(checkpoint.namespaced("target", self.target.params))
        if self.mixer is not None:
            out.update(checkpoint.namespaced("mixer", self.mixer.params))
            out.update(checkpoint.namespaced("target_mixer", self.target_mixer.params))
        return out

    def meta(self) -> dict:
        meta = {"net": self.spec.to_dict(), "algorithm": self.algorithm, "num_agents": self.num_agents}
        if self.mixer is not None:
            meta["mixer_embed"] = self.mixer.embed
        return meta


def drqn_learn_step(batch: Batch, net: QNetwork, target: QNetwork, optimizer: Adam, gamma: float) -> float:
    """One gradient step of the independent (mixer-free) learner."""
    loss, grads = independent_td_loss(batch, net, target, gamma)
    optimizer.step(net.params, grads)
    return loss


def load_policy(path) -> tuple[QNetwork, dict]:
    """Load the online network and metadata from a checkpoint file."""
    blocks, meta = checkpoint.load(path)
    spec = NetSpec(**meta["net"])
    return QNetwork(spec, checkpoint.extract("online", blocks)), meta

