"""Small numpy neural-network substrate for the per-device Q-network.

The network is ``dense(obs -> 256, ReLU)`` followed either by
``dense(256 -> 64, ReLU)`` or by a GRU cell with 64 hidden units, and a
linear head with one output per action. Gradients are written out by hand;
the recurrent path is trained with backpropagation through time.

Parameters live in an ordered ``dict`` of named arrays so that the optimizer,
the target-network copy and the checkpoint writer can treat them uniformly.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Shapes or settings that cannot work together."""


class TrainingError(RuntimeError):
    """Non-finite values appeared during learning."""


def uniform_init(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- dense ------------------------------------------------------------------


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(x, w, dy):
    """Return ``(dx, dw, db)`` for ``y = x @ w + b``."""
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# -- GRU --------------------------------------------------------------------


def gru_step(x_proj, h, wh, bh):
    """One GRU step given the precomputed input projection ``x @ Wx + bx``.

    Gate order inside the packed matrices is reset, update, candidate.
    Returns the new hidden state and what the backward pass needs.
    """
    hidden = h.shape[1]
    h_proj = h @ wh + bh
    r = sigmoid(x_proj[:, :hidden] + h_proj[:, :hidden])
    z = sigmoid(x_proj[:, hidden : 2 * hidden] + h_proj[:, hidden : 2 * hidden])
    hn = h_proj[:, 2 * hidden :]
    n = np.tanh(x_proj[:, 2 * hidden :] + r * hn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (h, r, z, n, hn)


def gru_step_backward(dh_new, cache, wh):
    """Backward through one GRU step.

    Returns the gradient w.r.t. the input projection (T-independent parts
    are accumulated by the caller), w.r.t. the hidden projection
    ``h @ Wh + bh``, and w.r.t. the previous hidden state.
    """
    h, r, z, n, hn = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    dn_pre = dn * (1.0 - n * n)
    dr = dn_pre * hn
    dr_pre = dr * r * (1.0 - r)
    dz_pre = dz * z * (1.0 - z)
    dx_proj = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
    dh_proj = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
    dh = dh + dh_proj @ wh.T
    return dx_proj, dh_proj, dh


# -- Q-network --------------------------------------------------------------


@dataclass(frozen=True)
class NetSpec:
    obs_dim: int
    num_actions: int
    recurrent: bool = False
    hidden1: int = 256
    hidden2: int = 64

    def to_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "num_actions": self.num_actions,
            "recurrent": self.recurrent,
            "hidden1": self.hidden1,
            "hidden2": self.hidden2,
        }


class QNetwork:
    """Shared per-device Q-network.

    Inputs are sequences shaped ``(T, B, obs_dim)``; the feed-forward variant
    treats every time step independently.
    """

    def __init__(self, spec: NetSpec, params: dict | None = None, rng=None, dtype=np.float64):
        self.spec = spec
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = self.initial_params(spec, rng, dtype)
        self.params = OrderedDict(params)
        self._check_shapes()

    @staticmethod
    def initial_params(spec: NetSpec, rng, dtype=np.float64) -> "OrderedDict[str, np.ndarray]":
        h1, h2, a = spec.hidden1, spec.hidden2, spec.num_actions
        p = OrderedDict()
        p["dense1.w"] = uniform_init(rng, spec.obs_dim, (spec.obs_dim, h1), dtype)
        p["dense1.b"] = uniform_init(rng, spec.obs_dim, (h1,), dtype)
        if spec.recurrent:
            p["gru.wx"] = uniform_init(rng, h2, (h1, 3 * h2), dtype)
            p["gru.wh"] = uniform_init(rng, h2, (h2, 3 * h2), dtype)
            p["gru.bx"] = uniform_init(rng, h2, (3 * h2,), dtype)
            p["gru.bh"] = uniform_init(rng, h2, (3 * h2,), dtype)
        else:
            p["dense2.w"] = uniform_init(rng, h1, (h1, h2), dtype)
            p["dense2.b"] = uniform_init(rng, h1, (h2,), dtype)
        p["head.w"] = uniform_init(rng, h2, (h2, a), dtype)
        p["head.b"] = uniform_init(rng, h2, (a,), dtype)
        return p

    def _check_shapes(self):
        expected = self.initial_params(self.spec, np.random.default_rng(0))
        if list(expected) != list(self.params):
            raise ConfigError(f"parameter names {list(self.params)} do not match {list(expected)}")
        for name, ref in expected.items():
            if self.params[name].shape != ref.shape:
                raise ConfigError(f"{name}: shape {self.params[name].shape}, expected {ref.shape}")

    @property
    def dtype(self):
        return self.params["dense1.w"].dtype

    def copy(self) -> "QNetwork":
        return QNetwork(self.spec, OrderedDict((k, v.copy()) for k, v in self.params.items()))

    def load_from(self, other: "QNetwork") -> None:
        for k, v in other.params.items():
            self.params[k][...] = v

    def initial_hidden(self, batch: int) -> np.ndarray | None:
        if not self.spec.recurrent:
            return None
        return np.zeros((batch, self.spec.hidden2), dtype=self.dtype)

    # forward ---------------------------------------------------------------

    def forward(self, obs, hidden=None):
        """Single step: ``obs`` (B, obs_dim) -> (Q-values (B, A), new hidden)."""
        q, cache = self.forward_sequence(np.asarray(obs)[None], hidden)
        return q[0], cache["h_last"]

    def forward_sequence(self, obs_seq, hidden=None):
        """Unroll over ``obs_seq`` of shape (T, B, obs_dim).

        Returns Q-values (T, B, A) and a cache for :meth:`backward`.
        """
        p = self.params
        obs_seq = np.asarray(obs_seq, dtype=self.dtype)
        if obs_seq.ndim != 3 or obs_seq.shape[2] != self.spec.obs_dim:
            raise ConfigError(f"expected (T, B, {self.spec.obs_dim}) observations, got {obs_seq.shape}")
        t, b, d = obs_seq.shape
        x = obs_seq.reshape(t * b, d)
        a1 = dense_forward(x, p["dense1.w"], p["dense1.b"])
        z1 = np.maximum(a1, 0.0)
        cache = {"x": x, "a1": a1, "z1": z1, "shape": (t, b)}
        if self.spec.recurrent:
            h = self.initial_hidden(b) if hidden is None else np.asarray(hidden, dtype=self.dtype)
            x_proj = dense_forward(z1, p["gru.wx"], p["gru.bx"]).reshape(t, b, -1)
            states, steps = [], []
            for i in range(t):
                h, step_cache = gru_step(x_proj[i], h, p["gru.wh"], p["gru.bh"])
                states.append(h)
                steps.append(step_cache)
            z2 = np.stack(states).reshape(t * b, -1)
            cache["steps"] = steps
            cache["h_last"] = h
        else:
            a2 = dense_forward(z1, p["dense2.w"], p["dense2.b"])
            z2 = np.maximum(a2, 0.0)
            cache["a2"] = a2
            cache["h_last"] = None
        cache["z2"] = z2
        q = dense_forward(z2, p["head.w"], p["head.b"])
        return q.reshape(t, b, -1), cache

    # backward --------------------------------------------------------------

    def backward(self, cache, dq) -> "OrderedDict[str, np.ndarray]":
        """Gradients of a scalar loss given ``dq = dL/dQ`` of shape (T, B, A).

        The initial hidden state is treated as a constant.
        """
        p = self.params
        t, b = cache["shape"]
        dq = np.asarray(dq, dtype=self.dtype).reshape(t * b, -1)
        grads = OrderedDict()
        dz2, grads["head.w"], grads["head.b"] = dense_backward(cache["z2"], p["head.w"], dq)
        if self.spec.recurrent:
            hidden = self.spec.hidden2
            dz2 = dz2.reshape(t, b, hidden)
            dx_proj = np.empty((t, b, 3 * hidden), dtype=self.dtype)
            dwh = np.zeros_like(p["gru.wh"])
            dbh = np.zeros_like(p["gru.bh"])
            dh = np.zeros((b, hidden), dtype=self.dtype)
            for i in reversed(range(t)):
                step = cache["steps"][i]
                dxp, dhp, dh = gru_step_backward(dz2[i] + dh, step, p["gru.wh"])
                dx_proj[i] = dxp
                dwh += step[0].T @ dhp
                dbh += dhp.sum(axis=0)
            dz1, grads["gru.wx"], grads["gru.bx"] = dense_backward(
                cache["z1"], p["gru.wx"], dx_proj.reshape(t * b, -1)
            )
            grads["gru.wh"], grads["gru.bh"] = dwh, dbh
        else:
            da2 = dz2 * (cache["a2"] > 0)
            dz1, grads["dense2.w"], grads["dense2.b"] = dense_backward(cache["z1"], p["dense2.w"], da2)
        da1 = dz1 * (cache["a1"] > 0)
        _, grads["dense1.w"], grads["dense1.b"] = dense_backward(cache["x"], p["dense1.w"], da1)
        return OrderedDict((k, grads[k]) for k in p)


def check_finite(grads: dict, what: str = "gradient") -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite {what} in {name}")


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict, max_norm: float | None) -> dict:
    if not max_norm:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return OrderedDict((k, g * scale) for k, g in grads.items())


class Adam:
    """Adaptive-moment first-order optimizer over a dict of named arrays."""

    def __init__(self, params: dict, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())
        self.v = OrderedDict((k, np.zeros_like(v)) for k, v in params.items())
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place."""
        if set(grads) - set(params):
            raise ConfigError(f"gradients for unknown parameters {sorted(set(grads) - set(params))}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if g.shape != params[k].shape:
                raise ConfigError(f"{k}: gradient shape {g.shape} != parameter shape {params[k].shape}")
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)

    def state_arrays(self, prefix: str = "adam") -> dict:
        out = OrderedDict()
        for k in self.m:
            out[f"{prefix}.m.{k}"] = self.m[k]
            out[f"{prefix}.v.{k}"] = self.v[k]
        return out
