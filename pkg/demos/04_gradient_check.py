# The Q-network and the QMIX mixer have hand-written backward passes.
# Central finite differences give an independent check.

import numpy as np

from marl_access.mixers import QMixer, qmix_mix
from marl_access.nn import NetSpec, QNetwork

rng = np.random.default_rng(0)
net = QNetwork(NetSpec(obs_dim=5, num_actions=3, recurrent=True, hidden1=6, hidden2=4), rng=rng)
obs = rng.normal(size=(3, 2, 5))       # (time, batch, features)
target = rng.normal(size=(3, 2, 3))


def loss():
    q, _ = net.forward_sequence(obs)
    return float(np.sum((q - target) ** 2))


q, cache = net.forward_sequence(obs)
grads = net.backward(cache, 2 * (q - target))

eps, worst = 1e-5, 0.0
for name, p in net.params.items():
    for idx in np.ndindex(p.shape):
        old = p[idx]
        p[idx] = old + eps
        up = loss()
        p[idx] = old - eps
        down = loss()
        p[idx] = old
        num = (up - down) / (2 * eps)
        worst = max(worst, abs(num - grads[name][idx]) / max(abs(num), abs(grads[name][idx]), 1e-5))
print(f"GRU network: worst relative error {worst:.2e}")

# QMIX is monotone in every agent value: raising one Q never lowers Q_tot.
mixer = QMixer(num_agents=4, state_dim=6, embed=8, rng=rng)
state, qs = rng.normal(size=6), rng.normal(size=4)
base = qmix_mix(qs, state, mixer)[0]
for a in range(4):
    bumped = qs.copy()
    bumped[a] += 1.0
    print(f"agent {a}: Q_tot {base:.4f} -> {qmix_mix(bumped, state, mixer)[0]:.4f}")
