# How high can throughput go on 8 devices / 2 channels at lambda_n = 0.3
# if devices take fixed roles? Per channel one "primary" always transmits
# when it has a packet and one "secondary" transmits unless it just collided
# there. The other four devices never transmit (they starve).

import numpy as np

from marl_access.env import EnvConfig, RandomAccessEnv
from marl_access.metrics import fairness_summary

N, M, K = 8, 2, 20_000
rng = np.random.default_rng(0)
env = RandomAccessEnv(EnvConfig(N, M, horizon=K))
env.reset(0)

roles = {0: ("primary", 1), 1: ("primary", 2), 2: ("secondary", 1), 3: ("secondary", 2)}
total = 0.0
for k in range(K):
    env.arrive((rng.random(N) < 0.3).astype(int))
    actions = np.zeros(N, dtype=int)
    for n, (role, ch) in roles.items():
        if not env.buffers[n]:
            continue
        h = env.observe(n)
        collided = h.past_actions[-1] == ch and h.past_feedback[-1][ch - 1] == 0
        actions[n] = 0 if role == "secondary" and collided else ch
    total += env.step(actions).reward

print(f"throughput {total / (M * K):.3f}")
print("successes per device:", env.success_counts.tolist())
print("starved devices:", fairness_summary(env.success_counts, np.zeros(N))["starved"])
