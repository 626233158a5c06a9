# A walk through one slot of the multi-channel random access channel, then
# the two classical baselines (slotted ALOHA and binary exponential backoff)
# on the 8-device, 2-channel setting.

import numpy as np

from marl_access.config import TrainConfig
from marl_access.env import EnvConfig, RandomAccessEnv
from marl_access.trainer import run_baseline

# Three devices, two channels, every buffer full.
env = RandomAccessEnv(EnvConfig(num_devices=3, num_channels=2, horizon=10))
env.reset(0)
env.arrive(np.ones(3, dtype=int))

# Devices 0 and 1 pick channel 1, device 2 picks channel 2.
res = env.step([1, 1, 2])
print("feedback per channel:", res.feedback)      # [0 1]: collision on 1, success on 2
print("success matrix G:\n", res.success)
print("collision matrix C:\n", res.collision)
print("team reward:", res.rewards[0])

# What device 0 sees next slot: its last action, the feedback and its buffer bit.
print("encoded local history of device 0:", env.encoded_observations()[0])

# ALOHA at saturation: sweep the transmit probability, peak sits near 1/e per channel.
sat = TrainConfig(num_devices=50, num_channels=1, arrival_rate=1.0, eval_horizon=500)
for p in (0.01, 0.02, 0.04, 0.08):
    thr = run_baseline(sat, "aloha", episodes=4, transmit_prob=p).throughput
    print(f"ALOHA p={p:.2f}: throughput {thr:.3f}")
print(f"1/e = {1 / np.e:.3f}")

# BEB on the N=8, M=2, lambda_n=0.3 network (averaged over 20 seeds).
cfg = TrainConfig(num_devices=8, num_channels=2, arrival_rate=0.3, eval_horizon=500)
beb = [run_baseline(cfg, "beb", episodes=1, seed=s) for s in range(20)]
print(f"BEB throughput {np.mean([b.throughput for b in beb]):.3f}, AoP {np.mean([b.aop for b in beb]):.1f}")
