# Throughput alone hides who waits. Age of Packets (AoP) counts, per slot,
# how long the packet currently in a device's buffer has been waiting.

import numpy as np

from marl_access.metrics import average_aop, fairness_summary, throughput

# One device, K=10 slots, a packet sits in the buffer during slots 2..4.
buffer = np.array([[0, 1, 1, 1, 0, 0, 0, 0, 0, 0]]).T
print("AoP of the single device:", average_aop(buffer))  # (1+2+3)/10

# Three devices each deliver one packet in K=10 slots with the same mean delay
# (4 slots), but one schedule is balanced and the other is not.
def occupancy(delays, starts, k=10):
    trace = np.zeros((k, len(delays)), dtype=int)
    for n, (d, s) in enumerate(zip(delays, starts)):
        trace[s:s + d, n] = 1
    return trace

balanced = occupancy([4, 4, 4], [0, 3, 6])
skewed = occupancy([3, 7, 2], [0, 3, 8])
for name, trace in (("balanced", balanced), ("skewed", skewed)):
    print(f"{name}: mean AoP {average_aop(trace).mean():.2f}")

# Same three successes on one channel over 10 slots either way.
success = np.zeros((10, 3, 1), dtype=int)
success[[3, 6, 9], [0, 1, 2], 0] = 1
print("throughput:", throughput(success, num_channels=1))

print(fairness_summary(np.array([5, 0, 7, 6]), np.array([2.0, 30.0, 1.5, 1.8])))
