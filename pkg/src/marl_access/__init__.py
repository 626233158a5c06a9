"""Grant-free random access with cooperative multi-agent reinforcement learning.

Subpackages map onto the pieces of the simulator:

- :mod:`~marl_access.env` -- slotted multi-channel environment
- :mod:`~marl_access.traffic` -- regular and correlated arrival models
- :mod:`~marl_access.beb` -- binary exponential backoff and ALOHA baselines
- :mod:`~marl_access.nn` -- numpy Q-network (dense + GRU) and Adam
- :mod:`~marl_access.agents` -- Boltzmann policy, replay, learners
- :mod:`~marl_access.mixers` -- VDN and QMIX value mixing
- :mod:`~marl_access.trainer` -- training loop and evaluation
- :mod:`~marl_access.metrics` -- throughput, Age of Packets, fairness
"""

__version__ = "0.1.0"
