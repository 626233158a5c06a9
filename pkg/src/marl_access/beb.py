"""Binary exponential backoff baseline.

Each device runs an independent state machine. On a collision the contention
window doubles (up to ``cw_max``) and a fresh backoff counter is drawn
uniformly from ``[0, CW - 1]``; on a success the window resets to ``cw0``.
Devices only learn the outcome of their own attempts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUCCESS = "success"
COLLISION = "collision"


@dataclass
class BackoffState:
    cw0: int = 2
    cw_max: int = 1024
    factor: int = 2
    collisions: int = 0
    window: int = 2
    counter: int = 0

    def __post_init__(self):
        if self.cw0 < 1 or self.cw_max < self.cw0:
            raise ValueError("need 1 <= cw0 <= cw_max")
        self.window = min(max(self.window, self.cw0), self.cw_max)


def beb_act(state: BackoffState, buffer: int, num_channels: int, rng: np.random.Generator) -> int:
    """Choose an action, decrementing the backoff counter while waiting."""
    if not buffer:
        return 0
    if state.counter > 0:
        state.counter -= 1
        return 0
    return int(rng.integers(1, num_channels + 1))


def beb_update(state: BackoffState, outcome: str, rng: np.random.Generator) -> BackoffState:
    if outcome == COLLISION:
        state.collisions += 1
        state.window = int(min(state.cw0 * state.factor**state.collisions, state.cw_max))
        state.counter = int(rng.integers(0, state.window))
    elif outcome == SUCCESS:
        state.collisions = 0
        state.window = state.cw0
        state.counter = 0
    else:
        raise ValueError(f"unknown outcome {outcome!r}")
    return state


class BebPolicy:
    """Vectorised wrapper running one :class:`BackoffState` per device."""

    def __init__(self, num_devices: int, num_channels: int, cw0: int = 2, cw_max: int = 1024, factor: int = 2):
        self.num_channels = num_channels
        self.states = [BackoffState(cw0=cw0, cw_max=cw_max, factor=factor) for _ in range(num_devices)]

    def act(self, buffers, rng: np.random.Generator) -> np.ndarray:
        return np.array([beb_act(s, b, self.num_channels, rng) for s, b in zip(self.states, buffers)], dtype=np.int64)

    def observe(self, actions, success, rng: np.random.Generator) -> None:
        """Feed back each transmitter's own outcome from the success matrix."""
        won = np.asarray(success).sum(axis=1)
        for n in np.flatnonzero(np.asarray(actions) > 0):
            beb_update(self.states[n], SUCCESS if won[n] else COLLISION, rng)


class AlohaPolicy:
    """Slotted ALOHA reference: transmit with a fixed probability when buffered."""

    def __init__(self, num_channels: int, transmit_prob: float):
        if not 0.0 <= transmit_prob <= 1.0:
            raise ValueError("transmit_prob must lie in [0, 1]")
        self.num_channels, self.transmit_prob = num_channels, transmit_prob

    def act(self, buffers, rng: np.random.Generator) -> np.ndarray:
        buffers = np.asarray(buffers)
        go = rng.random(buffers.size) < self.transmit_prob
        channels = rng.integers(1, self.num_channels + 1, size=buffers.size)
        return np.where((buffers > 0) & go, channels, 0).astype(np.int64)

    def observe(self, actions, success, rng) -> None:
        pass
