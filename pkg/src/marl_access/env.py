"""Slot-synchronous multi-channel grant-free random-access environment.

Within slot ``k`` the order of events is:

1. ``arrive(bits)`` -- new packets fill empty buffers, the rest are dropped;
   the Age-of-Packets counters advance from the post-arrival buffer bits.
2. ``observe(n)`` -- each device reads its local history.
3. ``step(actions)`` -- broadcast feedback, success/collision matrices and
   the common reward are computed, successful buffers are cleared and every
   history is shifted by one slot.

Action ``0`` means "stay silent", action ``m`` (1..M) means "transmit one
packet on channel m".
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .metrics import AopTracker, aop_update


class ContractViolation(RuntimeError):
    """Raised when a caller breaks the environment contract."""


@dataclass(frozen=True)
class EnvConfig:
    num_devices: int
    num_channels: int
    history_len: int = 1
    use_agent_ids: bool = False
    horizon: int = 2000

    def __post_init__(self):
        for name in ("num_devices", "num_channels", "history_len", "horizon"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def num_actions(self) -> int:
        return self.num_channels + 1

    @property
    def obs_dim(self) -> int:
        """Width of the flat observation vector fed to the Q-network."""
        width = self.history_len * (self.num_actions + self.num_channels) + 1
        if self.use_agent_ids:
            width += self.num_devices
        return width


@dataclass
class LocalHistory:
    """What one device knows at the start of a slot.

    ``past_actions`` and ``past_feedback`` are ordered oldest first. Slots in
    which the device held no packet are recorded as action 0 with all-zero
    feedback.
    """

    past_actions: np.ndarray  # (h,) int
    past_feedback: np.ndarray  # (h, M) int
    buffer: int
    agent_id: np.ndarray | None = None  # one-hot (N,)

    def encode(self, num_channels: int) -> np.ndarray:
        return encode_history(
            self.past_actions[None],
            self.past_feedback[None],
            np.array([self.buffer]),
            num_channels,
            None if self.agent_id is None else self.agent_id[None],
        )[0]


def encode_history(past_actions, past_feedback, buffers, num_channels, agent_ids=None):
    """Vectorised observation encoding for a batch of devices.

    Each history entry becomes ``one_hot(action, M+1) ++ feedback(M)``; the
    buffer bit follows, then the optional one-hot ID.

    Args:
        past_actions: (B, h) integer actions.
        past_feedback: (B, h, M) feedback bits.
        buffers: (B,) buffer bits.
        num_channels: M.
        agent_ids: optional (B, N) one-hot rows.

    Returns:
        (B, obs_dim) float array.
    """
    past_actions = np.asarray(past_actions)
    batch, h = past_actions.shape
    onehot = np.zeros((batch, h, num_channels + 1))
    np.put_along_axis(onehot, past_actions[..., None], 1.0, axis=2)
    per_slot = np.concatenate([onehot, np.asarray(past_feedback, dtype=float)], axis=2)
    parts = [per_slot.reshape(batch, -1), np.asarray(buffers, dtype=float)[:, None]]
    if agent_ids is not None:
        parts.append(np.asarray(agent_ids, dtype=float))
    return np.concatenate(parts, axis=1)


@dataclass
class SlotResult:
    """Outcome of one slot: feedback vector, event matrices and rewards."""

    slot: int
    actions: np.ndarray  # (N,)
    feedback: np.ndarray  # (M,)
    success: np.ndarray  # G, (N, M)
    collision: np.ndarray  # C, (N, M)
    rewards: np.ndarray  # (N,), identical entries

    @property
    def reward(self) -> float:
        return float(self.rewards[0]) if self.rewards.size else 0.0


def resolve_slot(actions: np.ndarray, num_channels: int):
    """Compute feedback and success/collision matrices for one joint action.

    Returns:
        (F, G, C) with F of shape (M,) and G, C of shape (N, M).
    """
    actions = np.asarray(actions, dtype=np.int64)
    counts = np.bincount(actions, minlength=num_channels + 1)[1:]
    feedback = (counts == 1).astype(np.int8)
    chosen = np.zeros((actions.size, num_channels), dtype=np.int8)
    tx = np.flatnonzero(actions > 0)
    chosen[tx, actions[tx] - 1] = 1
    success = chosen * feedback[None, :]
    collision = chosen * (1 - feedback)[None, :]
    return feedback, success, collision


@dataclass
class PacketLedger:
    arrived: int = 0
    succeeded: int = 0
    discarded: int = 0

    def reconciles(self, still_buffered: int) -> bool:
        return self.arrived == self.succeeded + self.discarded + still_buffered


class RandomAccessEnv:
    """Multi-device, multi-channel slotted random-access channel.

    The environment holds buffers, local histories and per-slot bookkeeping.
    Packet arrivals are supplied by the caller (see :mod:`marl_access.traffic`).
    """

    def __init__(self, config: EnvConfig):
        self.config = config
        self.reset()

    @property
    def num_devices(self) -> int:
        return self.config.num_devices

    @property
    def num_channels(self) -> int:
        return self.config.num_channels

    def reset(self, seed: int | None = None) -> list[LocalHistory]:
        """Empty all buffers and zero every history.

        The environment itself draws no random numbers; ``seed`` is kept so
        that a run can record what stream its traffic was drawn from.
        """
        n, m, h = self.num_devices, self.num_channels, self.config.history_len
        self.seed = seed
        self.slot = 0
        self.buffers = np.zeros(n, dtype=np.int8)
        self.active = np.zeros(n, dtype=np.int8)
        self.past_actions = np.zeros((n, h), dtype=np.int64)
        self.past_feedback = np.zeros((n, h, m), dtype=np.int8)
        self.aop_tracker = AopTracker(n)
        self.success_counts = np.zeros(n, dtype=np.int64)
        self.ledger = PacketLedger()
        self.lost = np.zeros(n, dtype=np.int64)
        self.trace: list[SlotResult] = []
        self._awaiting_step = False
        return self.observe_all()

    # -- slot phases -----------------------------------------------------

    def arrive(self, arrivals: Sequence[int]) -> None:
        """Open a new slot: deliver packet arrivals and advance AoP."""
        arrivals = np.asarray(arrivals, dtype=np.int8)
        if arrivals.shape != (self.num_devices,):
            raise ContractViolation(f"arrivals must have shape ({self.num_devices},)")
        if self._awaiting_step:
            raise ContractViolation("arrive() called twice without step()")
        self.slot += 1
        new = arrivals > 0
        dropped = new & (self.buffers > 0)
        self.ledger.arrived += int(new.sum())
        self.ledger.discarded += int(dropped.sum())
        self.lost += dropped
        self.buffers = np.maximum(self.buffers, new.astype(np.int8))
        self.active = self.buffers.copy()
        aop_update(self.aop_tracker, self.buffers)
        self._awaiting_step = True

    def step(self, actions: Sequence[int], arrivals: Sequence[int] | None = None) -> SlotResult:
        """Resolve the current slot for a joint action.

        If ``arrivals`` is given it is delivered afterwards as the opening of
        the next slot, so ``observe`` then reflects the new buffers.

        Raises:
            ContractViolation: if a device with an empty buffer transmits or
                an action is outside ``0..M``.
        """
        actions = np.asarray(actions, dtype=np.int64)
        n, m = self.num_devices, self.num_channels
        if actions.shape != (n,):
            raise ContractViolation(f"expected {n} actions, got shape {actions.shape}")
        if actions.min(initial=0) < 0 or actions.max(initial=0) > m:
            raise ContractViolation(f"actions must lie in 0..{m}")
        bad = np.flatnonzero((actions > 0) & (self.buffers == 0))
        if bad.size:
            raise ContractViolation(f"devices {bad.tolist()} transmit with an empty buffer")
        if not self._awaiting_step:
            # a slot without an explicit arrive() call has no new packets
            self.arrive(np.zeros(n, dtype=np.int8))

        feedback, success, collision = resolve_slot(actions, m)
        winners = success.sum(axis=1)
        total = int(winners.sum())
        self.buffers = self.buffers - winners.astype(np.int8)
        self.success_counts += winners
        self.ledger.succeeded += total

        heard = feedback[None, :] * self.active[:, None]
        self.past_actions = np.concatenate([self.past_actions[:, 1:], actions[:, None]], axis=1)
        self.past_feedback = np.concatenate([self.past_feedback[:, 1:], heard[:, None, :]], axis=1)

        result = SlotResult(
            slot=self.slot,
            actions=actions.copy(),
            feedback=feedback,
            success=success,
            collision=collision,
            rewards=np.full(n, float(total)),
        )
        self.trace.append(result)
        self._awaiting_step = False
        if arrivals is not None:
            self.arrive(arrivals)
        return result

    # -- observation -----------------------------------------------------

    def observe(self, device: int) -> LocalHistory:
        if not 0 <= device < self.num_devices:
            raise IndexError(f"device {device} out of range")
        agent_id = None
        if self.config.use_agent_ids:
            agent_id = np.zeros(self.num_devices, dtype=np.int8)
            agent_id[device] = 1
        return LocalHistory(
            past_actions=self.past_actions[device].copy(),
            past_feedback=self.past_feedback[device].copy(),
            buffer=int(self.buffers[device]),
            agent_id=agent_id,
        )

    def observe_all(self) -> list[LocalHistory]:
        return [self.observe(n) for n in range(self.num_devices)]

    def encoded_observations(self) -> np.ndarray:
        """(N, obs_dim) float matrix of every device's encoded history."""
        ids = np.eye(self.num_devices) if self.config.use_agent_ids else None
        return encode_history(self.past_actions, self.past_feedback, self.buffers, self.num_channels, ids)

    def raw_observations(self) -> np.ndarray:
        """(N, obs_dim without IDs) uint8 matrix, the compact replay form."""
        return encode_history(self.past_actions, self.past_feedback, self.buffers, self.num_channels).astype(
            np.uint8
        )

    @property
    def still_buffered(self) -> int:
        return int(self.buffers.sum())


TRACE_HEADER = ("slot", "actions", "feedback", "reward")


def write_trace(results: Iterable[SlotResult], stream) -> None:
    """Write an episode trace as tab-separated text.

    Columns: ``slot`` (1-based), ``actions`` (space-separated per-device
    actions), ``feedback`` (M digits, one per channel) and ``reward``.
    """
    writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in results:
        writer.writerow(
            (
                r.slot,
                " ".join(str(int(a)) for a in r.actions),
                "".join(str(int(f)) for f in r.feedback),
                int(r.reward),
            )
        )


def read_trace(stream) -> list[dict]:
    rows = []
    reader = csv.reader(stream, delimiter="\t")
    header = next(reader)
    if tuple(header) != TRACE_HEADER:
        raise ValueError(f"not a trace file, header {header!r}")
    for slot, actions, feedback, reward in reader:
        rows.append(
            {
                "slot": int(slot),
                "actions": np.array([int(a) for a in actions.split()], dtype=np.int64),
                "feedback": np.array([int(c) for c in feedback], dtype=np.int8),
                "reward": int(reward),
            }
        )
    return rows


def trace_to_text(results: Iterable[SlotResult]) -> str:
    buf = io.StringIO()
    write_trace(results, buf)
    return buf.getvalue()
