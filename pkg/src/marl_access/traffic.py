"""Packet-arrival generators.

Two models are provided: independent per-device Bernoulli arrivals
(:class:`RegularTraffic`) and a correlated model (:class:`CorrelatedTraffic`)
in which spatial events switch every device within a threshold distance of
the epicentre into alarm mode for one slot, on top of the regular arrivals.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def trigger_probability(x, epicenters, d_th=None, pair_probs=None) -> float:
    """Probability that a device at ``x`` is pushed into alarm mode.

    ``p_x = 1 - prod_y (1 - p_xy)``. Under the threshold rule ``p_xy`` is 1
    when ``|x - y| <= d_th`` and 0 otherwise. Passing ``pair_probs`` bypasses
    the threshold rule and uses the given per-event probabilities directly.
    """
    if pair_probs is None:
        if d_th is None or d_th < 0:
            raise ValueError("d_th must be given and non-negative")
        epicenters = np.asarray(epicenters, dtype=float).reshape(-1, 2)
        dist = np.linalg.norm(epicenters - np.asarray(x, dtype=float)[None, :], axis=1)
        pair_probs = (dist <= d_th).astype(float)
    pair_probs = np.asarray(pair_probs, dtype=float)
    return float(1.0 - np.prod(1.0 - pair_probs))


def sample_regular(rates, rng: np.random.Generator) -> np.ndarray:
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0) or np.any(rates > 1):
        raise ValueError("arrival rates must lie in [0, 1]")
    return (rng.random(rates.shape) < rates).astype(np.int8)


def sample_events(p: float, num_events: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of which of the ``num_events`` epicentres fire this slot."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"event probability must lie in [0, 1], got {p}")
    return rng.random(num_events) < p


@dataclass
class Layout:
    devices: np.ndarray  # (N, 2)
    epicenters: np.ndarray  # (L, 2)
    d_th: float
    members: list[list[int]] = field(init=False)

    def __post_init__(self):
        self.members = membership(self.devices, self.epicenters, self.d_th)

    @property
    def member_matrix(self) -> np.ndarray:
        """(L, N) boolean matrix, row l marks devices within ``d_th`` of event l."""
        mat = np.zeros((len(self.epicenters), len(self.devices)), dtype=bool)
        for l, devs in enumerate(self.members):
            mat[l, devs] = True
        return mat

    def event_devices(self) -> np.ndarray:
        """Indices of devices that belong to at least one event."""
        return np.flatnonzero(self.member_matrix.any(axis=0))

    def to_text(self) -> str:
        """Membership table, one ``event<TAB>device indices`` row per event.

        Events and devices are numbered from 1 in the text form.
        """
        out = io.StringIO()
        out.write("event\tdevices\n")
        for l, devs in enumerate(self.members):
            out.write(f"{l + 1}\t{','.join(str(d + 1) for d in devs)}\n")
        return out.getvalue()


def membership(devices, epicenters, d_th: float) -> list[list[int]]:
    devices = np.asarray(devices, dtype=float).reshape(-1, 2)
    epicenters = np.asarray(epicenters, dtype=float).reshape(-1, 2)
    if d_th <= 0:
        return [[] for _ in range(len(epicenters))]
    dist = np.linalg.norm(epicenters[:, None, :] - devices[None, :, :], axis=2)
    return [np.flatnonzero(row <= d_th).tolist() for row in dist]


def parse_layout_text(text: str) -> list[list[int]]:
    lines = text.strip().splitlines()
    if not lines or lines[0].split("\t") != ["event", "devices"]:
        raise ValueError("not a membership table")
    table = []
    for line in lines[1:]:
        _, devs = (line.split("\t") + [""])[:2]
        table.append([int(d) - 1 for d in devs.split(",") if d])
    return table


def layout(seed: int, num_devices: int, num_events: int, d_th: float, area=(1.0, 1.0)) -> Layout:
    """Drop devices and epicentres uniformly at random in a rectangle."""
    width, height = area
    if width <= 0 or height <= 0:
        raise ValueError("area dimensions must be positive")
    rng = np.random.default_rng(seed)
    scale = np.array([width, height])
    devices = rng.random((num_devices, 2)) * scale
    epicenters = rng.random((num_events, 2)) * scale
    return Layout(devices, epicenters, d_th)


class RegularTraffic:
    """Independent Bernoulli arrivals with per-device rates."""

    def __init__(self, rates: Sequence[float] | float, num_devices: int | None = None):
        if np.isscalar(rates):
            if num_devices is None:
                raise ValueError("num_devices is required with a scalar rate")
            rates = np.full(num_devices, float(rates))
        self.rates = np.asarray(rates, dtype=float)
        if np.any(self.rates < 0) or np.any(self.rates > 1):
            raise ValueError("arrival rates must lie in [0, 1]")

    @property
    def num_devices(self) -> int:
        return self.rates.size

    @property
    def system_rate(self) -> float:
        return float(self.rates.sum())

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_regular(self.rates, rng)


class CorrelatedTraffic:
    """Regular arrivals plus event-driven alarm packets.

    Every slot each of the ``L`` events fires independently with probability
    ``p = event_rate / L``. A firing event hands one packet to each device in
    its membership list; a device covered by several firing events still gets
    a single packet. Alarm packets and regular packets are OR-ed, as the
    buffer can hold one packet.
    """

    def __init__(self, regular: RegularTraffic, layout: Layout, event_rate: float):
        if len(layout.epicenters) < 1:
            raise ValueError("need at least one event epicentre")
        self.regular = regular
        self.layout = layout
        self.event_rate = float(event_rate)
        self.p = self.event_rate / len(layout.epicenters)
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"per-event probability {self.p} outside [0, 1]")
        self._members = layout.member_matrix
        self.activations = np.zeros(len(layout.epicenters), dtype=np.int64)

    @property
    def num_devices(self) -> int:
        return self.regular.num_devices

    @property
    def num_events(self) -> int:
        return len(self.layout.epicenters)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        # draw order is fixed (regular first) so streams stay reproducible
        regular = self.regular.sample(rng)
        fired = sample_events(self.p, self.num_events, rng)
        self.activations += fired
        alarm = self._members[fired].any(axis=0)
        return np.maximum(regular, alarm.astype(np.int8))

    def reset_counts(self) -> None:
        self.activations[:] = 0
