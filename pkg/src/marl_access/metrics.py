"""Throughput, Age-of-Packets and fairness summaries computed from traces."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np


def throughput(success_trace, num_channels: int, horizon: int | None = None) -> float:
    """Average successes per channel per slot.

    Args:
        success_trace: iterable of per-slot (N, M) success matrices, or an
            array of shape (K, N, M).
        num_channels: M.
        horizon: K; defaults to the number of slots in the trace.
    """
    g = np.asarray(list(success_trace) if not isinstance(success_trace, np.ndarray) else success_trace)
    k = horizon if horizon is not None else len(g)
    if k == 0:
        return 0.0
    return float(g.sum()) / (num_channels * k)


@dataclass
class AopTracker:
    """Per-device Age-of-Packets counters and their running sums."""

    num_devices: int
    ages: np.ndarray = field(init=False)
    totals: np.ndarray = field(init=False)
    slots: int = field(init=False, default=0)

    def __post_init__(self):
        self.ages = np.zeros(self.num_devices, dtype=np.int64)
        self.totals = np.zeros(self.num_devices, dtype=np.int64)

    def average(self) -> np.ndarray:
        """Per-device average AoP over the slots seen so far."""
        if self.slots == 0:
            return np.zeros(self.num_devices)
        return self.totals / self.slots


def aop_update(tracker: AopTracker, buffer_bits) -> AopTracker:
    bits = np.asarray(buffer_bits)
    tracker.ages = np.where(bits > 0, tracker.ages + 1, 0)
    tracker.totals += tracker.ages
    tracker.slots += 1
    return tracker


def average_aop(buffer_trace) -> np.ndarray:
    """Per-device average AoP from a (K, N) trace of buffer bits."""
    trace = np.asarray(buffer_trace)
    tracker = AopTracker(trace.shape[1])
    for bits in trace:
        aop_update(tracker, bits)
    return tracker.average()


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the smallest value with at least q% at or below it."""
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size == 0:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(q / 100.0 * ordered.size))
    return float(ordered[rank - 1])


PERCENTILES = (("min", 0), ("p25", 25), ("median", 50), ("p75", 75), ("p95", 95), ("max", 100))


def fairness_summary(successes, aops) -> dict:
    successes = np.asarray(successes)
    aops = np.asarray(aops, dtype=float)
    if successes.size < 1:
        raise ValueError("need at least one device")
    summary = {}
    for label, series in (("successes", successes), ("aop", aops)):
        summary[label] = {name: nearest_rank(series, q) if q else float(series.min()) for name, q in PERCENTILES}
    summary["starved"] = int(np.sum(successes == 0))
    mean = successes.mean()
    summary["spread"] = float((successes.max() - successes.min()) / mean) if mean > 0 else float("inf")
    return summary


@dataclass
class MetricsBundle:
    throughput: float
    aop_per_device: np.ndarray
    successes: np.ndarray
    num_slots: int

    @property
    def aop(self) -> float:
        return float(np.mean(self.aop_per_device))

    @property
    def fairness(self) -> dict:
        return fairness_summary(self.successes, self.aop_per_device)

    def to_dict(self) -> dict:
        return {
            "throughput": self.throughput,
            "aop": self.aop,
            "aop_per_device": [float(a) for a in self.aop_per_device],
            "successes": [int(s) for s in self.successes],
            "num_slots": self.num_slots,
            "fairness": self.fairness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsBundle":
        return cls(d["throughput"], np.array(d["aop_per_device"]), np.array(d["successes"]), d["num_slots"])


def bundle_from_env(env) -> MetricsBundle:
    """Metrics for the episode an environment has just played."""
    g = np.array([r.success for r in env.trace])
    return MetricsBundle(
        throughput=throughput(g, env.num_channels, len(env.trace)),
        aop_per_device=env.aop_tracker.average(),
        successes=g.sum(axis=(0, 2)) if len(g) else np.zeros(env.num_devices, dtype=np.int64),
        num_slots=len(env.trace),
    )


def comparison_table(rows: dict[str, MetricsBundle], reference: dict[str, dict] | None = None) -> str:
    """Tab-separated throughput/AoP table, one row per policy.

    ``reference`` optionally maps a policy label to published values which
    are printed alongside in ``ref_throughput``/``ref_aop`` columns.
    """
    out = io.StringIO()
    out.write("policy\tthroughput\taop\tstarved\tref_throughput\tref_aop\n")
    for label, b in rows.items():
        ref = (reference or {}).get(label, {})
        out.write(
            f"{label}\t{b.throughput:.4f}\t{b.aop:.2f}\t{b.fairness['starved']}\t"
            f"{ref.get('throughput', '')}\t{ref.get('aop', '')}\n"
        )
    return out.getvalue()


def per_device_table(bundle: MetricsBundle) -> str:
    out = io.StringIO()
    out.write("device\tsuccesses\taop\n")
    for n, (s, a) in enumerate(zip(bundle.successes, bundle.aop_per_device)):
        out.write(f"{n + 1}\t{int(s)}\t{a:.4f}\n")
    return out.getvalue()
