"""Preset experiment runners and the tables they emit."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentPreset, SeedPolicy, TrainConfig, from_mapping, get_preset, serialize
from .metrics import MetricsBundle, comparison_table, per_device_table
from .trainer import TrainResult, evaluate_network, run_baseline, train
from .traffic import CorrelatedTraffic, RegularTraffic, layout

log = logging.getLogger(__name__)


def event_activation_counts(cfg: TrainConfig, num_slots: int = 10_000, seed: int | None = None) -> np.ndarray:
    """How often each event fires over ``num_slots`` slots of the config's traffic."""
    lay = layout(cfg.layout_seed, cfg.num_devices, cfg.num_events, cfg.d_th)
    traffic = CorrelatedTraffic(RegularTraffic(cfg.arrival_rate, cfg.num_devices), lay, cfg.event_rate)
    rng = SeedPolicy(cfg.seed if seed is None else seed)["traffic"]
    for _ in range(num_slots):
        traffic.sample(rng)
    return traffic.activations.copy()


@dataclass
class GroupSplit:
    """Mean success count and AoP of event members versus everyone else."""

    members: np.ndarray
    member_successes: float
    other_successes: float
    member_aop: float
    other_aop: float


def member_split(bundle: MetricsBundle, members) -> GroupSplit:
    mask = np.zeros(len(bundle.successes), dtype=bool)
    mask[np.asarray(members, dtype=int)] = True
    if mask.all() or not mask.any():
        raise ValueError("need both event members and non-members")
    s, a = bundle.successes.astype(float), bundle.aop_per_device
    return GroupSplit(
        members=np.flatnonzero(mask),
        member_successes=float(s[mask].mean()),
        other_successes=float(s[~mask].mean()),
        member_aop=float(a[mask].mean()),
        other_aop=float(a[~mask].mean()),
    )


def event_members(cfg: TrainConfig) -> np.ndarray:
    return layout(cfg.layout_seed, cfg.num_devices, cfg.num_events, cfg.d_th).event_devices()


def scalability_curve(result_or_net, cfg: TrainConfig, test_devices, system_rate: float = 0.3,
                      seed: int | None = None) -> dict[int, MetricsBundle]:
    """Evaluate one policy at several device counts with the system rate held fixed."""
    net = result_or_net.net if isinstance(result_or_net, TrainResult) else result_or_net
    return {
        n: evaluate_network(net, cfg, num_devices=n, arrival_rate=system_rate / n, seed=seed)
        for n in test_devices
    }


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def learning_curve_table(results: dict[str, TrainResult]) -> str:
    """Long-format series (label, episode, throughput) for plotting learning curves."""
    lines = ["series\tepisode\tthroughput"]
    for label, res in results.items():
        for e in res.manifest.episodes:
            lines.append(f"{label}\t{e['episode']}\t{e['throughput']:.6f}")
    return "\n".join(lines) + "\n"


def run_preset(name: str, seed: int = 0, root=".", overrides: dict | None = None, plot_data: bool = False) -> Path:
    """Train, evaluate and tabulate every run of a preset under ``root/<name>-s<seed>``.

    ``overrides`` (config key -> value) are applied to every run, e.g. to
    shorten training for a smoke test.
    """
    preset = get_preset(name)
    out = Path(root) / f"{name}-s{seed}"
    out.mkdir(parents=True, exist_ok=True)
    runs = {label: from_mapping({**(overrides or {}), "seed": seed}, base=cfg) for label, cfg in preset.runs.items()}

    if preset.kind == "correlated":
        num_events = next(iter(runs.values())).num_events
        rows = ["run\tevent_rate\t" + "\t".join(f"event{l + 1}" for l in range(num_events)) + "\treference"]
        for label, cfg in runs.items():
            counts = event_activation_counts(cfg.with_updates(arrival_rate=0.0), 10_000)
            ref = preset.expected.get(label, {}).get("activations", "")
            rows.append(f"{label}\t{cfg.event_rate}\t" + "\t".join(map(str, counts)) + f"\t{ref}")
        _write(out / "activations.tsv", "\n".join(rows) + "\n")

    results = {}
    for label, cfg in runs.items():
        results[label] = train(cfg, run_dir=out / label)

    if preset.kind == "compare":
        bundles = {label: MetricsBundle.from_dict(r.manifest.evaluation) for label, r in results.items()}
        base = next(iter(runs.values()))
        bundles["beb"] = run_baseline(base, "beb", episodes=20, seed=seed)
        _write(out / "comparison.tsv", comparison_table(bundles, preset.expected))
        for label, b in bundles.items():
            _write(out / f"devices-{label}.tsv", per_device_table(b))
    elif preset.kind == "correlated":
        lines = ["run\tmember_successes\tother_successes\tmember_aop\tother_aop\tthroughput"]
        for label, r in results.items():
            b = MetricsBundle.from_dict(r.manifest.evaluation)
            members = event_members(runs[label])
            if 0 < len(members) < runs[label].num_devices:
                s = member_split(b, members)
                lines.append(f"{label}\t{s.member_successes:.2f}\t{s.other_successes:.2f}\t{s.member_aop:.3f}\t"
                             f"{s.other_aop:.3f}\t{b.throughput:.4f}")
            _write(out / f"devices-{label}.tsv", per_device_table(b))
        _write(out / "groups.tsv", "\n".join(lines) + "\n")
    elif preset.kind == "scalability":
        lines = ["run\tn_train\tn_test\tthroughput\taop"]
        for label, r in results.items():
            for n, b in scalability_curve(r, runs[label], preset.test_devices, seed=seed).items():
                lines.append(f"{label}\t{runs[label].num_devices}\t{n}\t{b.throughput:.4f}\t{b.aop:.3f}")
        _write(out / "scalability.tsv", "\n".join(lines) + "\n")

    if plot_data:
        _write(out / "learning_curves.tsv", learning_curve_table(results))
    summary = {
        "preset": preset.name,
        "seed": seed,
        "runs": {label: str((out / label).resolve()) for label in results},
        "configs": {label: serialize(cfg) for label, cfg in runs.items()},
    }
    _write(out / "preset.json", json.dumps(summary, indent=2))
    return out


def describe(preset: ExperimentPreset) -> str:
    lines = [f"{preset.name}: {preset.description}"]
    for label, cfg in preset.runs.items():
        lines.append(
            f"  {label}: algorithm={cfg.algorithm} ids={int(cfg.use_agent_ids)} N={cfg.num_devices} "
            f"M={cfg.num_channels} K={cfg.horizon} rate={cfg.arrival_rate:g} traffic={cfg.traffic}"
            + (f" event_rate={cfg.event_rate:g}" if cfg.traffic == "correlated" else "")
        )
    return "\n".join(lines)


__all__ = [
    "GroupSplit",
    "describe",
    "event_activation_counts",
    "event_members",
    "learning_curve_table",
    "member_split",
    "run_preset",
    "scalability_curve",
]
