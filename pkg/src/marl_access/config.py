"""Run configuration, validation, seeding and experiment presets.

Config files use a flat ``key = value`` format (INI syntax with a single
``[run]`` section); any key may be overridden from the command line.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """A configuration value is missing, malformed or inconsistent."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class TrainConfig:
    algorithm: str = "vdn"
    use_agent_ids: bool = False
    num_devices: int = 8
    num_channels: int = 2
    horizon: int = 2000
    episodes: int = 60
    # traffic
    traffic: str = "regular"
    arrival_rate: float = 0.3
    event_rate: float = 0.0
    num_events: int = 3
    d_th: float = 0.3
    layout_seed: int = 0
    # agent / network
    history_len: int = 1
    recurrent: bool = False
    hidden1: int = 256
    hidden2: int = 64
    mixer_embed: int = 32
    dtype: str = "float32"
    # learning
    gamma: float = 0.99
    lr: float = 1e-4
    batch_size: int = 32
    tau_start: float = 200.0
    tau_end: float = 0.1
    target_period: int = 200
    tau_period: int = 0
    tau_decay_episodes: int = 0
    replay_capacity: int = 50000
    seq_len: int = 1
    train_every: int = 1
    max_grad_norm: float = 0.0
    # evaluation
    eval_horizon: int = 500
    eval_episodes: int = 5
    seed: int = 0

    @property
    def tau_update_period(self) -> int:
        """Slots between temperature updates; 0 in the config means one episode."""
        return self.tau_period or self.horizon

    @property
    def tau_updates(self) -> int:
        """Temperature updates needed to go from tau_start to tau_end."""
        decay = self.tau_decay_episodes or self.episodes
        return max(decay * self.horizon // self.tau_update_period - 1, 1)

    def with_updates(self, **changes) -> "TrainConfig":
        return validate(dataclasses.replace(self, **changes))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_CHOICES = {"algorithm": ("drqn", "vdn", "qmix"), "traffic": ("regular", "correlated"), "dtype": ("float32", "float64")}
_POSITIVE_INT = (
    "num_devices", "num_channels", "horizon", "episodes", "history_len", "hidden1", "hidden2",
    "mixer_embed", "batch_size", "target_period", "replay_capacity", "seq_len", "train_every",
    "eval_horizon", "eval_episodes", "num_events",
)


def validate(cfg: TrainConfig) -> TrainConfig:
    for key, options in _CHOICES.items():
        if getattr(cfg, key) not in options:
            raise ValidationError(key, f"must be one of {options}, got {getattr(cfg, key)!r}")
    for key in _POSITIVE_INT:
        if getattr(cfg, key) < 1:
            raise ValidationError(key, f"must be >= 1, got {getattr(cfg, key)}")
    if not 0.0 <= cfg.arrival_rate <= 1.0:
        raise ValidationError("arrival_rate", "must lie in [0, 1]")
    if cfg.event_rate < 0 or cfg.event_rate / cfg.num_events > 1:
        raise ValidationError("event_rate", "per-event probability event_rate/num_events must lie in [0, 1]")
    if cfg.d_th < 0:
        raise ValidationError("d_th", "must be non-negative")
    if not 0.0 <= cfg.gamma < 1.0:
        raise ValidationError("gamma", "must lie in [0, 1)")
    if cfg.lr < 0:
        raise ValidationError("lr", "must be non-negative")
    if cfg.tau_start <= 0 or cfg.tau_end <= 0:
        raise ValidationError("tau_end" if cfg.tau_end <= 0 else "tau_start", "temperatures must be positive")
    if cfg.tau_period < 0:
        raise ValidationError("tau_period", "must be >= 0 (0 = once per episode)")
    if not 0 <= cfg.tau_decay_episodes <= cfg.episodes:
        raise ValidationError("tau_decay_episodes", "must lie in [0, episodes] (0 = all episodes)")
    if cfg.seq_len > cfg.horizon:
        raise ValidationError("seq_len", "cannot exceed the episode horizon")
    if cfg.seq_len > 1 and not cfg.recurrent:
        raise ValidationError("seq_len", "sequences longer than 1 need recurrent = true")
    if cfg.replay_capacity < cfg.batch_size + cfg.seq_len:
        raise ValidationError("replay_capacity", "must hold at least one batch")
    if cfg.max_grad_norm < 0:
        raise ValidationError("max_grad_norm", "must be >= 0 (0 disables clipping)")
    return cfg


def check_eval_devices(cfg: TrainConfig, num_test_devices: int) -> None:
    """With one-hot IDs the input width pins the device count."""
    if cfg.use_agent_ids and num_test_devices != cfg.num_devices:
        raise ValidationError(
            "num_devices",
            f"policy was trained with agent IDs for N={cfg.num_devices}; cannot evaluate at N={num_test_devices}",
        )


def _coerce(key: str, raw, kind):
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ValidationError(key, f"cannot parse {text!r} as {kind.__name__}") from None


_TYPES = {f.name: {"int": int, "float": float, "bool": bool, "str": str}[f.type] for f in fields(TrainConfig)}


def from_mapping(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    cfg = dataclasses.replace(base) if base is not None else TrainConfig()
    for key, raw in values.items():
        if key not in _TYPES:
            raise ValidationError(key, "unknown configuration key")
        setattr(cfg, key, _coerce(key, raw, _TYPES[key]))
    return validate(cfg)


def parse_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    stripped = text.strip()
    if stripped and not stripped.startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    values = dict(parser["run"]) if parser.has_section("run") else {}
    extra = [s for s in parser.sections() if s != "run"]
    if extra:
        raise ValidationError(extra[0], "only a [run] section is supported")
    return from_mapping(values, base)


def parse_and_validate(source=None, overrides: dict | None = None, base: TrainConfig | None = None) -> TrainConfig:
    """Resolve a config from a file path, text, mapping or nothing.

    ``overrides`` (e.g. command-line flags) win over file values.
    """
    if source is None:
        cfg = validate(dataclasses.replace(base) if base else TrainConfig())
    elif isinstance(source, dict):
        cfg = from_mapping(source, base)
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        cfg = parse_text(Path(source).read_text(), base)
    else:
        cfg = parse_text(str(source), base)
    if overrides:
        cfg = from_mapping({k: v for k, v in overrides.items() if v is not None}, cfg)
    return cfg


def serialize(cfg: TrainConfig) -> str:
    out = io.StringIO()
    out.write("[run]\n")
    for f in fields(TrainConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        out.write(f"{f.name} = {value}\n")
    return out.getvalue()


# -- seeding ----------------------------------------------------------------


STREAMS = ("traffic", "policy", "init", "replay", "eval")


@dataclass
class SeedPolicy:
    """Independent random streams derived from one master seed."""

    master: int
    streams: dict = field(init=False)

    def __post_init__(self):
        children = np.random.SeedSequence(self.master).spawn(len(STREAMS))
        self.streams = {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}

    def __getitem__(self, name: str) -> np.random.Generator:
        return self.streams[name]


# -- presets ----------------------------------------------------------------


@dataclass
class ExperimentPreset:
    name: str
    description: str
    runs: dict  # label -> TrainConfig
    expected: dict = field(default_factory=dict)  # label -> published values
    kind: str = "compare"  # compare | correlated | scalability
    test_devices: tuple = ()


def _table3(n, m, k, ids_throughput, noids_throughput, beb_throughput, ids_aop, noids_aop, beb_aop):
    base = TrainConfig(num_devices=n, num_channels=m, horizon=k, arrival_rate=0.3)
    return ExperimentPreset(
        name=f"table3-n{n}",
        description=f"VDN with and without agent IDs vs BEB, N={n}, M={m}, lambda_n=0.3, K={k}",
        runs={"vdn-ids1": base.with_updates(use_agent_ids=True), "vdn-ids0": base},
        expected={
            "vdn-ids1": {"throughput": ids_throughput, "aop": ids_aop},
            "vdn-ids0": {"throughput": noids_throughput, "aop": noids_aop},
            "beb": {"throughput": beb_throughput, "aop": beb_aop},
        },
    )


def _presets() -> dict:
    presets = {}
    for p in (
        _table3(8, 2, 2000, 0.56, 0.40, 0.37, 625.7, 5.5, 162.2),
        _table3(16, 2, 3000, 0.54, 0.386, 0.372, 1480.4, 29.8, 519.3),
        _table3(50, 5, 5000, 0.44, 0.25, 0.36, 1561.3, 44.1, 1095.1),
    ):
        presets[p.name] = p

    base = TrainConfig(num_devices=8, num_channels=2, horizon=2000, arrival_rate=0.3)
    runs = {}
    for algo in ("vdn", "qmix", "drqn"):
        for ids in (True, False):
            runs[f"{algo}-ids{int(ids)}"] = base.with_updates(algorithm=algo, use_agent_ids=ids)
    presets["marl-compare"] = ExperimentPreset(
        "marl-compare", "VDN, QMIX and DRQN with and without agent IDs, N=8, M=2, lambda_n=0.3", runs
    )

    corr = TrainConfig(
        num_devices=20, num_channels=2, horizon=2000, traffic="correlated", arrival_rate=0.3 / 20,
        num_events=3, d_th=0.3,
    )
    presets["corr-traffic"] = ExperimentPreset(
        "corr-traffic",
        "Correlated traffic, N=20, L=3, lambda=0.3, event rates 0/0.02/0.05/0.07",
        {f"ebar{rate}": corr.with_updates(event_rate=rate) for rate in (0.0, 0.02, 0.05, 0.07)},
        expected={
            "ebar0.02": {"activations": [63, 61, 59]},
            "ebar0.05": {"activations": [170, 170, 169]},
            "ebar0.07": {"activations": [243, 226, 241]},
        },
        kind="correlated",
    )

    scal = {}
    for algo in ("vdn", "qmix", "drqn"):
        for n_tr, k in ((4, 2000), (8, 2000), (16, 3000)):
            scal[f"{algo}-ntr{n_tr}"] = TrainConfig(
                algorithm=algo, num_devices=n_tr, num_channels=2, horizon=k, arrival_rate=0.3 / n_tr
            )
    presets["scalability"] = ExperimentPreset(
        "scalability",
        "Policies trained at N_tr in {4, 8, 16} (lambda=0.3, no IDs) tested at other device counts",
        scal,
        kind="scalability",
        test_devices=(4, 8, 16, 32, 64),
    )
    return presets


PRESETS = _presets()


def get_preset(name: str) -> ExperimentPreset:
    if name not in PRESETS:
        raise ValidationError("preset", f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]
