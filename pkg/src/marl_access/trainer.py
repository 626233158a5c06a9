"""Episode loop for centralised training and decentralised evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, checkpoint
from .agents import Learner, ReplayBuffer, TemperatureSchedule, select_actions
from .beb import AlohaPolicy, BebPolicy
from .config import SeedPolicy, TrainConfig, check_eval_devices, parse_and_validate, serialize, validate
from .env import EnvConfig, RandomAccessEnv
from .metrics import MetricsBundle, bundle_from_env, throughput
from .nn import NetSpec, QNetwork, TrainingError
from .traffic import CorrelatedTraffic, RegularTraffic, layout

log = logging.getLogger(__name__)


def env_config(cfg: TrainConfig, num_devices: int | None = None, horizon: int | None = None) -> EnvConfig:
    return EnvConfig(
        num_devices=num_devices or cfg.num_devices,
        num_channels=cfg.num_channels,
        history_len=cfg.history_len,
        use_agent_ids=cfg.use_agent_ids,
        horizon=horizon or cfg.horizon,
    )


def make_traffic(cfg: TrainConfig, num_devices: int | None = None, arrival_rate: float | None = None):
    n = num_devices or cfg.num_devices
    rate = cfg.arrival_rate if arrival_rate is None else arrival_rate
    regular = RegularTraffic(rate, n)
    if cfg.traffic == "regular":
        return regular
    lay = layout(cfg.layout_seed, n, cfg.num_events, cfg.d_th)
    return CorrelatedTraffic(regular, lay, cfg.event_rate)


def net_spec(cfg: TrainConfig) -> NetSpec:
    ec = env_config(cfg)
    return NetSpec(ec.obs_dim, ec.num_actions, cfg.recurrent, cfg.hidden1, cfg.hidden2)


def buffer_column(cfg: TrainConfig) -> int:
    return cfg.history_len * (2 * cfg.num_channels + 1)


class LearnedPolicy:
    """Decentralised execution: every device queries the shared network."""

    def __init__(self, net: QNetwork, tau: float):
        self.net, self.tau = net, tau
        self.hidden = None

    def reset(self, num_devices: int) -> None:
        self.hidden = self.net.initial_hidden(num_devices)

    def act(self, env: RandomAccessEnv, rng: np.random.Generator) -> np.ndarray:
        q, self.hidden = self.net.forward(env.encoded_observations(), self.hidden)
        return select_actions(q, env.buffers, self.tau, rng)

    def observe(self, actions, result, rng) -> None:
        pass


class BaselinePolicy:
    def __init__(self, make):
        self.make, self.inner = make, None

    def reset(self, num_devices: int) -> None:
        self.inner = self.make(num_devices)

    def act(self, env, rng):
        return self.inner.act(env.buffers, rng)

    def observe(self, actions, result, rng):
        self.inner.observe(actions, result.success, rng)


def play_episode(env, traffic, policy, horizon: int, traffic_rng, policy_rng) -> MetricsBundle:
    env.reset()
    policy.reset(env.num_devices)
    for _ in range(horizon):
        env.arrive(traffic.sample(traffic_rng))
        actions = policy.act(env, policy_rng)
        result = env.step(actions)
        policy.observe(actions, result, policy_rng)
    return bundle_from_env(env)


def merge_bundles(bundles: list[MetricsBundle]) -> MetricsBundle:
    """Pool several evaluation episodes into one bundle."""
    slots = sum(b.num_slots for b in bundles)
    return MetricsBundle(
        throughput=float(np.mean([b.throughput for b in bundles])),
        aop_per_device=np.mean([b.aop_per_device for b in bundles], axis=0),
        successes=np.sum([b.successes for b in bundles], axis=0),
        num_slots=slots,
    )


@dataclass
class RunManifest:
    config: dict
    version: str
    seed: int
    episodes: list = field(default_factory=list)
    evaluation: dict | None = None
    checkpoint: str | None = None
    status: str = "running"
    error: str | None = None
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "seed": self.seed,
            "episodes": self.episodes,
            "evaluation": self.evaluation,
            "checkpoint": self.checkpoint,
            "status": self.status,
            "error": self.error,
            "elapsed_s": self.elapsed_s,
        }

    def metrics(self) -> dict:
        """Everything the run emits that must reproduce bit-exactly."""
        return {"episodes": self.episodes, "evaluation": self.evaluation}

    def write(self, run_dir: Path) -> None:
        (run_dir / "manifest.json").write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def read(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        d = json.loads(path.read_text())
        d.pop("elapsed_s", None)
        return cls(**d)


@dataclass
class TrainResult:
    manifest: RunManifest
    learner: Learner
    run_dir: Path | None = None

    @property
    def net(self) -> QNetwork:
        return self.learner.net


def _write_train_log(run_dir: Path, episodes: list) -> None:
    lines = ["episode\tthroughput\tmean_reward\tloss\ttau"]
    for e in episodes:
        lines.append(f"{e['episode']}\t{e['throughput']:.6f}\t{e['mean_reward']:.6f}\t{e['loss']:.6f}\t{e['tau']:.6g}")
    (run_dir / "train_log.tsv").write_text("\n".join(lines) + "\n")


def train(cfg: TrainConfig, run_dir=None, progress: bool = False) -> TrainResult:
    """Run the full training loop and a greedy evaluation of the result.

    Per slot: traffic arrivals, per-device Boltzmann actions from the shared
    network, environment step, replay storage, and one minibatch update once
    the replay holds a batch. Target parameters are refreshed every
    ``target_period`` slots and the temperature every ``tau_update_period``
    slots.
    """
    cfg = validate(cfg)
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.ini").write_text(serialize(cfg))
    seeds = SeedPolicy(cfg.seed)
    dtype = np.dtype(cfg.dtype)
    learner = Learner(
        net_spec(cfg), cfg.algorithm, cfg.num_devices, seeds["init"], lr=cfg.lr, gamma=cfg.gamma,
        mixer_embed=cfg.mixer_embed, max_grad_norm=cfg.max_grad_norm or None, dtype=dtype,
    )
    ec = env_config(cfg)
    env = RandomAccessEnv(ec)
    traffic = make_traffic(cfg)
    raw_dim = ec.obs_dim - (cfg.num_devices if cfg.use_agent_ids else 0)
    replay = ReplayBuffer(cfg.replay_capacity, cfg.num_devices, raw_dim)
    schedule = TemperatureSchedule(cfg.tau_start, cfg.tau_end, cfg.tau_updates)
    policy = LearnedPolicy(learner.net, schedule.tau)
    buffer_col = buffer_column(cfg)
    manifest = RunManifest(cfg.to_dict(), __version__, cfg.seed)
    started = time.time()
    global_slot = 0
    try:
        for episode in range(cfg.episodes):
            env.reset()
            policy.reset(cfg.num_devices)
            losses = []
            tau_at_start = schedule.tau
            env.arrive(traffic.sample(seeds["traffic"]))
            obs = env.raw_observations()
            for k in range(cfg.horizon):
                policy.tau = schedule.tau
                actions = policy.act(env, seeds["policy"])
                result = env.step(actions)
                done = k == cfg.horizon - 1
                if not done:
                    env.arrive(traffic.sample(seeds["traffic"]))
                next_obs = env.raw_observations()
                replay.add(obs, actions, result.reward, next_obs, done, episode)
                obs = next_obs
                global_slot += 1

                if len(replay) >= cfg.batch_size + cfg.seq_len and global_slot % cfg.train_every == 0:
                    idx = replay.sample(cfg.batch_size, cfg.seq_len, seeds["replay"])
                    batch = replay.build_batch(idx, buffer_col, cfg.use_agent_ids)
                    batch.obs = batch.obs.astype(dtype)
                    losses.append(learner.learn(batch))
                if global_slot % cfg.target_period == 0:
                    learner.refresh_target()
                if global_slot % cfg.tau_update_period == 0:
                    schedule.update()

            episode_metrics = bundle_from_env(env)
            record = {
                "episode": episode + 1,
                "throughput": episode_metrics.throughput,
                "mean_reward": float(sum(r.reward for r in env.trace) / cfg.horizon),
                "loss": float(np.mean(losses)) if losses else 0.0,
                "tau": tau_at_start,
                "aop": episode_metrics.aop,
            }
            manifest.episodes.append(record)
            if progress:
                log.info("episode %d throughput %.4f loss %.3f tau %.3g", record["episode"], record["throughput"],
                         record["loss"], record["tau"])
    except TrainingError as exc:
        manifest.status = "diverged"
        manifest.error = str(exc)
        manifest.elapsed_s = time.time() - started
        if run_dir is not None:
            manifest.write(run_dir)
            _write_train_log(run_dir, manifest.episodes)
        raise

    if run_dir is not None:
        ckpt = run_dir / "checkpoint.ckpt"
        meta = learner.meta()
        meta["config"] = cfg.to_dict()
        checkpoint.save(ckpt, learner.blocks(), meta)
        manifest.checkpoint = ckpt.name
        _write_train_log(run_dir, manifest.episodes)
    manifest.evaluation = evaluate_network(learner.net, cfg).to_dict()
    manifest.status = "complete"
    manifest.elapsed_s = time.time() - started
    if run_dir is not None:
        manifest.write(run_dir)
    return TrainResult(manifest, learner, run_dir)


def evaluate_network(
    net: QNetwork,
    cfg: TrainConfig,
    num_devices: int | None = None,
    arrival_rate: float | None = None,
    horizon: int | None = None,
    episodes: int | None = None,
    seed: int | None = None,
    traffic=None,
) -> MetricsBundle:
    """Greedy decentralised execution (temperature at its floor), no learning."""
    n = num_devices or cfg.num_devices
    check_eval_devices(cfg, n)
    horizon = horizon or cfg.eval_horizon
    ec = env_config(cfg, n, horizon)
    if ec.obs_dim != net.spec.obs_dim:
        raise TrainingError(f"network expects {net.spec.obs_dim} inputs, environment gives {ec.obs_dim}")
    env = RandomAccessEnv(ec)
    traffic = traffic if traffic is not None else make_traffic(cfg, n, arrival_rate)
    seeds = SeedPolicy(cfg.seed if seed is None else seed)
    policy = LearnedPolicy(net, cfg.tau_end)
    bundles = [
        play_episode(env, traffic, policy, horizon, seeds["eval"], seeds["policy"])
        for _ in range(episodes or cfg.eval_episodes)
    ]
    return merge_bundles(bundles)


def evaluate(checkpoint_path, cfg: TrainConfig | None = None, **kwargs) -> MetricsBundle:
    """Evaluate a saved checkpoint; ``cfg`` defaults to the config stored in it."""
    blocks, meta = checkpoint.load(checkpoint_path)
    net = QNetwork(NetSpec(**meta["net"]), checkpoint.extract("online", blocks))
    if cfg is None:
        cfg = parse_and_validate(meta["config"])
    return evaluate_network(net, cfg, **kwargs)


def run_baseline(
    cfg: TrainConfig,
    policy: str = "beb",
    episodes: int | None = None,
    horizon: int | None = None,
    seed: int | None = None,
    num_devices: int | None = None,
    arrival_rate: float | None = None,
    transmit_prob: float = 0.5,
    cw0: int = 2,
    cw_max: int = 1024,
) -> MetricsBundle:
    """Evaluate a non-learning policy (``beb`` or fixed-probability ``aloha``)."""
    n = num_devices or cfg.num_devices
    m = cfg.num_channels
    if policy == "beb":
        wrapped = BaselinePolicy(lambda k: BebPolicy(k, m, cw0=cw0, cw_max=cw_max))
    elif policy == "aloha":
        wrapped = BaselinePolicy(lambda k: AlohaPolicy(m, transmit_prob))
    else:
        raise ValueError(f"unknown baseline policy {policy!r}")
    horizon = horizon or cfg.eval_horizon
    env = RandomAccessEnv(env_config(cfg, n, horizon))
    traffic = make_traffic(cfg, n, arrival_rate)
    seeds = SeedPolicy(cfg.seed if seed is None else seed)
    bundles = [
        play_episode(env, traffic, wrapped, horizon, seeds["eval"], seeds["policy"])
        for _ in range(episodes or cfg.eval_episodes)
    ]
    return merge_bundles(bundles)


def reproduce(run_dir) -> tuple[dict, dict]:
    """Re-run a training run from its manifest; return (recorded, reproduced) metrics."""
    recorded = RunManifest.read(run_dir)
    cfg = parse_and_validate(recorded.config)
    fresh = train(cfg)
    return recorded.metrics(), json.loads(json.dumps(fresh.manifest.metrics()))


__all__ = [
    "LearnedPolicy",
    "RunManifest",
    "TrainResult",
    "evaluate",
    "evaluate_network",
    "play_episode",
    "reproduce",
    "run_baseline",
    "throughput",
    "train",
]
