import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marl_access.config import (
    PRESETS,
    SeedPolicy,
    TrainConfig,
    ValidationError,
    check_eval_devices,
    get_preset,
    parse_and_validate,
    parse_text,
    serialize,
)


def test_empty_config_gives_defaults():
    cfg = parse_and_validate("")
    assert cfg == TrainConfig()
    assert (cfg.lr, cfg.batch_size, cfg.tau_start, cfg.tau_end, cfg.episodes) == (1e-4, 32, 200.0, 0.1, 60)
    assert (cfg.hidden1, cfg.hidden2) == (256, 64)


def test_zero_channels_rejected_naming_key():
    with pytest.raises(ValidationError) as err:
        parse_and_validate("num_channels = 0")
    assert err.value.key == "num_channels"


@pytest.mark.parametrize(
    "text,key",
    [
        ("gamma = 1.0", "gamma"),
        ("algorithm = ppo", "algorithm"),
        ("bogus = 3", "bogus"),
        ("num_devices = eight", "num_devices"),
        ("arrival_rate = 1.5", "arrival_rate"),
        ("tau_end = 0", "tau_end"),
        ("seq_len = 8", "seq_len"),
        ("tau_decay_episodes = 61", "tau_decay_episodes"),
        ("[other]\nx = 1", "other"),
    ],
)
def test_invalid_settings_name_the_key(text, key):
    with pytest.raises(ValidationError) as err:
        parse_and_validate(text)
    assert err.value.key == key


def test_temperature_update_count():
    # once per episode: 60 episodes give 59 steps from tau_start to tau_end
    assert TrainConfig().tau_updates == 59
    assert TrainConfig(tau_decay_episodes=30).tau_updates == 29
    # every 500 slots of a 2000-slot episode
    assert TrainConfig(tau_period=500).tau_updates == 60 * 4 - 1


def test_ids_pin_the_test_device_count():
    cfg = TrainConfig(use_agent_ids=True)
    check_eval_devices(cfg, 8)
    with pytest.raises(ValidationError):
        check_eval_devices(cfg, 16)
    check_eval_devices(TrainConfig(), 16)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nnum_devices = 16\nlr = 0.001\n")
    cfg = parse_and_validate(str(path), overrides={"lr": "0.01", "seed": None})
    assert cfg.num_devices == 16 and cfg.lr == 0.01 and cfg.seed == 0


def test_preset_table3_n8():
    p = get_preset("table3-n8")
    cfg = p.runs["vdn-ids0"]
    assert (cfg.num_devices, cfg.num_channels, cfg.arrival_rate, cfg.horizon, cfg.episodes) == (8, 2, 0.3, 2000, 60)
    assert p.runs["vdn-ids1"].use_agent_ids
    assert p.expected["beb"]["throughput"] == 0.37


def test_presets_cover_table_rows_and_studies():
    rows = {(c.num_devices, c.num_channels, c.horizon) for name in ("table3-n8", "table3-n16", "table3-n50")
            for c in PRESETS[name].runs.values()}
    assert rows == {(8, 2, 2000), (16, 2, 3000), (50, 5, 5000)}
    corr = PRESETS["corr-traffic"].runs
    assert sorted(c.event_rate for c in corr.values()) == [0.0, 0.02, 0.05, 0.07]
    assert all(c.num_devices == 20 and c.num_events == 3 and c.d_th == 0.3 for c in corr.values())
    assert {c.algorithm for c in PRESETS["marl-compare"].runs.values()} == {"vdn", "qmix", "drqn"}


def test_unknown_preset_lists_available():
    with pytest.raises(ValidationError, match="table3-n8"):
        get_preset("nope")


def test_serialize_parse_idempotent_for_presets():
    for preset in PRESETS.values():
        for cfg in preset.runs.values():
            text = serialize(cfg)
            assert parse_text(text) == cfg
            assert serialize(parse_text(text)) == text


@settings(max_examples=50, deadline=None)
@given(
    st.integers(1, 100), st.integers(1, 8), st.floats(0, 1), st.floats(1e-6, 1.0, exclude_max=True),
    st.booleans(), st.integers(0, 2**31 - 1),
)
def test_serialize_round_trip(n, m, rate, gamma, ids, seed):
    cfg = TrainConfig(num_devices=n, num_channels=m, arrival_rate=rate, gamma=gamma, use_agent_ids=ids, seed=seed)
    assert parse_text(serialize(cfg)) == cfg


def test_seed_streams_reproducible_and_distinct():
    a, b = SeedPolicy(5), SeedPolicy(5)
    assert a["traffic"].random() == b["traffic"].random()
    draws = {name: SeedPolicy(5)[name].random() for name in ("traffic", "policy", "init", "replay", "eval")}
    assert len(set(draws.values())) == 5
    assert SeedPolicy(6)["traffic"].random() != SeedPolicy(5)["traffic"].random()
    assert isinstance(a["init"], np.random.Generator)
