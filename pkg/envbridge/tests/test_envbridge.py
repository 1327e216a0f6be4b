"""Binding tests, including the parity acceptance criterion: a random-agent
loop through the wrapper must reproduce the core CLI's results exactly."""

import json
import subprocess
import sys

import numpy as np
import pytest

from skirmish.errors import ScenarioError, SkirmishError
from skirmish.rng import STREAM_POLICY, derive_seed, stream

from skirmish_envbridge import SkirmishEnv


def random_agent_episode(env: SkirmishEnv, seed: int):
    """The core's random policy, replayed through the binding surface."""
    env.reset(seed=seed)
    rng = stream(seed, STREAM_POLICY)
    total = 0.0
    steps = 0
    terminated = False
    won = False
    while not terminated:
        joint = []
        for mask in env.get_avail_actions():
            options = [a for a, ok in enumerate(mask) if ok]
            joint.append(options[int(rng.integers(len(options)))])
        reward, terminated, info = env.step(joint)
        total += reward
        steps += 1
        won = info["won"]
    return total, steps, won


def cli_run_json(scenario: str, episodes: int, seed: int) -> dict:
    proc = subprocess.run(
        [
            sys.executable, "-m", "skirmish.cli", "run",
            "--scenario", scenario, "--policy", "random",
            "--episodes", str(episodes), "--seed", str(seed), "--json",
        ],
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(proc.stdout)


def test_acceptance_c14_binding_parity_with_core_cli():
    """Criterion 14: 10 seeded episodes match the CLI's rewards, lengths,
    and win flags exactly; env info matches the registry."""
    scenario = "terran_5_vs_5"
    base_seed = 31
    episodes = 10
    cli = cli_run_json(scenario, episodes, base_seed)

    env = SkirmishEnv(scenario)
    mine = []
    for i in range(episodes):
        seed = derive_seed(base_seed, i)
        total, steps, won = random_agent_episode(env, seed)
        mine.append({"seed": seed, "return": total, "length": steps, "won": won})

    assert len(cli["episodes"]) == episodes
    for ours, theirs in zip(mine, cli["episodes"]):
        assert ours["seed"] == theirs["seed"]
        assert ours["return"] == theirs["return"]  # exact float equality
        assert ours["length"] == theirs["length"]
        assert ours["won"] == theirs["won"]

    assert SkirmishEnv("protoss_5_vs_5").get_env_info()["n_agents"] == 5
    for race in ("protoss", "terran", "zerg"):
        info = SkirmishEnv(f"epo_{race}_6_vs_5").get_env_info()
        assert info["n_agents"] == 6
        assert info["n_actions"] == 6 + 5
    print(
        "\n[acceptance] criterion 14 PASS: 10 episodes byte-equal to the core CLI; "
        "env info matches the registry"
    )


def test_reset_returns_obs_and_state():
    env = SkirmishEnv("protoss_5_vs_5", seed=3)
    obs, state = env.reset()
    info = env.get_env_info()
    assert len(obs) == info["n_agents"]
    assert all(o.shape == (info["obs_shape"],) for o in obs)
    assert state.shape == (info["state_shape"],)


def test_reset_with_seed_is_deterministic():
    a = SkirmishEnv("zerg_5_vs_5")
    b = SkirmishEnv("zerg_5_vs_5")
    obs_a, state_a = a.reset(seed=11)
    obs_b, state_b = b.reset(seed=11)
    assert all(np.array_equal(x, y) for x, y in zip(obs_a, obs_b))
    assert np.array_equal(state_a, state_b)


def test_unseeded_resets_advance():
    env = SkirmishEnv("zerg_5_vs_5", seed=5)
    _, state_a = env.reset()
    _, state_b = env.reset()
    assert not np.array_equal(state_a, state_b)


def test_step_rejects_wrong_action_count():
    env = SkirmishEnv("terran_5_vs_5")
    env.reset(seed=0)
    with pytest.raises(SkirmishError, match="expected 5 actions"):
        env.step([1, 1, 1])


def test_interaction_before_reset_raises():
    env = SkirmishEnv("terran_5_vs_5")
    with pytest.raises(SkirmishError, match="reset"):
        env.get_obs()
    with pytest.raises(SkirmishError, match="reset"):
        env.step([1] * 5)


def test_unknown_map_surfaces_core_error():
    with pytest.raises(ScenarioError, match="unknown scenario"):
        SkirmishEnv("orbital_platform")


def test_avail_actions_shapes_and_noop_rule():
    env = SkirmishEnv("terran_5_vs_5")
    env.reset(seed=2)
    avail = env.get_avail_actions()
    assert len(avail) == 5
    for mask in avail:
        assert len(mask) == env.get_total_actions()
        assert mask[0] == 0  # living agents may not no-op
        assert mask[1] == 1  # stop always available


def test_epo_override_through_binding():
    env = SkirmishEnv("epo_zerg_6_vs_5", epo_p=1.0)
    assert env.spec.epo_p == 1.0
    assert not env.spec.avail_mask_enabled
    obs, _ = env.reset(seed=0)
    assert len(obs) == 6


def test_layout_manifests_exposed():
    env = SkirmishEnv("protoss_5_vs_5")
    manifests = env.get_layout_manifests()
    assert manifests["observation"]["size"] == env.get_obs_size()
    assert manifests["state"]["size"] == env.get_state_size()
    assert manifests["observation"]["indices"]["own/health"] == 0


def test_env_info_matches_scenario_table():
    env = SkirmishEnv("zerg_20_vs_23")
    info = env.get_env_info()
    assert info["n_agents"] == 20
    assert info["n_actions"] == 6 + 23
    assert info["episode_limit"] == 200
