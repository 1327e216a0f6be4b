"""SMAC-style environment wrapper around the skirmish simulator.

Existing multi-agent RL harnesses that drive a SMAC environment port to the
simulator by changing the import path: the method names (``reset``,
``step``, ``get_obs``, ``get_state``, ``get_avail_actions``,
``get_env_info``) and their shapes follow the familiar convention. The
wrapper adds zero behaviour of its own; every call passes straight through
to the core package, and vectors are produced under the core's published
feature layouts.
"""

from __future__ import annotations

import numpy as np

from skirmish import (
    ScenarioSpec,
    action_mask,
    build_observation,
    build_state,
    find_scenario,
    init_world,
    observation_layout,
    sample_instance,
    state_layout,
    step as engine_step,
)
from skirmish.errors import SkirmishError
from skirmish.units import StatTable, load_stat_table

__version__ = "0.1.0"
__all__ = ["SkirmishEnv"]


class SkirmishEnv:
    """One environment handle: one episode stream, no shared state.

    Parameters mirror the scenario registry: pick a map by name, optionally
    override the stochastic-visibility probability or the availability
    mask. ``reset(seed)`` starts a fresh episode; without an explicit seed,
    episodes continue from ``seed + 1`` of the previous one.
    """

    def __init__(
        self,
        map_name: str = "terran_5_vs_5",
        seed: int = 0,
        epo_p: float | None = ...,
        avail_mask: bool | None = None,
        opponent: str | None = None,
        stat_table_path: str | None = None,
        extra_scenarios: list[ScenarioSpec] | None = None,
    ):
        spec = find_scenario(map_name, extra_scenarios or [])
        overrides = {}
        if epo_p is not ...:
            overrides["epo_p"] = epo_p
        if avail_mask is not None:
            overrides["avail_mask_enabled"] = avail_mask
        self.spec = spec.with_overrides(**overrides) if overrides else spec
        self.opponent = opponent
        self.stat_table: StatTable | None = (
            load_stat_table(stat_table_path) if stat_table_path else None
        )
        self._seed = seed
        self._world = None
        self._obs_layout = None
        self._state_layout = None

    # -- episode control ----------------------------------------------------

    def reset(self, seed: int | None = None):
        """Start an episode; returns (per-agent observations, state)."""
        if seed is None:
            seed = self._seed if self._world is None else self._seed + 1
        self._seed = seed
        instance = sample_instance(self.spec, seed)
        self._world = init_world(
            instance, seed, stat_table=self.stat_table, opponent=self.opponent
        )
        if self._obs_layout is None:
            self._obs_layout = observation_layout(self._world)
            self._state_layout = state_layout(self._world)
        return self.get_obs(), self.get_state()

    def step(self, actions):
        """Advance one tick; returns (reward, terminated, info)."""
        world = self._require_world()
        actions = list(actions)
        if len(actions) != world.n_allies:
            raise SkirmishError(
                f"expected {world.n_allies} actions, got {len(actions)}"
            )
        result = engine_step(world, [int(a) for a in actions])
        info = {"won": result.won, "invalid_actions": result.events.invalid_actions}
        return result.reward, result.terminated, info

    def close(self):
        self._world = None

    # -- observations and state ----------------------------------------------

    def get_obs(self):
        world = self._require_world()
        return [
            build_observation(world, i, layout=self._obs_layout)
            for i in range(world.n_allies)
        ]

    def get_obs_agent(self, agent_id: int) -> np.ndarray:
        return build_observation(self._require_world(), agent_id, layout=self._obs_layout)

    def get_obs_size(self) -> int:
        self._require_layouts()
        return self._obs_layout.size

    def get_state(self) -> np.ndarray:
        return build_state(self._require_world(), layout=self._state_layout)

    def get_state_size(self) -> int:
        self._require_layouts()
        return self._state_layout.size

    def get_layout_manifests(self) -> dict:
        """The core's machine-readable index layouts for both vector kinds."""
        self._require_layouts()
        return {
            "observation": self._obs_layout.manifest(),
            "state": self._state_layout.manifest(),
        }

    # -- actions ---------------------------------------------------------------

    def get_avail_actions(self):
        world = self._require_world()
        return [
            [int(v) for v in action_mask(world, i)] for i in range(world.n_allies)
        ]

    def get_avail_agent_actions(self, agent_id: int):
        return [int(v) for v in action_mask(self._require_world(), agent_id)]

    def get_total_actions(self) -> int:
        return 6 + self.spec.n_enemies

    # -- metadata ---------------------------------------------------------------

    def get_env_info(self) -> dict:
        self._require_layouts()
        return {
            "n_agents": self.spec.n_allies,
            "n_actions": self.get_total_actions(),
            "obs_shape": self._obs_layout.size,
            "state_shape": self._state_layout.size,
            "episode_limit": self.spec.episode_limit,
        }

    # -- internals ---------------------------------------------------------------

    def _require_world(self):
        if self._world is None:
            raise SkirmishError("call reset() before interacting with the environment")
        return self._world

    def _require_layouts(self):
        if self._obs_layout is None:
            # Layouts depend only on the spec; build them from a throwaway
            # episode without disturbing the handle's seed sequence.
            instance = sample_instance(self.spec, 0)
            world = init_world(instance, 0, stat_table=self.stat_table)
            self._obs_layout = observation_layout(world)
            self._state_layout = state_layout(world)
