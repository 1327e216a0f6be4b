"""Per-agent observations, the global state, and feature masking.

Both vector kinds carry a published index layout: every position is named,
exported in a machine-readable manifest, and masks are defined purely in
terms of the layout so external tooling can interpret vectors bit-exactly.

Observation (one agent): an own block (health, shield, type one-hot,
position normalized by the map dimensions, facing), one block per other
ally and per enemy (visible flag, health, shield, relative position and
distance normalized by the observer's sight range), and four
movement-availability bits. Entities outside sight range, dead, or hidden
by the stochastic-visibility protocol contribute an all-zero block. A dead
observer gets an all-zero vector.

State: per-unit blocks (health, shield, type one-hot, absolute normalized
position) for every unit, a last-action one-hot per ally, and every unit's
facing direction. The state is never sight-gated.

Masks: thirteen named feature masks zero selected layout indices. Field
masks act on the health/shield/position/distance/last-action features of
one team; in observations the observing agent's own block is exempt. The
``everything`` mask instead zeroes all entity blocks (own included) plus
action features, leaving only movement bits and any appended timestep or
agent-id channels. ``nothing`` is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import actions as act
from .engine import WorldState
from .epo import EpoVisibilityTable
from .errors import LayoutError

ALLY_MASK_FIELDS = ("health", "shield", "x", "y", "distance", "actions")
ENEMY_MASK_FIELDS = ("health", "shield", "x", "y", "distance")


@dataclass(frozen=True)
class FeatureRef:
    """One named vector index."""

    name: str
    index: int
    team: str | None  # "ally" | "enemy" | None (movement bits, extras)
    own: bool         # observation own-block entries
    field: str        # health, shield, x, y, distance, visible, type,
                      # facing, move, actions, timestep, agent_id


@dataclass(frozen=True)
class FeatureMask:
    """A named set of (team, field) flags; ``full_blocks`` zeroes whole blocks."""

    id: str
    ally: frozenset = dc_field(default_factory=frozenset)
    enemy: frozenset = dc_field(default_factory=frozenset)
    full_blocks: bool = False


def _mask(mid: str, ally=(), enemy=(), full_blocks=False) -> FeatureMask:
    return FeatureMask(mid, frozenset(ally), frozenset(enemy), full_blocks)


_DIST = ("x", "y", "distance")

MASKS: dict[str, FeatureMask] = {
    m.id: m
    for m in (
        _mask("everything", ALLY_MASK_FIELDS, ENEMY_MASK_FIELDS, full_blocks=True),
        _mask("nothing"),
        _mask("health_ally", ally=("health",)),
        _mask("shield_ally", ally=("shield",)),
        _mask("distance_ally", ally=_DIST),
        _mask("health_and_shield_ally", ally=("health", "shield")),
        _mask("actions_only", ally=("actions",)),
        _mask("all_except_actions", ally=("health", "shield") + _DIST),
        _mask("ally_all", ally=ALLY_MASK_FIELDS),
        _mask("health_enemy", enemy=("health",)),
        _mask("shield_enemy", enemy=("shield",)),
        _mask("distance_enemy", enemy=_DIST),
        _mask("enemy_all", enemy=ENEMY_MASK_FIELDS),
    )
}

MASK_IDS = tuple(MASKS)


class _Layout:
    """Shared plumbing for the two layout kinds."""

    entries: list[FeatureRef]

    def __init__(self):
        self.entries = []
        self._zero_cache: dict = {}

    def _add(self, name: str, team: str | None, own: bool, field: str) -> None:
        self.entries.append(FeatureRef(name, len(self.entries), team, own, field))

    @property
    def size(self) -> int:
        return len(self.entries)

    def index_of(self, name: str) -> int:
        for e in self.entries:
            if e.name == name:
                return e.index
        raise LayoutError(f"no feature named {name!r}")

    def manifest(self) -> dict:
        """Machine-readable name -> index map plus layout parameters."""
        return {
            "kind": self.kind,
            "size": self.size,
            "params": self.params(),
            "indices": {e.name: e.index for e in self.entries},
        }

    def zero_indices(self, mask: FeatureMask, own_exempt: bool = True) -> np.ndarray:
        """Indices zeroed by ``mask``; cached per (mask, exemption) pair."""
        key = (mask.id, own_exempt)
        cached = self._zero_cache.get(key)
        if cached is None:
            cached = np.array(
                [e.index for e in self.entries if _zeroed(e, mask, own_exempt)],
                dtype=np.intp,
            )
            self._zero_cache[key] = cached
        return cached


_ENTITY_FIELDS = frozenset(
    {"health", "shield", "x", "y", "distance", "visible", "type", "facing"}
)


def _zeroed(e: FeatureRef, mask: FeatureMask, own_exempt: bool) -> bool:
    if e.team is None:
        return False  # movement bits, timestep, agent id: never masked
    if mask.full_blocks:
        return e.field in _ENTITY_FIELDS or e.field == "actions"
    if e.own and own_exempt:
        return False
    flags = mask.ally if e.team == "ally" else mask.enemy
    if e.field == "actions":
        return "actions" in flags and e.team == "ally"
    if e.field in ("health", "shield", "x", "y", "distance"):
        return e.field in flags
    return False  # visible, type, facing


class ObservationLayout(_Layout):
    kind = "observation"

    def __init__(
        self,
        n_allies: int,
        n_enemies: int,
        n_types: int,
        type_names: tuple[str, ...] | None = None,
        include_last_actions: bool = False,
        include_timestep: bool = False,
        include_agent_id: bool = False,
    ):
        super().__init__()
        self.n_allies = n_allies
        self.n_enemies = n_enemies
        self.n_types = n_types
        self.type_names = tuple(type_names) if type_names else tuple(
            f"type_{i}" for i in range(n_types)
        )
        self.include_last_actions = include_last_actions
        self.include_timestep = include_timestep
        self.include_agent_id = include_agent_id
        self.n_actions = act.n_actions(n_enemies)

        self._add("own/health", "ally", True, "health")
        self._add("own/shield", "ally", True, "shield")
        for t in self.type_names:
            self._add(f"own/{t}", "ally", True, "type")
        self._add("own/x", "ally", True, "x")
        self._add("own/y", "ally", True, "y")
        self._add("own/facing_x", "ally", True, "facing")
        self._add("own/facing_y", "ally", True, "facing")
        for slot in range(n_allies - 1):
            p = f"ally{slot}"
            self._add(f"{p}/visible", "ally", False, "visible")
            self._add(f"{p}/health", "ally", False, "health")
            self._add(f"{p}/shield", "ally", False, "shield")
            self._add(f"{p}/x", "ally", False, "x")
            self._add(f"{p}/y", "ally", False, "y")
            self._add(f"{p}/distance", "ally", False, "distance")
        for slot in range(n_enemies):
            p = f"enemy{slot}"
            self._add(f"{p}/visible", "enemy", False, "visible")
            self._add(f"{p}/health", "enemy", False, "health")
            self._add(f"{p}/shield", "enemy", False, "shield")
            self._add(f"{p}/x", "enemy", False, "x")
            self._add(f"{p}/y", "enemy", False, "y")
            self._add(f"{p}/distance", "enemy", False, "distance")
        for direction in ("north", "south", "east", "west"):
            self._add(f"move/{direction}", None, False, "move")
        if include_last_actions:
            for slot in range(n_allies - 1):
                for a in range(self.n_actions):
                    self._add(f"ally{slot}/last_action_{a}", "ally", False, "actions")
        if include_timestep:
            self._add("extra/timestep", None, False, "timestep")
        if include_agent_id:
            self._add("extra/agent_id", None, False, "agent_id")

    def params(self) -> dict:
        return {
            "n_allies": self.n_allies,
            "n_enemies": self.n_enemies,
            "n_types": self.n_types,
            "type_names": list(self.type_names),
            "include_last_actions": self.include_last_actions,
            "include_timestep": self.include_timestep,
            "include_agent_id": self.include_agent_id,
        }

    @staticmethod
    def from_params(params: dict) -> "ObservationLayout":
        p = dict(params)
        p["type_names"] = tuple(p.get("type_names") or ())
        return ObservationLayout(**p)


class StateLayout(_Layout):
    kind = "state"

    def __init__(
        self,
        n_allies: int,
        n_enemies: int,
        n_types: int,
        type_names: tuple[str, ...] | None = None,
        include_timestep: bool = False,
    ):
        super().__init__()
        self.n_allies = n_allies
        self.n_enemies = n_enemies
        self.n_types = n_types
        self.type_names = tuple(type_names) if type_names else tuple(
            f"type_{i}" for i in range(n_types)
        )
        self.include_timestep = include_timestep
        self.n_actions = act.n_actions(n_enemies)

        for u in range(n_allies + n_enemies):
            team = "ally" if u < n_allies else "enemy"
            p = f"{team}{u if u < n_allies else u - n_allies}"
            self._add(f"{p}/health", team, False, "health")
            self._add(f"{p}/shield", team, False, "shield")
            for t in self.type_names:
                self._add(f"{p}/{t}", team, False, "type")
            self._add(f"{p}/x", team, False, "x")
            self._add(f"{p}/y", team, False, "y")
        for a in range(n_allies):
            for k in range(self.n_actions):
                self._add(f"ally{a}/last_action_{k}", "ally", False, "actions")
        for u in range(n_allies + n_enemies):
            team = "ally" if u < n_allies else "enemy"
            p = f"{team}{u if u < n_allies else u - n_allies}"
            self._add(f"{p}/facing_x", team, False, "facing")
            self._add(f"{p}/facing_y", team, False, "facing")
        if include_timestep:
            self._add("extra/timestep", None, False, "timestep")

    def params(self) -> dict:
        return {
            "n_allies": self.n_allies,
            "n_enemies": self.n_enemies,
            "n_types": self.n_types,
            "type_names": list(self.type_names),
            "include_timestep": self.include_timestep,
        }

    @staticmethod
    def from_params(params: dict) -> "StateLayout":
        p = dict(params)
        p["type_names"] = tuple(p.get("type_names") or ())
        return StateLayout(**p)


_layout_cache: dict = {}


def observation_layout(world: WorldState, **extras) -> ObservationLayout:
    key = (
        "obs",
        world.n_allies,
        world.n_enemies,
        len(world.stat_table),
        tuple(sorted(extras.items())),
    )
    layout = _layout_cache.get(key)
    if layout is None:
        layout = ObservationLayout(
            world.n_allies,
            world.n_enemies,
            len(world.stat_table),
            type_names=tuple(t.id for t in world.stat_table.types),
            **extras,
        )
        _layout_cache[key] = layout
    return layout


def state_layout(world: WorldState, **extras) -> StateLayout:
    key = (
        "state",
        world.n_allies,
        world.n_enemies,
        len(world.stat_table),
        tuple(sorted(extras.items())),
    )
    layout = _layout_cache.get(key)
    if layout is None:
        layout = StateLayout(
            world.n_allies,
            world.n_enemies,
            len(world.stat_table),
            type_names=tuple(t.id for t in world.stat_table.types),
            **extras,
        )
        _layout_cache[key] = layout
    return layout


def build_observation(
    world: WorldState,
    agent_index: int,
    epo_table: EpoVisibilityTable | None = None,
    layout: ObservationLayout | None = None,
) -> np.ndarray:
    """One agent's observation vector under the given layout."""
    if layout is None:
        layout = observation_layout(world)
    out = np.zeros(layout.size, dtype=np.float64)
    unit = world.units[agent_index]
    if not unit.alive:
        return out
    if epo_table is None:
        epo_table = world.epo

    spec = unit.spec
    sight = spec.sight_range
    sight2 = sight * sight
    pos = 0
    out[pos] = unit.health / spec.max_health
    pos += 1
    out[pos] = unit.shield / spec.max_shield if spec.max_shield > 0 else 0.0
    pos += 1
    out[pos + unit.type_index] = 1.0
    pos += layout.n_types
    out[pos] = unit.x / world.map_width
    out[pos + 1] = unit.y / world.map_height
    out[pos + 2] = unit.facing_x
    out[pos + 3] = unit.facing_y
    pos += 4

    last_actions: list[tuple[int, int]] = []  # (slot, action) when configured
    slot = 0
    for j, other in enumerate(world.allies):
        if j == agent_index:
            continue
        if other.alive:
            dx = other.x - unit.x
            dy = other.y - unit.y
            d2 = dx * dx + dy * dy
            if d2 <= sight2:
                out[pos] = 1.0
                out[pos + 1] = other.health / other.spec.max_health
                out[pos + 2] = (
                    other.shield / other.spec.max_shield if other.spec.max_shield > 0 else 0.0
                )
                out[pos + 3] = dx / sight
                out[pos + 4] = dy / sight
                out[pos + 5] = (d2 ** 0.5) / sight
                if layout.include_last_actions:
                    last_actions.append((slot, other.last_action))
        pos += 6
        slot += 1
    for j, enemy in enumerate(world.enemies):
        if enemy.alive and (epo_table is None or epo_table.visible(agent_index, j)):
            dx = enemy.x - unit.x
            dy = enemy.y - unit.y
            d2 = dx * dx + dy * dy
            if d2 <= sight2:
                out[pos] = 1.0
                out[pos + 1] = enemy.health / enemy.spec.max_health
                out[pos + 2] = (
                    enemy.shield / enemy.spec.max_shield if enemy.spec.max_shield > 0 else 0.0
                )
                out[pos + 3] = dx / sight
                out[pos + 4] = dy / sight
                out[pos + 5] = (d2 ** 0.5) / sight
        pos += 6
    out[pos : pos + 4] = 1.0  # moves stay available (clipped at the edge)
    pos += 4
    if layout.include_last_actions:
        for slot_idx, action in last_actions:
            out[pos + slot_idx * layout.n_actions + action] = 1.0
        pos += (layout.n_allies - 1) * layout.n_actions
    if layout.include_timestep:
        out[pos] = world.step / world.episode_limit
        pos += 1
    if layout.include_agent_id:
        out[pos] = (agent_index + 1) / layout.n_allies
    return out


def build_observations(world: WorldState, layout: ObservationLayout | None = None) -> np.ndarray:
    """All agents' observations, stacked (n_allies, obs_dim)."""
    if layout is None:
        layout = observation_layout(world)
    return np.stack(
        [build_observation(world, i, layout=layout) for i in range(world.n_allies)]
    )


def build_state(world: WorldState, layout: StateLayout | None = None) -> np.ndarray:
    """The centralised state vector (no sight gating)."""
    if layout is None:
        layout = state_layout(world)
    out = np.zeros(layout.size, dtype=np.float64)
    block = 4 + layout.n_types
    pos = 0
    for unit in world.units:
        if unit.alive:
            out[pos] = unit.health / unit.spec.max_health
            out[pos + 1] = (
                unit.shield / unit.spec.max_shield if unit.spec.max_shield > 0 else 0.0
            )
            out[pos + 2 + unit.type_index] = 1.0
            out[pos + 2 + layout.n_types] = unit.x / world.map_width
            out[pos + 3 + layout.n_types] = unit.y / world.map_height
        pos += block
    for ally in world.allies:
        out[pos + ally.last_action] = 1.0
        pos += layout.n_actions
    for unit in world.units:
        if unit.alive:
            out[pos] = unit.facing_x
            out[pos + 1] = unit.facing_y
        pos += 2
    if layout.include_timestep:
        out[pos] = world.step / world.episode_limit
    return out


def apply_mask(
    vector: np.ndarray,
    layout: _Layout,
    mask: FeatureMask | str,
    own_exempt: bool = True,
) -> np.ndarray:
    """Zero exactly the indices the mask selects; returns a copy."""
    if isinstance(mask, str):
        try:
            mask = MASKS[mask]
        except KeyError:
            raise LayoutError(f"unknown mask {mask!r}") from None
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape[-1] != layout.size:
        raise LayoutError(
            f"vector length {vector.shape[-1]} does not match layout size {layout.size}"
        )
    out = vector.copy()
    out[..., layout.zero_indices(mask, own_exempt)] = 0.0
    return out
