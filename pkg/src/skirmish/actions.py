"""Flat integer action space shared by the engine, policies, and bindings.

Per agent the space is ``[no_op, stop, move_north, move_south, move_east,
move_west, target_0 .. target_{n_enemies-1}]``. Target slot ``k`` means
attack enemy ``k`` for fighting units and heal ally ``k`` for the healer
type (slots at or beyond the ally count are never available to healers).
Suicide units detonate via their attack slot.
"""

from __future__ import annotations

NO_OP = 0
STOP = 1
MOVE_NORTH = 2
MOVE_SOUTH = 3
MOVE_EAST = 4
MOVE_WEST = 5
TARGET_OFFSET = 6

# Map-frame deltas, north = +y.
MOVE_DELTAS = {
    MOVE_NORTH: (0.0, 1.0),
    MOVE_SOUTH: (0.0, -1.0),
    MOVE_EAST: (1.0, 0.0),
    MOVE_WEST: (-1.0, 0.0),
}

_NAMES = ["no_op", "stop", "move_north", "move_south", "move_east", "move_west"]


def n_actions(n_enemies: int) -> int:
    return TARGET_OFFSET + n_enemies


def attack(enemy_index: int) -> int:
    return TARGET_OFFSET + enemy_index


def heal(ally_index: int) -> int:
    return TARGET_OFFSET + ally_index


def target_of(action: int) -> int:
    """Target slot of an attack/heal action (undefined for other actions)."""
    return action - TARGET_OFFSET


def is_move(action: int) -> bool:
    return MOVE_NORTH <= action <= MOVE_WEST


def is_target(action: int, n_enemies: int) -> bool:
    return TARGET_OFFSET <= action < TARGET_OFFSET + n_enemies


def action_name(action: int, healer: bool = False) -> str:
    if action < TARGET_OFFSET:
        return _NAMES[action]
    verb = "heal" if healer else "attack"
    return f"{verb}_{action - TARGET_OFFSET}"


def action_names(n_enemies: int) -> list[str]:
    """Generic names for one agent's action space (attack naming)."""
    return _NAMES + [f"attack_{k}" for k in range(n_enemies)]
