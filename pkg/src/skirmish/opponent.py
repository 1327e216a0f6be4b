"""Built-in enemy controllers.

The default "pursuit" controller mirrors an aggressive scripted game AI:
fighters shoot the nearest living ally in range and otherwise chase the
nearest ally anywhere on the map, healers support the most damaged teammate
or drift toward the team centroid, and suicide units close to contact and
detonate. The pursuit is deliberately naive (it can be lured out of
position); the challenge is meant to come from scenario generation, not the
opponent. Controllers are pure functions of (world, rng) so replays
reproduce them exactly.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Callable

from . import actions as act
from .errors import ConfigError

if TYPE_CHECKING:
    import numpy as np

    from .engine import UnitState, WorldState

OpponentFn = Callable[["WorldState", "np.random.Generator"], list[int]]

_OPPONENTS: dict[str, OpponentFn] = {}


def register_opponent(name: str, fn: OpponentFn) -> None:
    if name in _OPPONENTS:
        raise ConfigError(f"opponent {name!r} already registered")
    _OPPONENTS[name] = fn


def get_opponent(name: str) -> OpponentFn:
    try:
        return _OPPONENTS[name]
    except KeyError:
        raise ConfigError(f"unknown opponent {name!r}") from None


def _nearest(unit: "UnitState", candidates: list[tuple[int, "UnitState"]]) -> tuple[int, float]:
    """(index, squared distance) of the closest candidate; ties pick the lowest index."""
    best_idx = -1
    best_d2 = math.inf
    for idx, other in candidates:
        d2 = (other.x - unit.x) ** 2 + (other.y - unit.y) ** 2
        if d2 < best_d2:
            best_idx, best_d2 = idx, d2
    return best_idx, best_d2


def move_toward(world: "WorldState", unit: "UnitState", tx: float, ty: float) -> int:
    """The cardinal move that most reduces distance to (tx, ty), or stop."""
    best = act.STOP
    best_d2 = (tx - unit.x) ** 2 + (ty - unit.y) ** 2
    speed = unit.spec.move_speed
    for action, (dx, dy) in act.MOVE_DELTAS.items():
        nx = min(max(unit.x + dx * speed, 0.0), world.map_width)
        ny = min(max(unit.y + dy * speed, 0.0), world.map_height)
        d2 = (tx - nx) ** 2 + (ty - ny) ** 2
        if d2 < best_d2 - 1e-12:
            best, best_d2 = action, d2
    return best


def move_away(world: "WorldState", unit: "UnitState", tx: float, ty: float) -> int:
    """The cardinal move that most increases distance to (tx, ty)."""
    best = act.STOP
    best_d2 = (tx - unit.x) ** 2 + (ty - unit.y) ** 2
    speed = unit.spec.move_speed
    for action, (dx, dy) in act.MOVE_DELTAS.items():
        nx = min(max(unit.x + dx * speed, 0.0), world.map_width)
        ny = min(max(unit.y + dy * speed, 0.0), world.map_height)
        d2 = (tx - nx) ** 2 + (ty - ny) ** 2
        if d2 > best_d2 + 1e-12:
            best, best_d2 = action, d2
    return best


def pursuit(world: "WorldState", rng) -> list[int]:
    """One action per enemy unit (no-op for the dead)."""
    living_allies = [(i, u) for i, u in enumerate(world.allies) if u.alive]
    out: list[int] = []
    for unit in world.enemies:
        if not unit.alive:
            out.append(act.NO_OP)
            continue
        if not living_allies:
            out.append(act.STOP)
            continue
        if unit.spec.is_healer:
            out.append(_healer_action(world, unit))
            continue
        target, d2 = _nearest(unit, living_allies)
        reach = unit.spec.attack_range
        if d2 <= reach * reach:
            # The engine resolves damage only when the cooldown is ready; an
            # early attack command just holds the target.
            out.append(act.attack(target))
        else:
            ally = world.units[target]
            out.append(move_toward(world, unit, ally.x, ally.y))
    return out


def _healer_action(world: "WorldState", unit: "UnitState") -> int:
    """Heal the nearest damaged teammate in range, else follow the centroid."""
    reach2 = unit.spec.attack_range ** 2
    best_slot = -1
    best_d2 = math.inf
    cx = cy = 0.0
    living = 0
    for slot, mate in enumerate(world.enemies):
        if not mate.alive:
            continue
        living += 1
        cx += mate.x
        cy += mate.y
        if mate is unit or mate.health >= mate.spec.max_health:
            continue
        d2 = (mate.x - unit.x) ** 2 + (mate.y - unit.y) ** 2
        if d2 <= reach2 and d2 < best_d2:
            best_slot, best_d2 = slot, d2
    if best_slot >= 0:
        return act.heal(best_slot)
    if living:
        return move_toward(world, unit, cx / living, cy / living)
    return act.STOP


def passive(world: "WorldState", rng) -> list[int]:
    """Inert opponent for tests and hand-computed timelines."""
    return [act.NO_OP if not u.alive else act.STOP for u in world.enemies]


register_opponent("pursuit", pursuit)
register_opponent("passive", passive)
