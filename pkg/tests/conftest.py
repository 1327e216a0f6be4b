"""Shared scenario builders and scripted test opponents."""

from __future__ import annotations

import pytest

from skirmish import actions as act
from skirmish.errors import ConfigError
from skirmish.opponent import _healer_action, register_opponent
from skirmish.scenario import ScenarioSpec, SpawnKind, TeamGen, default_race_config
from skirmish.units import default_stat_table


def _heal_support_after_3(world, rng):
    """Healers support the wounded once step >= 3; everyone else holds."""
    out = []
    for unit in world.enemies:
        if not unit.alive:
            out.append(act.NO_OP)
        elif unit.spec.is_healer and world.step >= 3:
            out.append(_healer_action(world, unit))
        else:
            out.append(act.STOP)
    return out


def _heal_support(world, rng):
    out = []
    for unit in world.enemies:
        if not unit.alive:
            out.append(act.NO_OP)
        elif unit.spec.is_healer:
            out.append(_healer_action(world, unit))
        else:
            out.append(act.STOP)
    return out


def _flee_east(world, rng):
    return [act.NO_OP if not u.alive else act.MOVE_EAST for u in world.enemies]


for _name, _fn in (
    ("heal_support_after_3", _heal_support_after_3),
    ("heal_support", _heal_support),
    ("flee_east", _flee_east),
):
    try:
        register_opponent(_name, _fn)
    except ConfigError:
        pass


@pytest.fixture(scope="session")
def table():
    return default_stat_table()


def fixed_spec(
    name: str,
    ally: list[tuple[str, tuple[float, float]]],
    enemy: list[tuple[str, tuple[float, float]]],
    race: str = "terran",
    map_dims: tuple[float, float] = (32.0, 32.0),
    **overrides,
) -> ScenarioSpec:
    """A fully pinned scenario: fixed types and fixed spawn positions."""
    return ScenarioSpec(
        name=name,
        race=default_race_config(race),
        n_allies=len(ally),
        n_enemies=len(enemy),
        spawn=SpawnKind.fixed([p for _, p in ally], [p for _, p in enemy]),
        team=TeamGen(
            kind="fixed",
            ally_types=tuple(t for t, _ in ally),
            enemy_types=tuple(t for t, _ in enemy),
        ),
        map_width=map_dims[0],
        map_height=map_dims[1],
        **overrides,
    )


def marine_duel(gap: float = 5.0, **overrides) -> ScenarioSpec:
    """One ally marine facing one enemy marine at the given gap."""
    return fixed_spec(
        "marine_duel",
        [("marine", (10.0, 16.0))],
        [("marine", (10.0 + gap, 16.0))],
        **overrides,
    )


def marine_line(n_allies: int = 5, n_enemies: int = 5, **overrides) -> ScenarioSpec:
    """Marine-only teams on two facing vertical lines."""
    return fixed_spec(
        "marine_line",
        [("marine", (8.0, 12.0 + 2.0 * i)) for i in range(n_allies)],
        [("marine", (24.0, 12.0 + 2.0 * i)) for i in range(n_enemies)],
        **overrides,
    )
