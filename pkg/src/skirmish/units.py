"""Unit stat table: load, validate, and index unit type definitions.

The table ships as a versioned YAML file (see ``data/units_v1.yaml`` for the
schema) and every loaded table is checked against the invariants the rest of
the simulator assumes:

* every attack range is at least the minimum-range floor of 2,
* every sight range strictly exceeds the attack range,
* there is exactly one healer type (terran) and one suicide-splash type (zerg).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import yaml

from .errors import StatTableError

RACES = ("protoss", "terran", "zerg")
MIN_ATTACK_RANGE = 2.0


@dataclass(frozen=True)
class UnitTypeSpec:
    id: str
    race: str
    max_health: float
    max_shield: float
    attack_damage: float
    attack_range: float
    sight_range: float
    move_speed: float
    attack_cooldown: int
    is_healer: bool = False
    is_suicide_splash: bool = False
    splash_radius: float = 0.0
    heal_per_step: float = 0.0

    @property
    def max_pool(self) -> float:
        return self.max_health + self.max_shield


@dataclass(frozen=True)
class StatTable:
    version: int
    shield_regen_delay: int
    shield_regen_rate: float
    types: tuple[UnitTypeSpec, ...]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "index", {t.id: i for i, t in enumerate(self.types)})

    def __len__(self) -> int:
        return len(self.types)

    def spec(self, type_id: str) -> UnitTypeSpec:
        try:
            return self.types[self.index[type_id]]
        except KeyError:
            raise StatTableError(f"unknown unit type {type_id!r}") from None

    def type_index(self, type_id: str) -> int:
        try:
            return self.index[type_id]
        except KeyError:
            raise StatTableError(f"unknown unit type {type_id!r}") from None

    def race_types(self, race: str) -> list[str]:
        return [t.id for t in self.types if t.race == race]


_REQUIRED = (
    "race",
    "max_health",
    "max_shield",
    "attack_damage",
    "attack_range",
    "sight_range",
    "move_speed",
    "attack_cooldown",
)


def _parse_type(type_id: str, raw: dict) -> UnitTypeSpec:
    if not isinstance(raw, dict):
        raise StatTableError(f"unit type {type_id!r}: expected a mapping")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise StatTableError(f"unit type {type_id!r}: missing fields {missing}")
    if raw["race"] not in RACES:
        raise StatTableError(f"unit type {type_id!r}: unknown race {raw['race']!r}")
    spec = UnitTypeSpec(
        id=type_id,
        race=raw["race"],
        max_health=float(raw["max_health"]),
        max_shield=float(raw["max_shield"]),
        attack_damage=float(raw["attack_damage"]),
        attack_range=float(raw["attack_range"]),
        sight_range=float(raw["sight_range"]),
        move_speed=float(raw["move_speed"]),
        attack_cooldown=int(raw["attack_cooldown"]),
        is_healer=bool(raw.get("is_healer", False)),
        is_suicide_splash=bool(raw.get("is_suicide_splash", False)),
        splash_radius=float(raw.get("splash_radius", 0.0)),
        heal_per_step=float(raw.get("heal_per_step", 0.0)),
    )
    validate_type(spec)
    return spec


def validate_type(spec: UnitTypeSpec) -> None:
    if spec.attack_range < MIN_ATTACK_RANGE:
        raise StatTableError(
            f"unit type {spec.id!r}: attack_range {spec.attack_range} below the "
            f"minimum-range floor of {MIN_ATTACK_RANGE}"
        )
    if spec.sight_range <= spec.attack_range:
        raise StatTableError(
            f"unit type {spec.id!r}: sight_range must exceed attack_range"
        )
    if spec.max_health <= 0:
        raise StatTableError(f"unit type {spec.id!r}: max_health must be positive")
    if spec.max_shield < 0 or spec.move_speed <= 0 or spec.attack_cooldown < 0:
        raise StatTableError(f"unit type {spec.id!r}: negative stat")
    if spec.is_healer and spec.heal_per_step <= 0:
        raise StatTableError(f"healer type {spec.id!r}: heal_per_step must be positive")
    if spec.is_healer and spec.attack_damage != 0:
        raise StatTableError(f"healer type {spec.id!r}: healers cannot attack")
    if spec.is_suicide_splash and spec.splash_radius <= 0:
        raise StatTableError(f"suicide type {spec.id!r}: splash_radius must be positive")


def _validate_table(table: StatTable) -> None:
    healers = [t for t in table.types if t.is_healer]
    suicides = [t for t in table.types if t.is_suicide_splash]
    if len(healers) != 1 or healers[0].race != "terran":
        raise StatTableError("stat table must define exactly one healer type (terran)")
    if len(suicides) != 1 or suicides[0].race != "zerg":
        raise StatTableError("stat table must define exactly one suicide-splash type (zerg)")
    for race in RACES:
        if len(table.race_types(race)) != 3:
            raise StatTableError(f"stat table must define exactly 3 {race} types")
    if table.shield_regen_delay < 0 or table.shield_regen_rate < 0:
        raise StatTableError("shield regeneration parameters must be non-negative")


def parse_stat_table(raw: dict) -> StatTable:
    """Parse and validate an already-loaded YAML mapping."""
    if not isinstance(raw, dict) or "types" not in raw or "version" not in raw:
        raise StatTableError("stat table must be a mapping with 'version' and 'types'")
    types = tuple(
        _parse_type(type_id, spec) for type_id, spec in sorted(raw["types"].items())
    )
    table = StatTable(
        version=int(raw["version"]),
        shield_regen_delay=int(raw.get("shield_regen_delay", 5)),
        shield_regen_rate=float(raw.get("shield_regen_rate", 2.0)),
        types=types,
    )
    _validate_table(table)
    return table


def load_stat_table(path: str | None = None) -> StatTable:
    """Load the stat table from ``path``, or the bundled v1 table."""
    if path is None:
        source = importlib.resources.files("skirmish.data").joinpath("units_v1.yaml")
        text = source.read_text(encoding="utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise StatTableError(f"stat table is not valid YAML: {exc}") from exc
    return parse_stat_table(raw)


_default_table: StatTable | None = None


def default_stat_table() -> StatTable:
    """The bundled table, loaded once per process."""
    global _default_table
    if _default_table is None:
        _default_table = load_stat_table()
    return _default_table
