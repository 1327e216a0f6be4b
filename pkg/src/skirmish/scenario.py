"""Procedural scenario generation.

Team compositions are drawn per episode from a fixed per-race distribution
(the special unit at 10%, the two core units at 45% each; no train/test
switch exists). Start positions come in two flavours: *reflect* spawns the
allies uniformly on the left half and mirrors them across the vertical
midline, *surround* spawns the allies in a central disc with enemies along
the four diagonals. Both teams of a symmetric scenario share one
composition; asymmetric scenarios append extra enemy draws from the same
distribution.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import yaml

from .errors import ConfigError, ScenarioError
from .rng import STREAM_SCENARIO, stream
from .units import RACES, StatTable, default_stat_table

SPECIAL_PROB = 0.10
REGULAR_PROB = 0.45
SPECIAL_BY_RACE = {"protoss": "colossus", "terran": "medivac", "zerg": "baneling"}

DEFAULT_MAP = (32.0, 32.0)
DEFAULT_MIN_SEPARATION = 1.0
SPAWN_MARGIN = 1.0
MAX_REJECTION_ATTEMPTS = 1000

Vec = tuple[float, float]


@dataclass(frozen=True)
class RaceConfig:
    """Per-race unit distribution. Probabilities must sum to 1."""

    race: str
    types: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ScenarioError(f"{self.race}: unit probabilities must sum to 1")
        if len(self.types) != len(self.probs):
            raise ScenarioError(f"{self.race}: types/probs length mismatch")

    def prob_of(self, type_id: str) -> float:
        return self.probs[self.types.index(type_id)]


def default_race_config(race: str, table: StatTable | None = None) -> RaceConfig:
    """The standard distribution: special unit 0.10, each core unit 0.45."""
    if race not in RACES:
        raise ScenarioError(f"unknown race {race!r}")
    table = table or default_stat_table()
    types = tuple(sorted(table.race_types(race)))
    special = SPECIAL_BY_RACE[race]
    probs = tuple(SPECIAL_PROB if t == special else REGULAR_PROB for t in types)
    return RaceConfig(race=race, types=types, probs=probs)


@dataclass(frozen=True)
class SpawnKind:
    """reflect | surround | fixed (verbatim positions) | custom (registered)."""

    kind: str
    ally_positions: tuple[Vec, ...] = ()
    enemy_positions: tuple[Vec, ...] = ()
    custom_name: str = ""

    @staticmethod
    def reflect() -> "SpawnKind":
        return SpawnKind(kind="reflect")

    @staticmethod
    def surround() -> "SpawnKind":
        return SpawnKind(kind="surround")

    @staticmethod
    def fixed(ally_positions: Sequence[Vec], enemy_positions: Sequence[Vec]) -> "SpawnKind":
        return SpawnKind(
            kind="fixed",
            ally_positions=tuple((float(x), float(y)) for x, y in ally_positions),
            enemy_positions=tuple((float(x), float(y)) for x, y in enemy_positions),
        )

    @staticmethod
    def custom(name: str) -> "SpawnKind":
        return SpawnKind(kind="custom", custom_name=name)


@dataclass(frozen=True)
class TeamGen:
    """null (sample) | fixed type lists | custom (registered sampler)."""

    kind: str = "sample"
    ally_types: tuple[str, ...] = ()
    enemy_types: tuple[str, ...] = ()
    custom_name: str = ""


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    race: RaceConfig
    n_allies: int
    n_enemies: int
    spawn: SpawnKind
    team: TeamGen = TeamGen()
    epo_p: float | None = None
    avail_mask_enabled: bool = True
    map_width: float = DEFAULT_MAP[0]
    map_height: float = DEFAULT_MAP[1]
    episode_limit: int = 0
    min_separation: float = DEFAULT_MIN_SEPARATION
    opponent: str = "pursuit"

    def __post_init__(self):
        if self.n_allies <= 0 or self.n_enemies <= 0:
            raise ScenarioError(f"{self.name}: unit counts must be positive")
        if self.epo_p is not None and not 0.0 <= self.epo_p <= 1.0:
            raise ScenarioError(f"{self.name}: epo_p must lie in [0, 1]")
        if self.episode_limit == 0:
            object.__setattr__(
                self, "episode_limit", default_episode_limit(self.n_allies, self.n_enemies)
            )

    @property
    def symmetric(self) -> bool:
        return self.n_allies == self.n_enemies

    def with_overrides(self, epo_p=..., avail_mask_enabled=..., episode_limit=...) -> "ScenarioSpec":
        kwargs = {}
        if epo_p is not ...:
            kwargs["epo_p"] = epo_p
        if avail_mask_enabled is not ...:
            kwargs["avail_mask_enabled"] = avail_mask_enabled
        if episode_limit is not ...:
            kwargs["episode_limit"] = episode_limit
        return replace(self, **kwargs) if kwargs else self


def default_episode_limit(n_allies: int, n_enemies: int) -> int:
    n = max(n_allies, n_enemies)
    if n <= 8:
        return 100
    if n <= 14:
        return 150
    return 200


@dataclass(frozen=True)
class ScenarioInstance:
    """One sampled episode setup."""

    spec: ScenarioSpec
    ally_types: tuple[str, ...]
    enemy_types: tuple[str, ...]
    ally_positions: tuple[Vec, ...]
    enemy_positions: tuple[Vec, ...]
    seed: int


# ---------------------------------------------------------------------------
# Custom distribution registries


_POSITION_DISTRIBUTIONS: dict[str, Callable] = {}
_TEAM_DISTRIBUTIONS: dict[str, Callable] = {}


def register_position_distribution(name: str, generator: Callable) -> None:
    """Register ``generator(n_allies, n_enemies, map_dims, rng) -> (allies, enemies)``.

    The generator must be pure given its arguments; it is looked up by name
    from specs using ``spawn: {kind: custom, name: ...}``.
    """
    if name in _POSITION_DISTRIBUTIONS or name in ("reflect", "surround", "fixed"):
        raise ConfigError(f"position distribution {name!r} already registered")
    _POSITION_DISTRIBUTIONS[name] = generator


def register_team_distribution(name: str, generator: Callable) -> None:
    """Register ``generator(race, n_allies, n_enemies, rng) -> (ally_types, enemy_types)``."""
    if name in _TEAM_DISTRIBUTIONS:
        raise ConfigError(f"team distribution {name!r} already registered")
    _TEAM_DISTRIBUTIONS[name] = generator


# ---------------------------------------------------------------------------
# Sampling


def sample_team(race: RaceConfig, n: int, rng: np.random.Generator) -> list[str]:
    """Draw ``n`` unit types i.i.d. from the race distribution."""
    if n <= 0:
        raise ScenarioError("team size must be positive")
    draws = rng.choice(len(race.types), size=n, p=race.probs)
    return [race.types[i] for i in draws]


def sample_enemy_team(
    ally_types: Sequence[str], n_enemies: int, race: RaceConfig, rng: np.random.Generator
) -> list[str]:
    """Enemy team: the ally composition plus i.i.d. extras for the surplus."""
    if n_enemies < len(ally_types):
        raise ScenarioError("enemy team cannot be smaller than the ally team")
    extra = n_enemies - len(ally_types)
    return list(ally_types) + (sample_team(race, extra, rng) if extra else [])


def _too_close(pos: Vec, placed: list[Vec], min_sep: float) -> bool:
    px, py = pos
    sep2 = min_sep * min_sep
    for qx, qy in placed:
        dx = px - qx
        dy = py - qy
        if dx * dx + dy * dy < sep2:
            return True
    return False


def _reject_loop(draw: Callable[[], Vec], occupied: list[Vec], min_sep: float) -> Vec:
    for _ in range(MAX_REJECTION_ATTEMPTS):
        pos = draw()
        if not _too_close(pos, occupied, min_sep):
            return pos
    raise ScenarioError(
        f"could not place a unit with separation {min_sep} "
        f"after {MAX_REJECTION_ATTEMPTS} attempts"
    )


def _sample_reflect(
    n_allies: int, n_enemies: int, dims: Vec, rng: np.random.Generator, min_sep: float
) -> tuple[list[Vec], list[Vec]]:
    width, height = dims
    # Keeping ally x at least min_sep/2 from the midline guarantees each
    # unit clears its own mirror image.
    x_lo, x_hi = SPAWN_MARGIN, width / 2.0 - min_sep / 2.0
    y_lo, y_hi = SPAWN_MARGIN, height - SPAWN_MARGIN
    if x_hi <= x_lo or y_hi <= y_lo:
        raise ScenarioError("map too small for reflect spawns")

    allies: list[Vec] = []
    mirrors: list[Vec] = []
    for _ in range(n_allies):
        def draw() -> Vec:
            return (float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi)))

        pos = _reject_loop(draw, allies + mirrors, min_sep)
        allies.append(pos)
        mirrors.append((width - pos[0], pos[1]))

    # Ally-surplus maps mirror only the first n_enemies allies.
    enemies = list(mirrors[:n_enemies])
    # Extra enemies (asymmetric scenarios) fill the enemy half uniformly.
    for _ in range(n_enemies - n_allies):
        def draw_extra() -> Vec:
            return (
                float(rng.uniform(width - x_hi, width - x_lo)),
                float(rng.uniform(y_lo, y_hi)),
            )

        pos = _reject_loop(draw_extra, allies + enemies, min_sep)
        enemies.append(pos)
    return allies, enemies


_DIAGONALS = (
    (math.sqrt(0.5), math.sqrt(0.5)),
    (-math.sqrt(0.5), math.sqrt(0.5)),
    (-math.sqrt(0.5), -math.sqrt(0.5)),
    (math.sqrt(0.5), -math.sqrt(0.5)),
)


def _sample_surround(
    n_allies: int, n_enemies: int, dims: Vec, rng: np.random.Generator, min_sep: float
) -> tuple[list[Vec], list[Vec]]:
    width, height = dims
    cx, cy = width / 2.0, height / 2.0
    disc_radius = width / 8.0

    allies: list[Vec] = []
    for _ in range(n_allies):
        def draw() -> Vec:
            r = disc_radius * math.sqrt(rng.uniform())
            theta = rng.uniform(0.0, 2.0 * math.pi)
            return (cx + r * math.cos(theta), cy + r * math.sin(theta))

        allies.append(_reject_loop(draw, allies, min_sep))

    # Enemies sit on the four diagonal rays, round-robin, at random radii
    # strictly outside the ally disc.
    r_lo = width / 4.0
    r_hi = (min(width, height) / 2.0 - SPAWN_MARGIN) * math.sqrt(2.0)
    if r_hi <= r_lo:
        raise ScenarioError("map too small for surround spawns")
    enemies: list[Vec] = []
    for i in range(n_enemies):
        dx, dy = _DIAGONALS[i % 4]

        def draw() -> Vec:
            r = rng.uniform(r_lo, r_hi)
            return (cx + r * dx, cy + r * dy)

        enemies.append(_reject_loop(draw, enemies, min_sep))
    return allies, enemies


def sample_positions(
    kind: SpawnKind,
    n_allies: int,
    n_enemies: int,
    map_dims: Vec,
    rng: np.random.Generator,
    min_separation: float = DEFAULT_MIN_SEPARATION,
) -> tuple[list[Vec], list[Vec]]:
    """Sample start positions for both teams."""
    if kind.kind == "reflect":
        return _sample_reflect(n_allies, n_enemies, map_dims, rng, min_separation)
    if kind.kind == "surround":
        return _sample_surround(n_allies, n_enemies, map_dims, rng, min_separation)
    if kind.kind == "fixed":
        allies = list(kind.ally_positions)
        enemies = list(kind.enemy_positions)
        if len(allies) != n_allies or len(enemies) != n_enemies:
            raise ScenarioError("fixed spawn position counts do not match the spec")
        for x, y in allies + enemies:
            if not (0.0 <= x <= map_dims[0] and 0.0 <= y <= map_dims[1]):
                raise ScenarioError(f"fixed spawn position ({x}, {y}) outside map bounds")
        return allies, enemies
    if kind.kind == "custom":
        try:
            generator = _POSITION_DISTRIBUTIONS[kind.custom_name]
        except KeyError:
            raise ScenarioError(f"unknown position distribution {kind.custom_name!r}") from None
        allies, enemies = generator(n_allies, n_enemies, map_dims, rng)
        return [tuple(map(float, p)) for p in allies], [tuple(map(float, p)) for p in enemies]
    raise ScenarioError(f"unknown spawn kind {kind.kind!r}")


def sample_instance(spec: ScenarioSpec, seed: int) -> ScenarioInstance:
    """Sample one episode setup. Draw order (teams, then positions) is fixed."""
    rng = stream(seed, STREAM_SCENARIO)
    team = spec.team
    if team.kind == "sample":
        ally_types = sample_team(spec.race, spec.n_allies, rng)
        if spec.n_enemies >= spec.n_allies:
            enemy_types = sample_enemy_team(ally_types, spec.n_enemies, spec.race, rng)
        else:
            # Ally-surplus maps (the 6-vs-5 stochastic-visibility scenarios):
            # the teams match except for the extra ally units.
            enemy_types = list(ally_types[: spec.n_enemies])
    elif team.kind == "fixed":
        ally_types, enemy_types = list(team.ally_types), list(team.enemy_types)
        if len(ally_types) != spec.n_allies or len(enemy_types) != spec.n_enemies:
            raise ScenarioError(f"{spec.name}: fixed team sizes do not match counts")
    elif team.kind == "custom":
        try:
            generator = _TEAM_DISTRIBUTIONS[team.custom_name]
        except KeyError:
            raise ScenarioError(f"unknown team distribution {team.custom_name!r}") from None
        ally_types, enemy_types = generator(spec.race, spec.n_allies, spec.n_enemies, rng)
    else:
        raise ScenarioError(f"unknown team kind {team.kind!r}")

    allies, enemies = sample_positions(
        spec.spawn,
        spec.n_allies,
        spec.n_enemies,
        (spec.map_width, spec.map_height),
        rng,
        spec.min_separation,
    )
    return ScenarioInstance(
        spec=spec,
        ally_types=tuple(ally_types),
        enemy_types=tuple(enemy_types),
        ally_positions=tuple(allies),
        enemy_positions=tuple(enemies),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Registry and config files


def _parse_spawn(raw) -> SpawnKind:
    if isinstance(raw, str):
        if raw in ("reflect", "surround"):
            return SpawnKind(kind=raw)
        raise ConfigError(f"unknown spawn kind {raw!r}")
    if isinstance(raw, dict):
        kind = raw.get("kind")
        if kind == "fixed":
            return SpawnKind.fixed(raw.get("ally", []), raw.get("enemy", []))
        if kind == "custom":
            return SpawnKind.custom(str(raw.get("name", "")))
        if kind in ("reflect", "surround"):
            return SpawnKind(kind=kind)
        raise ConfigError(f"unknown spawn kind {kind!r}")
    raise ConfigError(f"spawn must be a string or mapping, got {type(raw).__name__}")


def _parse_team(raw) -> TeamGen:
    if raw is None:
        return TeamGen()
    if isinstance(raw, dict):
        kind = raw.get("kind")
        if kind == "fixed":
            return TeamGen(
                kind="fixed",
                ally_types=tuple(raw.get("ally", [])),
                enemy_types=tuple(raw.get("enemy", [])),
            )
        if kind == "custom":
            return TeamGen(kind="custom", custom_name=str(raw.get("name", "")))
        if kind == "sample":
            return TeamGen()
        raise ConfigError(f"unknown team kind {kind!r}")
    raise ConfigError(f"team must be null or a mapping, got {type(raw).__name__}")


def parse_scenario(raw: dict, table: StatTable | None = None) -> ScenarioSpec:
    """Parse one scenario mapping from a config file."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario entry must be a mapping")
    for key in ("name", "race", "n_allies", "n_enemies", "spawn"):
        if key not in raw:
            raise ConfigError(f"scenario entry missing required field {key!r}")
    map_dims = raw.get("map", list(DEFAULT_MAP))
    if not (isinstance(map_dims, (list, tuple)) and len(map_dims) == 2):
        raise ConfigError(f"scenario {raw['name']!r}: map must be [width, height]")
    epo_p = raw.get("epo_p", None)
    try:
        return ScenarioSpec(
            name=str(raw["name"]),
            race=default_race_config(str(raw["race"]), table),
            n_allies=int(raw["n_allies"]),
            n_enemies=int(raw["n_enemies"]),
            spawn=_parse_spawn(raw["spawn"]),
            team=_parse_team(raw.get("team")),
            epo_p=None if epo_p is None else float(epo_p),
            avail_mask_enabled=bool(raw.get("avail_mask", True)),
            map_width=float(map_dims[0]),
            map_height=float(map_dims[1]),
            episode_limit=int(raw.get("episode_limit", 0)),
            min_separation=float(raw.get("min_separation", DEFAULT_MIN_SEPARATION)),
            opponent=str(raw.get("opponent", "pursuit")),
        )
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc


def parse_scenario_file(text: str, table: StatTable | None = None) -> list[ScenarioSpec]:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario file is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict) or "scenarios" not in raw:
        raise ConfigError("scenario file must be a mapping with a 'scenarios' list")
    specs = [parse_scenario(entry, table) for entry in raw["scenarios"]]
    names = [s.name for s in specs]
    if len(names) != len(set(names)):
        raise ConfigError("duplicate scenario names in config")
    return specs


def load_scenario_file(path: str, table: StatTable | None = None) -> list[ScenarioSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario_file(fh.read(), table)


_registry_cache: list[ScenarioSpec] | None = None


def registry(table: StatTable | None = None) -> list[ScenarioSpec]:
    """The 18 built-in scenarios: 15 symmetric/asymmetric plus 3 EPO maps."""
    global _registry_cache
    if _registry_cache is None or table is not None:
        source = importlib.resources.files("skirmish.data").joinpath("scenarios_v1.yaml")
        specs = parse_scenario_file(source.read_text(encoding="utf-8"), table)
        if table is not None:
            return specs
        _registry_cache = specs
    return list(_registry_cache)


def find_scenario(name: str, extra: Sequence[ScenarioSpec] = ()) -> ScenarioSpec:
    """Look up a scenario by name among config-file specs and the registry."""
    for spec in list(extra) + registry():
        if spec.name == name:
            return spec
    raise ScenarioError(f"unknown scenario {name!r}")
