"""Deterministic discrete-time combat engine.

One decision step is one simulation tick. ``step`` resolves a joint ally
action in a fixed, documented order:

1.  Ally actions are validated against the state the agents observed (the
    pre-step state). With the availability mask enforced an invalid action
    raises; with it disabled the action becomes a no-op and is counted.
2.  Ally moves are applied.
3.  Enemy actions are computed by the opponent controller on the
    post-ally-move state, then enemy moves are applied. Stochastic
    visibility bookkeeping updates here, after all movement.
4.  Attacks resolve simultaneously: range eligibility was fixed at each
    actor's decision point, so every queued attack lands even if its target
    moved or died this step. Shields absorb damage before health. An attack
    only deals damage when the attacker's cooldown is 0; otherwise the unit
    holds its target (facing updates, no damage).
5.  Suicide units that issued an attack on a target in contact range
    detonate: full splash damage to every opposing unit within the splash
    radius, and the unit dies (a self-death, never rewarded).
6.  Heals apply, capped at max health.
7.  Shields regenerate for units that have not been damaged for the
    regeneration delay.
8.  Deaths are processed (health clamped to 0, shield drops to 0).
9.  Team reward is computed from the step's events.
10. Termination: a team eliminated, or the episode limit reached (an ally
    loss). Two teams wiped on the same step count as an ally loss.

Reward crediting: allies earn the enemy pool (health plus shield) they
destroy, capped so that re-destroying healed or regenerated pool grants
nothing; enemy healing, enemy shield regeneration, and enemy self-
detonations grant exactly zero. Kill and win bonuses are added and the
total is scaled so a perfect episode is worth ``reward_cap``.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

from . import actions as act
from .epo import EpoVisibilityTable
from .errors import InvalidActionError, ScenarioError, SkirmishError
from .rng import STREAM_ENGINE, STREAM_EPO, stream
from .scenario import ScenarioInstance
from .units import StatTable, UnitTypeSpec, default_stat_table

TEAM_ALLY = 0
TEAM_ENEMY = 1


@dataclass
class RewardConfig:
    """Reward shaping constants (SMAC-convention scale)."""

    kill_bonus: float = 10.0
    win_bonus: float = 200.0
    reward_cap: float = 20.0
    # Scale applied to ally pool lost; 0 disables damage-taken penalties.
    damage_taken_scale: float = 0.0


class UnitState:
    """Mutable per-unit state. Index order in ``WorldState.units`` is identity."""

    __slots__ = (
        "spec",
        "type_index",
        "team",
        "x",
        "y",
        "health",
        "shield",
        "facing_x",
        "facing_y",
        "cooldown_remaining",
        "alive",
        "last_action",
        "last_damaged_step",
    )

    def __init__(self, spec: UnitTypeSpec, type_index: int, team: int, x: float, y: float,
                 facing_x: float, facing_y: float):
        self.spec = spec
        self.type_index = type_index
        self.team = team
        self.x = x
        self.y = y
        self.health = spec.max_health
        self.shield = spec.max_shield
        self.facing_x = facing_x
        self.facing_y = facing_y
        self.cooldown_remaining = 0
        self.alive = True
        self.last_action = act.NO_OP
        self.last_damaged_step = -(10**9)

    @property
    def pool(self) -> float:
        return self.health + self.shield


@dataclass
class StepEvents:
    """What happened during one resolved step."""

    damage_dealt: float = 0.0      # raw ally -> enemy damage
    credited_damage: float = 0.0   # reward-credited portion of damage_dealt
    damage_taken: float = 0.0      # enemy -> ally damage
    kills: int = 0                 # rewarded enemy deaths (self-detonations excluded)
    ally_deaths: int = 0
    heals: float = 0.0             # healing received by allies
    enemy_heals: float = 0.0       # healing received by enemies (never rewarded)
    invalid_actions: int = 0


@dataclass
class StepResult:
    reward: float
    terminated: bool
    won: bool
    events: StepEvents


class WorldState:
    """Full simulation state for one episode. Single-threaded by contract."""

    __slots__ = (
        "units",
        "allies",
        "enemies",
        "n_allies",
        "n_enemies",
        "step",
        "map_width",
        "map_height",
        "episode_limit",
        "rng",
        "epo",
        "scenario",
        "stat_table",
        "opponent_name",
        "opponent_fn",
        "reward_cfg",
        "normalizer",
        "terminated",
        "won",
        "lowest_pool",
    )

    def __init__(self):
        self.units: list[UnitState] = []
        # Fixed team views; unit ordering never changes within an episode.
        self.allies: list[UnitState] = []
        self.enemies: list[UnitState] = []
        self.epo: EpoVisibilityTable | None = None
        self.terminated = False
        self.won = False

    @property
    def n_actions(self) -> int:
        return act.TARGET_OFFSET + self.n_enemies


def _facing_toward(x: float, y: float, tx: float, ty: float) -> tuple[float, float] | None:
    dx = tx - x
    dy = ty - y
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return None
    return dx / norm, dy / norm


def init_world(
    scenario: ScenarioInstance,
    seed: int,
    stat_table: StatTable | None = None,
    reward_cfg: RewardConfig | None = None,
    opponent: str | None = None,
) -> WorldState:
    """Build the initial state for a sampled scenario.

    Identical (scenario, seed) inputs produce a bit-identical world. The
    opponent defaults to the scenario's configured controller.
    """
    from .opponent import get_opponent

    spec = scenario.spec
    table = stat_table or default_stat_table()
    cfg = reward_cfg or RewardConfig()
    opponent = opponent or spec.opponent

    n_allies = len(scenario.ally_types)
    n_enemies = len(scenario.enemy_types)
    if n_allies != spec.n_allies or n_enemies != spec.n_enemies:
        raise ScenarioError("instance team sizes do not match the scenario spec")
    positions = list(scenario.ally_positions) + list(scenario.enemy_positions)
    if len(positions) != n_allies + n_enemies:
        raise ScenarioError("instance position counts do not match team sizes")
    for x, y in positions:
        if not (0.0 <= x <= spec.map_width and 0.0 <= y <= spec.map_height):
            raise ScenarioError(f"spawn position ({x}, {y}) outside map bounds")
    sep2 = spec.min_separation * spec.min_separation
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            dx = positions[i][0] - positions[j][0]
            dy = positions[i][1] - positions[j][1]
            if dx * dx + dy * dy < sep2:
                raise ScenarioError(
                    f"spawn positions {i} and {j} closer than the minimum separation"
                )

    world = WorldState()
    world.n_allies = n_allies
    world.n_enemies = n_enemies
    world.step = 0
    world.map_width = spec.map_width
    world.map_height = spec.map_height
    world.episode_limit = spec.episode_limit
    world.scenario = scenario
    world.stat_table = table
    world.reward_cfg = cfg
    world.opponent_name = opponent
    world.opponent_fn = get_opponent(opponent)
    world.rng = stream(seed, STREAM_ENGINE)

    ally_cx = sum(p[0] for p in scenario.ally_positions) / n_allies
    ally_cy = sum(p[1] for p in scenario.ally_positions) / n_allies
    enemy_cx = sum(p[0] for p in scenario.enemy_positions) / n_enemies
    enemy_cy = sum(p[1] for p in scenario.enemy_positions) / n_enemies

    for k, type_id in enumerate(list(scenario.ally_types) + list(scenario.enemy_types)):
        team = TEAM_ALLY if k < n_allies else TEAM_ENEMY
        x, y = positions[k]
        target = (enemy_cx, enemy_cy) if team == TEAM_ALLY else (ally_cx, ally_cy)
        facing = _facing_toward(x, y, *target)
        if facing is None:
            facing = (1.0, 0.0) if team == TEAM_ALLY else (-1.0, 0.0)
        world.units.append(
            UnitState(table.spec(type_id), table.type_index(type_id), team, x, y, *facing)
        )
    world.allies = world.units[:n_allies]
    world.enemies = world.units[n_allies:]

    world.lowest_pool = [u.pool for u in world.enemies]
    pool_total = sum(u.spec.max_pool for u in world.enemies)
    world.normalizer = cfg.reward_cap / (
        pool_total + cfg.kill_bonus * n_enemies + cfg.win_bonus
    )

    if spec.epo_p is not None:
        world.epo = EpoVisibilityTable(
            p=spec.epo_p,
            n_agents=n_allies,
            n_enemies=n_enemies,
            rng=stream(seed, STREAM_EPO),
        )
        world.epo.update(_sight_sets(world))
    return world


def _sight_sets(world: WorldState) -> list[list[int]]:
    """Per living agent, the living enemies inside its sight range."""
    sets: list[list[int]] = []
    enemies = world.enemies
    for unit in world.allies:
        if not unit.alive:
            sets.append([])
            continue
        sight2 = unit.spec.sight_range * unit.spec.sight_range
        ux, uy = unit.x, unit.y
        seen = [
            j
            for j, e in enumerate(enemies)
            if e.alive and (e.x - ux) ** 2 + (e.y - uy) ** 2 <= sight2
        ]
        sets.append(seen)
    return sets


def _target_available(world: WorldState, unit: UnitState, agent_index: int, slot: int) -> bool:
    if unit.spec.is_healer:
        if slot >= world.n_allies or slot == agent_index:
            return False
        target = world.units[slot]
    else:
        if slot >= world.n_enemies:
            return False
        target = world.units[world.n_allies + slot]
        if world.epo is not None and not world.epo.visible(agent_index, slot):
            return False
    if not target.alive:
        return False
    dx = target.x - unit.x
    dy = target.y - unit.y
    rng = unit.spec.attack_range
    return dx * dx + dy * dy <= rng * rng


def available_actions(world: WorldState, agent_index: int) -> list[bool]:
    """True availability mask for one agent (range-gated attacks, live targets).

    A dead agent may only no-op; a living one may always stop or move (moves
    clip at the map edge but stay available). The attack boundary is
    inclusive: a target at exactly attack range is attackable.
    """
    n = world.n_actions
    unit = world.units[agent_index]
    if not unit.alive:
        return [True] + [False] * (n - 1)
    mask = [False, True, True, True, True, True] + [False] * world.n_enemies
    # Healer target slots address allies, not enemies.
    n_slots = min(world.n_allies, world.n_enemies) if unit.spec.is_healer else world.n_enemies
    for slot in range(n_slots):
        if _target_available(world, unit, agent_index, slot):
            mask[act.TARGET_OFFSET + slot] = True
    return mask


def relaxed_actions(world: WorldState, agent_index: int) -> list[bool]:
    """The mask consumers see when availability masking is removed.

    Only physical possibility remains: dead agents no-op, living agents may
    try anything except no-op. Invalid choices become no-ops inside ``step``.
    """
    n = world.n_actions
    unit = world.units[agent_index]
    if not unit.alive:
        return [True] + [False] * (n - 1)
    return [False] + [True] * (n - 1)


def action_mask(world: WorldState, agent_index: int, enforce: bool | None = None) -> list[bool]:
    """The mask for the scenario's configured mode (or an explicit override)."""
    if enforce is None:
        enforce = world.scenario.spec.avail_mask_enabled
    if enforce:
        return available_actions(world, agent_index)
    return relaxed_actions(world, agent_index)


def _apply_move(world: WorldState, unit: UnitState, action: int) -> None:
    dx, dy = act.MOVE_DELTAS[action]
    speed = unit.spec.move_speed
    nx = unit.x + dx * speed
    ny = unit.y + dy * speed
    unit.x = min(max(nx, 0.0), world.map_width)
    unit.y = min(max(ny, 0.0), world.map_height)
    unit.facing_x = dx
    unit.facing_y = dy


class _AttackCmd:
    __slots__ = ("attacker", "target", "resolved")

    def __init__(self, attacker: int, target: int, resolved: bool):
        self.attacker = attacker
        self.target = target
        self.resolved = resolved


def step(
    world: WorldState,
    joint_action: list[int],
    avail_mask_enabled: bool | None = None,
) -> StepResult:
    """Advance the world by one tick. See the module docstring for the order."""
    if world.terminated:
        raise SkirmishError("episode already terminated")
    if len(joint_action) != world.n_allies:
        raise InvalidActionError(
            f"expected {world.n_allies} actions, got {len(joint_action)}"
        )
    mask_on = (
        world.scenario.spec.avail_mask_enabled
        if avail_mask_enabled is None
        else avail_mask_enabled
    )
    units = world.units
    n_allies = world.n_allies
    n_act = world.n_actions
    events = StepEvents()

    # (1) validation against the pre-step state.
    acts: list[int] = []
    for i, a in enumerate(joint_action):
        a = int(a)
        if not 0 <= a < n_act:
            raise InvalidActionError(f"agent {i}: action {a} outside the action space")
        unit = units[i]
        if not unit.alive:
            ok = a == act.NO_OP
        elif a == act.NO_OP:
            ok = False
        elif a == act.STOP or act.is_move(a):
            ok = True
        else:
            ok = _target_available(world, unit, i, a - act.TARGET_OFFSET)
        if not ok:
            if mask_on:
                raise InvalidActionError(
                    f"agent {i}: action {a} unavailable (mask enforced)"
                )
            events.invalid_actions += 1
            a = act.NO_OP
        acts.append(a)

    attack_queue: list[_AttackCmd] = []
    detonations: list[int] = []
    heal_queue: list[tuple[int, int]] = []

    def queue_target_action(index: int, unit: UnitState, slot: int) -> None:
        if unit.spec.is_healer:
            target = slot if unit.team == TEAM_ALLY else n_allies + slot
            heal_queue.append((index, target))
            tu = units[target]
        elif unit.spec.is_suicide_splash:
            detonations.append(index)
            tu = units[(n_allies + slot) if unit.team == TEAM_ALLY else slot]
        else:
            target = (n_allies + slot) if unit.team == TEAM_ALLY else slot
            tu = units[target]
            attack_queue.append(_AttackCmd(index, target, unit.cooldown_remaining == 0))
        facing = _facing_toward(unit.x, unit.y, tu.x, tu.y)
        if facing is not None:
            unit.facing_x, unit.facing_y = facing

    # (2) ally moves; target commands queue with decision-time facing.
    for i, a in enumerate(acts):
        unit = units[i]
        unit.last_action = a
        if act.is_move(a):
            _apply_move(world, unit, a)
        elif a >= act.TARGET_OFFSET:
            queue_target_action(i, unit, a - act.TARGET_OFFSET)

    # (3) enemy decisions on the post-ally-move state. All enemy commands
    # are validated and aimed against that one state (the team decides
    # simultaneously), then enemy moves are applied.
    enemy_acts = world.opponent_fn(world, world.rng)
    enemy_moves: list[tuple[UnitState, int]] = []
    for k, a in enumerate(enemy_acts):
        idx = n_allies + k
        unit = units[idx]
        a = int(a)
        unit.last_action = a
        if not unit.alive or a in (act.NO_OP, act.STOP):
            continue
        if act.is_move(a):
            enemy_moves.append((unit, a))
            continue
        slot = a - act.TARGET_OFFSET
        # Opponent commands are validated at its decision point; anything
        # stale is silently dropped (not an ally bookkeeping event).
        if _enemy_target_valid(world, unit, slot):
            queue_target_action(idx, unit, slot)
    for unit, a in enemy_moves:
        _apply_move(world, unit, a)

    # Stochastic-visibility update: after movement, before observations.
    if world.epo is not None:
        world.epo.update(_sight_sets(world))

    # (4) simultaneous attack resolution.
    damage_by_target: dict[int, float] = {}
    attacked: list[int] = []
    for cmd in attack_queue:
        if not cmd.resolved:
            continue
        dmg = units[cmd.attacker].spec.attack_damage
        if dmg <= 0.0:
            continue
        damage_by_target[cmd.target] = damage_by_target.get(cmd.target, 0.0) + dmg
        attacked.append(cmd.attacker)

    # (5) detonations: splash on post-movement positions, detonator dies.
    self_detonated: set[int] = set()
    if detonations:
        splash: dict[int, float] = {}
        for idx in detonations:
            unit = units[idx]
            radius2 = unit.spec.splash_radius ** 2
            dmg = unit.spec.attack_damage
            lo, hi = (n_allies, len(units)) if unit.team == TEAM_ALLY else (0, n_allies)
            for t in range(lo, hi):
                tu = units[t]
                if tu.alive and (tu.x - unit.x) ** 2 + (tu.y - unit.y) ** 2 <= radius2:
                    splash[t] = splash.get(t, 0.0) + dmg
            self_detonated.add(idx)
        for t, dmg in splash.items():
            damage_by_target[t] = damage_by_target.get(t, 0.0) + dmg

    ally_damage_to_enemy: dict[int, float] = {}
    for target, dmg in damage_by_target.items():
        tu = units[target]
        absorbed = min(tu.shield, dmg)
        tu.shield -= absorbed
        tu.health -= dmg - absorbed
        tu.last_damaged_step = world.step
        if target >= n_allies:
            events.damage_dealt += dmg
            ally_damage_to_enemy[target - n_allies] = (
                ally_damage_to_enemy.get(target - n_allies, 0.0) + dmg
            )
        else:
            events.damage_taken += dmg
    for idx in self_detonated:
        unit = units[idx]
        unit.health = 0.0
        unit.shield = 0.0

    # (6) heals (health only, capped at max).
    for healer_idx, target_idx in heal_queue:
        healer = units[healer_idx]
        target = units[target_idx]
        amount = min(healer.spec.heal_per_step, target.spec.max_health - target.health)
        if amount <= 0.0:
            continue
        target.health += amount
        if target.team == TEAM_ALLY:
            events.heals += amount
        else:
            events.enemy_heals += amount

    # (7) shield regeneration after the no-damage delay.
    delay = world.stat_table.shield_regen_delay
    rate = world.stat_table.shield_regen_rate
    for unit in units:
        if (
            unit.alive
            and unit.health > 0.0
            and unit.spec.max_shield > 0.0
            and unit.shield < unit.spec.max_shield
            and world.step - unit.last_damaged_step >= delay
        ):
            unit.shield = min(unit.spec.max_shield, unit.shield + rate)

    # (8) deaths. A detonated unit is spent even if a same-step heal landed.
    for idx, unit in enumerate(units):
        if unit.alive and (unit.health <= 0.0 or idx in self_detonated):
            unit.alive = False
            unit.health = 0.0
            unit.shield = 0.0
            unit.cooldown_remaining = 0
            if idx >= n_allies:
                if idx not in self_detonated:
                    events.kills += 1
            else:
                events.ally_deaths += 1
                if world.epo is not None:
                    world.epo.mark_dead(idx)

    # Reward crediting: new net pool destroyed, never re-earned after heals
    # or regeneration, and never from enemy self-detonations.
    for e_idx, dmg in ally_damage_to_enemy.items():
        enemy = units[n_allies + e_idx]
        events.credited_damage += min(
            dmg, max(0.0, world.lowest_pool[e_idx] - enemy.pool)
        )
    for e_idx, enemy in enumerate(world.enemies):
        if enemy.pool < world.lowest_pool[e_idx]:
            world.lowest_pool[e_idx] = enemy.pool

    # Cooldowns: reset on a resolved attack, otherwise tick toward ready.
    attacked_set = set(attacked)
    for idx, unit in enumerate(units):
        if not unit.alive:
            continue
        if idx in attacked_set:
            unit.cooldown_remaining = unit.spec.attack_cooldown
        elif unit.cooldown_remaining > 0:
            unit.cooldown_remaining -= 1

    # (9)-(10) termination and reward.
    world.step += 1
    allies_alive = any(u.alive for u in world.allies)
    enemies_alive = any(u.alive for u in world.enemies)
    terminated = False
    won = False
    if not allies_alive:
        terminated = True  # includes the both-wiped tie: an ally loss
    elif not enemies_alive:
        terminated = True
        won = True
    elif world.step >= world.episode_limit:
        terminated = True
    world.terminated = terminated
    world.won = won

    reward = compute_reward(events, won, world.reward_cfg, world.normalizer)
    return StepResult(reward=reward, terminated=terminated, won=won, events=events)


def _enemy_target_valid(world: WorldState, unit: UnitState, slot: int) -> bool:
    if unit.spec.is_healer:
        target_idx = world.n_allies + slot
        if slot >= world.n_enemies:
            return False
    else:
        if slot >= world.n_allies:
            return False
        target_idx = slot
    target = world.units[target_idx]
    if not target.alive or target is unit:
        return False
    dx = target.x - unit.x
    dy = target.y - unit.y
    rng = unit.spec.attack_range
    return dx * dx + dy * dy <= rng * rng


def compute_reward(
    events: StepEvents, won: bool, cfg: RewardConfig, normalizer: float
) -> float:
    """Scaled team reward for one step.

    Only credited damage counts: healing received by enemies and enemy
    shield regeneration contribute exactly zero, as do enemy
    self-detonations. Damage taken by allies is scaled by
    ``damage_taken_scale`` (0 by default).
    """
    raw = (
        events.credited_damage
        + cfg.kill_bonus * events.kills
        + (cfg.win_bonus if won else 0.0)
        - cfg.damage_taken_scale * events.damage_taken
    )
    return normalizer * raw


# ---------------------------------------------------------------------------
# Canonical serialization


_HEADER = b"skirmish-world-v1"


def canonical_bytes(world: WorldState) -> bytes:
    """Canonical byte encoding of the full world state (hash-equality tests)."""
    out = bytearray(_HEADER)
    out += struct.pack(
        "<iiiddiBB",
        world.stat_table.version,
        world.n_allies,
        world.n_enemies,
        world.map_width,
        world.map_height,
        world.episode_limit,
        world.terminated,
        world.won,
    )
    out += struct.pack("<i", world.step)
    for unit in world.units:
        out += struct.pack(
            "<iBddddddiBi",
            unit.type_index,
            unit.team,
            unit.x,
            unit.y,
            unit.health,
            unit.shield,
            unit.facing_x,
            unit.facing_y,
            unit.cooldown_remaining,
            unit.alive,
            unit.last_action,
        )
    for pool in world.lowest_pool:
        out += struct.pack("<d", pool)
    return bytes(out)


def world_hash(world: WorldState) -> str:
    return hashlib.sha256(canonical_bytes(world)).hexdigest()
