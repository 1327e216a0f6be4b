"""Policies for running and diagnosing episodes.

Scripted controllers (focus fire, kiting) implement the classic
micromanagement behaviours and read the full world, so they need no
observation plumbing. The open-loop policy is the diagnostic one: it
conditions on nothing but the timestep and its agent index, replaying an
empirical action distribution fitted from recorded episodes. All policies
receive the availability mask in force and must return a permitted action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import actions as act
from .engine import UnitState, WorldState, available_actions
from .errors import ConfigError
from .opponent import move_away, move_toward


class Policy:
    name = "policy"

    def reset(self, world: WorldState, seed: int) -> None:
        pass

    def act(self, world: WorldState, agent_index: int, avail: list[bool], rng) -> int:
        raise NotImplementedError


class RandomPolicy(Policy):
    name = "random"

    def act(self, world, agent_index, avail, rng) -> int:
        options = [a for a, ok in enumerate(avail) if ok]
        return options[int(rng.integers(len(options)))]


def _lowest_pool_enemy(world: WorldState) -> int | None:
    best = None
    best_pool = math.inf
    for j, enemy in enumerate(world.enemies):
        if enemy.alive and enemy.pool < best_pool:
            best, best_pool = j, enemy.pool
    return best


def _true_avail(world: WorldState, agent_index: int, avail: list[bool]) -> list[bool]:
    # With masking removed the runner hands us the relaxed mask; scripted
    # policies still aim using real availability so they do not waste steps.
    if world.scenario.spec.avail_mask_enabled:
        return avail
    return available_actions(world, agent_index)


class FocusFirePolicy(Policy):
    """Everyone shoots the weakest living enemy; healers support the hurt."""

    name = "focus_fire"

    def act(self, world, agent_index, avail, rng) -> int:
        unit = world.units[agent_index]
        if not unit.alive:
            return act.NO_OP
        real = _true_avail(world, agent_index, avail)
        if unit.spec.is_healer:
            return self._healer(world, agent_index, unit, real)
        target = _lowest_pool_enemy(world)
        if target is None:
            return act.STOP
        if real[act.attack(target)]:
            return act.attack(target)
        enemy = world.enemies[target]
        return move_toward(world, unit, enemy.x, enemy.y)

    @staticmethod
    def _healer(world, agent_index, unit: UnitState, real: list[bool]) -> int:
        # Heal slots share the attack slots, so only the first n_enemies
        # allies are addressable (ally-surplus maps leave the rest out).
        n_slots = len(real) - act.TARGET_OFFSET
        best = None
        best_health = math.inf
        for j, mate in enumerate(world.allies):
            if j == agent_index or not mate.alive or j >= n_slots:
                continue
            if mate.health < mate.spec.max_health and mate.health < best_health:
                best, best_health = j, mate.health
        if best is None:
            return act.STOP
        if real[act.heal(best)]:
            return act.heal(best)
        mate = world.allies[best]
        return move_toward(world, unit, mate.x, mate.y)


class KitePolicy(Policy):
    """Strike when no enemy can answer before our next move, else retreat.

    Plain attack-whenever-in-range loses ground against equal-speed chasers
    (they close in on every standing shot), so the attack is gated on a
    safety margin of one enemy move beyond the enemy's reach.
    """

    name = "kite"

    def act(self, world, agent_index, avail, rng) -> int:
        unit = world.units[agent_index]
        if not unit.alive:
            return act.NO_OP
        real = _true_avail(world, agent_index, avail)
        nearest = None
        nearest_d2 = math.inf
        safe = True
        for enemy in world.enemies:
            if not enemy.alive:
                continue
            d2 = (enemy.x - unit.x) ** 2 + (enemy.y - unit.y) ** 2
            if d2 < nearest_d2:
                nearest_d2 = d2
                nearest = enemy
            threat = enemy.spec.attack_range + enemy.spec.move_speed
            if d2 <= threat * threat:
                safe = False
        if nearest is None:
            return act.STOP
        if safe and unit.cooldown_remaining == 0 and not unit.spec.is_healer:
            for j, enemy in enumerate(world.enemies):
                if enemy is nearest and real[act.attack(j)]:
                    return act.attack(j)
        return move_away(world, unit, nearest.x, nearest.y)


@dataclass
class OpenLoopPolicy(Policy):
    """Empirical action distribution per (timestep, agent); sees nothing else.

    Unseen (timestep, agent) pairs fall back to stop. Sampling is restricted
    to the available actions and renormalized, mirroring how mask-aware
    learners act.
    """

    table: dict[tuple[int, int], tuple[tuple[int, ...], tuple[float, ...]]] = field(
        default_factory=dict
    )
    name: str = "openloop"

    def act(self, world, agent_index, avail, rng) -> int:
        entry = self.table.get((world.step, agent_index))
        if entry is not None:
            options = [(a, p) for a, p in zip(*entry) if avail[a]]
            if options:
                if len(options) == 1:
                    return options[0][0]
                total = sum(p for _, p in options)
                draw = rng.random() * total
                acc = 0.0
                for a, p in options:
                    acc += p
                    if draw < acc:
                        return a
                return options[-1][0]
        return act.STOP if avail[act.STOP] else act.NO_OP

    def distribution(self, timestep: int, agent_index: int):
        return self.table.get((timestep, agent_index))


def fit_openloop(records) -> OpenLoopPolicy:
    """Fit the per-(timestep, agent) empirical action distribution."""
    if not records:
        raise ConfigError("fit_openloop needs at least one episode record")
    counts: dict[tuple[int, int], dict[int, int]] = {}
    for record in records:
        for t, joint in enumerate(record.actions):
            for agent_index, action in enumerate(joint):
                key = (t, agent_index)
                bucket = counts.setdefault(key, {})
                bucket[action] = bucket.get(action, 0) + 1
    table = {}
    for key, bucket in counts.items():
        total = sum(bucket.values())
        actions = tuple(sorted(bucket))
        table[key] = (actions, tuple(bucket[a] / total for a in actions))
    return OpenLoopPolicy(table=table)


_POLICIES = {
    "random": RandomPolicy,
    "focus_fire": FocusFirePolicy,
    "kite": KitePolicy,
}


def get_policy(name: str) -> Policy:
    try:
        return _POLICIES[name]()
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}") from None


def policy_names() -> tuple[str, ...]:
    return tuple(_POLICIES)
