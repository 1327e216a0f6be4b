"""Stochastic per-(agent, enemy) visibility with a guaranteed first observer.

The first agent to sight an enemy is guaranteed to keep seeing it; at that
moment every other agent gets an independent Bernoulli(p) draw that fixes,
for the rest of the episode, whether the enemy will ever appear in its
observation. If two or more agents make the first sighting on the same
step, a random tie-break picks the guaranteed one and the losers join the
draw. When the guaranteed observer dies, the next agent to sight the enemy
inherits the guarantee and everyone else is re-drawn.

Verdicts are tri-state: ``undetermined`` (nobody has seen the enemy yet,
vacuously visible), ``granted``, or ``denied``. Within one observer epoch a
verdict never changes. The table owns a dedicated random stream so that
enabling the protocol never perturbs the engine's randomness; at p=1 it is
observationally identical to being disabled.
"""

from __future__ import annotations

import numpy as np

UNDETERMINED = 0
GRANTED = 1
DENIED = 2


class EpoVisibilityTable:
    __slots__ = ("p", "n_agents", "n_enemies", "rng", "verdict", "first_observer", "_dead")

    def __init__(self, p: float, n_agents: int, n_enemies: int, rng: np.random.Generator):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        self.p = p
        self.n_agents = n_agents
        self.n_enemies = n_enemies
        self.rng = rng
        self.verdict = [[UNDETERMINED] * n_enemies for _ in range(n_agents)]
        self.first_observer: list[int | None] = [None] * n_enemies
        self._dead: set[int] = set()

    def mark_dead(self, agent: int) -> None:
        """Record an agent death (a dead guaranteed observer triggers re-draws)."""
        self._dead.add(agent)

    def _assign(self, enemy: int, sighters: list[int]) -> None:
        chosen = int(sighters[self.rng.integers(len(sighters))])
        self.first_observer[enemy] = chosen
        for agent in range(self.n_agents):
            if agent == chosen:
                self.verdict[agent][enemy] = GRANTED
            else:
                draw = self.rng.random() < self.p
                self.verdict[agent][enemy] = GRANTED if draw else DENIED

    def update(self, sight_sets: list[list[int]]) -> None:
        """Process one step's post-movement sightings.

        ``sight_sets[agent]`` lists the living enemies inside that agent's
        sight range; dead agents must report an empty set. Iteration order is
        fixed (enemy index ascending) so draws replay deterministically.
        """
        sighters_of: list[list[int]] = [[] for _ in range(self.n_enemies)]
        for agent, seen in enumerate(sight_sets):
            if agent in self._dead:
                continue
            for enemy in seen:
                sighters_of[enemy].append(agent)
        for enemy in range(self.n_enemies):
            fo = self.first_observer[enemy]
            if fo is None:
                if sighters_of[enemy]:
                    self._assign(enemy, sighters_of[enemy])
            elif fo in self._dead and sighters_of[enemy]:
                self._assign(enemy, sighters_of[enemy])

    def visible(self, agent: int, enemy: int) -> bool:
        """False only under an explicit denial; undetermined is vacuously true."""
        return self.verdict[agent][enemy] != DENIED

    def dump(self) -> dict:
        """Verdict snapshot for episode records and audits."""
        return {
            "p": self.p,
            "first_observer": list(self.first_observer),
            "verdict": [row[:] for row in self.verdict],
        }
