"""Episode running, recording, evaluation, and replay verification.

An :class:`EpisodeRecord` is fully self-contained: it embeds the scenario
definition, the seed, the opponent, and the per-step data, so replaying it
through a fresh engine must reproduce rewards, observations, and outcome
exactly. Records serialize as line-delimited JSON: one header line followed
by one line per step; several records may share a file.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
from dataclasses import dataclass, field

from .engine import (
    RewardConfig,
    action_mask,
    init_world,
    step as engine_step,
)
from .errors import ConfigError, SkirmishError
from .observation import build_observations, build_state, observation_layout, state_layout
from .policies import Policy
from .rng import STREAM_POLICY, derive_seed, stream
from .scenario import (
    ScenarioInstance,
    ScenarioSpec,
    SpawnKind,
    TeamGen,
    parse_scenario,
    sample_instance,
)
from .units import StatTable, default_stat_table, load_stat_table

RECORD_KIND = "skirmish-episode"
RECORD_VERSION = 1


def spec_to_dict(spec: ScenarioSpec) -> dict:
    """Config-file form of a spec (round-trips through ``parse_scenario``)."""
    out: dict = {
        "name": spec.name,
        "race": spec.race.race,
        "n_allies": spec.n_allies,
        "n_enemies": spec.n_enemies,
        "episode_limit": spec.episode_limit,
        "map": [spec.map_width, spec.map_height],
        "min_separation": spec.min_separation,
        "avail_mask": spec.avail_mask_enabled,
        "opponent": spec.opponent,
    }
    spawn: SpawnKind = spec.spawn
    if spawn.kind in ("reflect", "surround"):
        out["spawn"] = spawn.kind
    elif spawn.kind == "fixed":
        out["spawn"] = {
            "kind": "fixed",
            "ally": [list(p) for p in spawn.ally_positions],
            "enemy": [list(p) for p in spawn.enemy_positions],
        }
    else:
        out["spawn"] = {"kind": "custom", "name": spawn.custom_name}
    team: TeamGen = spec.team
    if team.kind == "fixed":
        out["team"] = {
            "kind": "fixed",
            "ally": list(team.ally_types),
            "enemy": list(team.enemy_types),
        }
    elif team.kind == "custom":
        out["team"] = {"kind": "custom", "name": team.custom_name}
    if spec.epo_p is not None:
        out["epo_p"] = spec.epo_p
    return out


@dataclass
class EpisodeRecord:
    scenario: dict
    seed: int
    opponent: str
    policy_name: str
    stat_version: int
    actions: list[list[int]] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    won: bool = False
    observations: list | None = None   # per step: (n_allies, obs_dim) nested lists
    states: list | None = None         # per step: (state_dim,) nested lists
    avail_masks: list | None = None    # per step: (n_allies, n_actions) of 0/1
    epo_verdicts: list | None = None   # per step: verdict dump
    targets: list[float] | None = None # per step scalar regression target

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def total_return(self) -> float:
        return float(sum(self.rewards))

    def to_lines(self) -> list[str]:
        fields = ["actions", "reward"]
        for name in ("observations", "states", "avail_masks", "epo_verdicts", "targets"):
            if getattr(self, name) is not None:
                fields.append(name)
        header = {
            "kind": RECORD_KIND,
            "version": RECORD_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "opponent": self.opponent,
            "policy": self.policy_name,
            "stat_version": self.stat_version,
            "won": self.won,
            "length": self.length,
            "fields": fields,
        }
        lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
        for t in range(self.length):
            row: dict = {"t": t, "actions": self.actions[t], "reward": self.rewards[t]}
            if self.observations is not None:
                row["observations"] = self.observations[t]
            if self.states is not None:
                row["states"] = self.states[t]
            if self.avail_masks is not None:
                row["avail_masks"] = self.avail_masks[t]
            if self.epo_verdicts is not None:
                row["epo_verdicts"] = self.epo_verdicts[t]
            if self.targets is not None:
                row["targets"] = self.targets[t]
            lines.append(json.dumps(row, sort_keys=True, separators=(",", ":")))
        return lines

    def hash(self) -> str:
        digest = hashlib.sha256()
        for line in self.to_lines():
            digest.update(line.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()

    @staticmethod
    def from_lines(lines: list[str]) -> "EpisodeRecord":
        header = json.loads(lines[0])
        if header.get("kind") != RECORD_KIND:
            raise ConfigError("not an episode record header")
        record = EpisodeRecord(
            scenario=header["scenario"],
            seed=int(header["seed"]),
            opponent=header["opponent"],
            policy_name=header["policy"],
            stat_version=int(header["stat_version"]),
            won=bool(header["won"]),
        )
        fields = header.get("fields", ["actions", "reward"])
        for name in ("observations", "states", "avail_masks", "epo_verdicts", "targets"):
            if name in fields:
                setattr(record, name, [])
        for line in lines[1:]:
            row = json.loads(line)
            record.actions.append([int(a) for a in row["actions"]])
            record.rewards.append(float(row["reward"]))
            for name in ("observations", "states", "avail_masks", "epo_verdicts", "targets"):
                if getattr(record, name) is not None:
                    getattr(record, name).append(row[name])
        if record.length != int(header["length"]):
            raise ConfigError("episode record is truncated")
        return record


def save_records(records: list[EpisodeRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            for line in record.to_lines():
                fh.write(line)
                fh.write("\n")


def load_records(path: str) -> list[EpisodeRecord]:
    groups: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if f'"kind":"{RECORD_KIND}"' in line:
                groups.append([])
            if not groups:
                raise ConfigError(f"{path}: data before the first record header")
            groups[-1].append(line)
    return [EpisodeRecord.from_lines(g) for g in groups]


def run_episode(
    spec: ScenarioSpec,
    policy: Policy,
    seed: int,
    opponent: str | None = None,
    stat_table: StatTable | None = None,
    reward_cfg: RewardConfig | None = None,
    record_observations: bool = False,
    record_states: bool = False,
    record_avail: bool = False,
    record_epo: bool = False,
    instance: ScenarioInstance | None = None,
) -> EpisodeRecord:
    """Play one seeded episode and return its record."""
    opponent = opponent or spec.opponent
    if instance is None:
        instance = sample_instance(spec, seed)
    world = init_world(instance, seed, stat_table, reward_cfg, opponent)
    policy_rng = stream(seed, STREAM_POLICY)
    policy.reset(world, seed)

    record = EpisodeRecord(
        scenario=spec_to_dict(spec),
        seed=seed,
        opponent=opponent,
        policy_name=policy.name,
        stat_version=world.stat_table.version,
    )
    if record_observations:
        record.observations = []
        obs_layout = observation_layout(world)
    if record_states:
        record.states = []
        st_layout = state_layout(world)
    if record_avail:
        record.avail_masks = []
    if record_epo and world.epo is not None:
        record.epo_verdicts = []

    n = world.n_allies
    while not world.terminated:
        avail = [action_mask(world, i) for i in range(n)]
        if record.observations is not None:
            record.observations.append(build_observations(world, obs_layout).tolist())
        if record.states is not None:
            record.states.append(build_state(world, st_layout).tolist())
        if record.avail_masks is not None:
            record.avail_masks.append([[int(v) for v in row] for row in avail])
        if record.epo_verdicts is not None:
            record.epo_verdicts.append(world.epo.dump())
        joint = [policy.act(world, i, avail[i], policy_rng) for i in range(n)]
        result = engine_step(world, joint)
        record.actions.append([int(a) for a in joint])
        record.rewards.append(result.reward)
    record.won = world.won
    return record


@dataclass
class EpisodeSummary:
    seed: int
    episode_return: float
    length: int
    won: bool


@dataclass
class EvalResult:
    win_rate: float
    mean_return: float
    episodes: list[EpisodeSummary]


def _episode_task(args) -> EpisodeSummary:
    spec_dict, policy, seed, opponent, stat_path = args
    table = load_stat_table(stat_path) if stat_path else None
    spec = parse_scenario(spec_dict, table)
    record = run_episode(spec, policy, seed, opponent, stat_table=table)
    return EpisodeSummary(seed, record.total_return, record.length, record.won)


def _episode_batch_task(args) -> list[EpisodeSummary]:
    """Run a batch of seeds in one worker call (amortizes IPC and parsing)."""
    spec_dict, policy, seeds, opponent, stat_path = args
    table = load_stat_table(stat_path) if stat_path else None
    spec = parse_scenario(spec_dict, table)
    out = []
    for seed in seeds:
        record = run_episode(spec, policy, seed, opponent, stat_table=table)
        out.append(EpisodeSummary(seed, record.total_return, record.length, record.won))
    return out


def evaluate(
    policy: Policy,
    spec: ScenarioSpec,
    n_episodes: int = 20,
    seed: int = 0,
    opponent: str | None = None,
    stat_table: StatTable | None = None,
    stat_table_path: str | None = None,
    jobs: int = 1,
) -> EvalResult:
    """Win rate and mean return over ``n_episodes`` with derived seeds.

    Deterministic for a given (policy, spec, seed, n_episodes), regardless
    of ``jobs``: results are collected in episode order.
    """
    if n_episodes <= 0:
        raise ConfigError("n_episodes must be positive")
    seeds = [derive_seed(seed, i) for i in range(n_episodes)]
    if jobs > 1:
        # Batch seeds so each worker call runs several episodes; results are
        # reassembled in seed order, so the outcome is jobs-independent.
        spec_dict = spec_to_dict(spec)
        n_batches = min(len(seeds), jobs * 4)
        batches = [seeds[i::n_batches] for i in range(n_batches)]
        tasks = [(spec_dict, policy, batch, opponent, stat_table_path) for batch in batches]
        methods = multiprocessing.get_all_start_methods()
        ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
        with ctx.Pool(jobs) as pool:
            results = pool.map(_episode_batch_task, tasks)
        by_seed = {e.seed: e for batch in results for e in batch}
        episodes = [by_seed[s] for s in seeds]
    else:
        episodes = []
        for s in seeds:
            record = run_episode(spec, policy, s, opponent, stat_table=stat_table)
            episodes.append(EpisodeSummary(s, record.total_return, record.length, record.won))
    wins = sum(e.won for e in episodes)
    mean_return = float(sum(e.episode_return for e in episodes) / n_episodes)
    return EvalResult(win_rate=wins / n_episodes, mean_return=mean_return, episodes=episodes)


@dataclass
class ReplayReport:
    ok: bool
    steps_checked: int
    first_divergence: tuple[int, str] | None
    version_mismatch: bool
    message: str

    def __str__(self) -> str:
        return self.message


def replay(record: EpisodeRecord, stat_table: StatTable | None = None) -> ReplayReport:
    """Re-run an engine from a record and verify byte equality of the outputs."""
    table = stat_table or default_stat_table()
    version_mismatch = table.version != record.stat_version

    def report(ok, steps, divergence, message):
        return ReplayReport(ok, steps, divergence, version_mismatch, message)

    spec = parse_scenario(record.scenario, table)
    instance = sample_instance(spec, record.seed)
    world = init_world(instance, record.seed, table, opponent=record.opponent)
    obs_layout = observation_layout(world) if record.observations is not None else None
    st_layout = state_layout(world) if record.states is not None else None

    for t, joint in enumerate(record.actions):
        if world.terminated:
            return report(False, t, (t, "termination"), f"diverged at step {t}: engine terminated early")
        if record.observations is not None:
            obs = build_observations(world, obs_layout)
            if obs.tolist() != record.observations[t]:
                return report(False, t, (t, "observations"), f"diverged at step {t}: observations differ")
        if record.states is not None:
            if build_state(world, st_layout).tolist() != record.states[t]:
                return report(False, t, (t, "states"), f"diverged at step {t}: state differs")
        if record.avail_masks is not None:
            avail = [[int(v) for v in action_mask(world, i)] for i in range(world.n_allies)]
            if avail != record.avail_masks[t]:
                return report(False, t, (t, "avail_masks"), f"diverged at step {t}: availability differs")
        try:
            result = engine_step(world, joint)
        except SkirmishError as exc:
            return report(False, t, (t, "actions"),
                          f"diverged at step {t}: recorded action rejected ({exc})")
        if result.reward != record.rewards[t]:
            return report(
                False,
                t,
                (t, "reward"),
                f"diverged at step {t}: reward {result.reward!r} != recorded {record.rewards[t]!r}"
                + (" (stat table version mismatch)" if version_mismatch else ""),
            )
    if not world.terminated:
        return report(False, record.length, (record.length, "termination"),
                      "engine did not terminate where the record ends")
    if world.won != record.won:
        return report(False, record.length, (record.length, "outcome"),
                      f"outcome differs: engine won={world.won}, recorded won={record.won}")
    suffix = " (stat table version mismatch)" if version_mismatch else ""
    return report(True, record.length, None, f"replay ok: {record.length} steps match{suffix}")
