"""Command-line entry point.

Subcommands: run, eval, sample, export-dataset, regress, replay,
list-scenarios. Every command is deterministic given its flags and seed.
Exit codes: 0 success, 2 configuration error, 3 replay divergence.
"""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from . import __version__
from .episodes import EvalResult, evaluate, load_records, replay, run_episode, save_records
from .errors import ConfigError, ScenarioError, SkirmishError
from .policies import fit_openloop, get_policy, policy_names
from .regression import (
    RegressionDataset,
    RegressorConfig,
    export_regression_dataset,
    run_masked_regressions,
)
from .rng import derive_seed
from .observation import MASK_IDS
from .scenario import ScenarioSpec, find_scenario, load_scenario_file, registry, sample_instance
from .units import StatTable, default_stat_table, load_stat_table, parse_stat_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--scenario", type=str, default=None, help="scenario name")
    p.add_argument("--config", type=str, default=None, help="YAML config with scenarios / stat table")
    p.add_argument("--stat-table", type=str, default=None, help="unit stat table YAML path")
    p.add_argument("--epo-p", type=float, default=None,
                   help="enable stochastic visibility with this grant probability")
    p.add_argument("--no-avail-mask", action="store_true",
                   help="disable the availability mask (invalid actions become no-ops)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--json", action="store_true", help="machine-readable output")


def _load_config(args) -> tuple[StatTable, list[ScenarioSpec]]:
    table = None
    extra: list[ScenarioSpec] = []
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                raw = yaml.safe_load(fh.read())
            except yaml.YAMLError as exc:
                raise ConfigError(f"{args.config}: not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config}: top level must be a mapping")
        if "stat_table" in raw:
            entry = raw["stat_table"]
            table = load_stat_table(entry) if isinstance(entry, str) else parse_stat_table(entry)
        if "scenarios" in raw:
            extra = load_scenario_file(args.config, table)
    if args.stat_table:
        table = load_stat_table(args.stat_table)
    return table or default_stat_table(), extra


def _resolve_scenario(args, extra: list[ScenarioSpec]) -> ScenarioSpec:
    if not args.scenario:
        raise ConfigError("--scenario is required for this command")
    spec = find_scenario(args.scenario, extra)
    overrides = {}
    if args.epo_p is not None:
        overrides["epo_p"] = args.epo_p
    if args.no_avail_mask:
        overrides["avail_mask_enabled"] = False
    return spec.with_overrides(**overrides) if overrides else spec


def _make_policy(args):
    if args.policy == "openloop":
        if not getattr(args, "fit_from", None):
            raise ConfigError("--policy openloop requires --fit-from <records.jsonl>")
        return fit_openloop(load_records(args.fit_from))
    return get_policy(args.policy)


def _print_eval(result: EvalResult, args, spec: ScenarioSpec, as_json: bool) -> None:
    if as_json:
        payload = {
            "scenario": spec.name,
            "policy": args.policy,
            "seed": args.seed,
            "episodes": [
                {"seed": e.seed, "return": e.episode_return, "length": e.length, "won": e.won}
                for e in result.episodes
            ],
            "win_rate": result.win_rate,
            "mean_return": result.mean_return,
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        print(
            f"scenario={spec.name} policy={args.policy} episodes={len(result.episodes)} "
            f"seed={args.seed} win_rate={result.win_rate:.3f} mean_return={result.mean_return:.6f}"
        )


def cmd_run(args) -> int:
    table, extra = _load_config(args)
    spec = _resolve_scenario(args, extra)
    policy = _make_policy(args)
    if args.jobs > 1 and not args.record and not args.record_obs:
        result = evaluate(
            policy,
            spec,
            n_episodes=args.episodes,
            seed=args.seed,
            opponent=args.opponent,
            stat_table=table,
            stat_table_path=args.stat_table,
            jobs=args.jobs,
        )
        if not args.json:
            for i, e in enumerate(result.episodes):
                print(
                    f"episode={i} seed={e.seed} steps={e.length} "
                    f"return={e.episode_return:.6f} won={e.won}"
                )
        _print_eval(result, args, spec, args.json)
        return EXIT_OK
    records = []
    summaries = []
    for i in range(args.episodes):
        seed = derive_seed(args.seed, i)
        record = run_episode(
            spec,
            policy,
            seed,
            opponent=args.opponent,
            stat_table=table,
            record_observations=bool(args.record_obs),
            record_states=bool(args.record_obs),
        )
        summaries.append(record)
        if args.record:
            records.append(record)
        if not args.json:
            print(
                f"episode={i} seed={seed} steps={record.length} "
                f"return={record.total_return:.6f} won={record.won}"
            )
    if args.record:
        save_records(records, args.record)
    wins = sum(r.won for r in summaries)
    mean_return = sum(r.total_return for r in summaries) / len(summaries)
    if args.json:
        payload = {
            "scenario": spec.name,
            "policy": args.policy,
            "seed": args.seed,
            "episodes": [
                {"seed": r.seed, "return": r.total_return, "length": r.length, "won": r.won}
                for r in summaries
            ],
            "win_rate": wins / len(summaries),
            "mean_return": mean_return,
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        print(
            f"scenario={spec.name} policy={args.policy} episodes={args.episodes} "
            f"seed={args.seed} win_rate={wins / len(summaries):.3f} mean_return={mean_return:.6f}"
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    table, extra = _load_config(args)
    spec = _resolve_scenario(args, extra)
    policy = _make_policy(args)
    result = evaluate(
        policy,
        spec,
        n_episodes=args.episodes,
        seed=args.seed,
        opponent=args.opponent,
        stat_table=table,
        stat_table_path=args.stat_table,
        jobs=args.jobs,
    )
    _print_eval(result, args, spec, args.json)
    return EXIT_OK


def cmd_sample(args) -> int:
    _, extra = _load_config(args)
    spec = _resolve_scenario(args, extra)
    instance = sample_instance(spec, args.seed)
    payload = {
        "scenario": spec.name,
        "seed": args.seed,
        "ally_types": list(instance.ally_types),
        "enemy_types": list(instance.enemy_types),
        "ally_positions": [list(p) for p in instance.ally_positions],
        "enemy_positions": [list(p) for p in instance.enemy_positions],
    }
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(yaml.safe_dump(payload, sort_keys=False, default_flow_style=None).rstrip())
    return EXIT_OK


def cmd_export_dataset(args) -> int:
    table, extra = _load_config(args)
    spec = _resolve_scenario(args, extra)
    policy = _make_policy(args)
    dataset = export_regression_dataset(
        policy,
        spec,
        n_train=args.train,
        n_val=args.val,
        seed=args.seed,
        gamma=args.gamma,
        opponent=args.opponent,
        stat_table=table,
        stat_table_path=args.stat_table,
        jobs=args.jobs,
    )
    dataset.save(args.out)
    print(
        f"dataset={args.out} rows={len(dataset.target)} train_episodes={args.train} "
        f"val_episodes={args.val} gamma={args.gamma}"
    )
    return EXIT_OK


def cmd_regress(args) -> int:
    dataset = RegressionDataset.load(args.dataset)
    mask_ids = list(args.mask) if args.mask else ["everything", "nothing"]
    if mask_ids == ["all"]:
        mask_ids = list(MASK_IDS)
    unknown = [m for m in mask_ids if m not in MASK_IDS]
    if unknown:
        raise ConfigError(f"unknown masks: {unknown}; choose from {list(MASK_IDS)}")
    cfg = RegressorConfig(kind=args.regressor, alpha=args.alpha, seed=args.seed)
    results = run_masked_regressions(dataset, mask_ids, cfg, jobs=args.jobs)
    if args.json:
        payload = [
            {
                "mask": m.mask_id,
                "q_bar": m.q_bar,
                "eps_rmse": m.eps_rmse,
                "eps_rmse_over_q_bar": m.ratio,
                "eps_abs": m.eps_abs,
                "delta_ratio": m.delta_ratio,
            }
            for m in results
        ]
        print(json.dumps(payload, sort_keys=True))
        return EXIT_OK
    headers = ("mask",) + results[0].COLUMNS
    rows = [
        (
            m.mask_id,
            f"{m.q_bar:.4f}",
            f"{m.eps_rmse:.4f}",
            f"{m.ratio:.4f}",
            f"{m.eps_abs:.4f}",
            "" if m.delta_ratio is None else f"{m.delta_ratio:.4f}",
        )
        for m in results
    ]
    widths = [max(len(str(r[c])) for r in [headers] + rows) for c in range(len(headers))]
    for row in [headers] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip())
    return EXIT_OK


def cmd_replay(args) -> int:
    table, _ = _load_config(args)
    records = load_records(args.record)
    if not records:
        raise ConfigError(f"{args.record}: no episode records found")
    diverged = False
    for i, record in enumerate(records):
        report = replay(record, stat_table=table)
        print(f"record={i} seed={record.seed} {report.message}")
        diverged = diverged or not report.ok
    return EXIT_DIVERGENCE if diverged else EXIT_OK


def cmd_list_scenarios(args) -> int:
    table, extra = _load_config(args)
    specs = extra + registry(table if args.stat_table or args.config else None)
    if args.json:
        payload = [
            {
                "name": s.name,
                "race": s.race.race,
                "n_allies": s.n_allies,
                "n_enemies": s.n_enemies,
                "spawn": s.spawn.kind,
                "epo_p": s.epo_p,
                "avail_mask": s.avail_mask_enabled,
                "episode_limit": s.episode_limit,
            }
            for s in specs
        ]
        print(json.dumps(payload, sort_keys=True))
        return EXIT_OK
    print(f"{'name':<22} {'race':<8} {'allies':>6} {'enemies':>7} {'spawn':<9} "
          f"{'epo_p':>5} {'mask':<5} {'limit':>5}")
    for s in specs:
        epo = "-" if s.epo_p is None else f"{s.epo_p:g}"
        print(
            f"{s.name:<22} {s.race.race:<8} {s.n_allies:>6} {s.n_enemies:>7} "
            f"{s.spawn.kind:<9} {epo:>5} {str(s.avail_mask_enabled).lower():<5} "
            f"{s.episode_limit:>5}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skirmish",
        description="Procedurally generated micromanagement combat simulator",
    )
    parser.add_argument("--version", action="version", version=f"skirmish {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    policies = list(policy_names()) + ["openloop"]

    p = sub.add_parser("run", help="play episodes and print per-episode results")
    _add_common(p)
    p.add_argument("--policy", choices=policies, default="random")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--opponent", type=str, default=None,
                   help="override the scenario's opponent controller")
    p.add_argument("--record", type=str, default=None, help="save episode records to this file")
    p.add_argument("--record-obs", action="store_true", help="include observations in records")
    p.add_argument("--fit-from", type=str, default=None, help="records to fit an openloop policy")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate a policy (win rate, mean return)")
    _add_common(p)
    p.add_argument("--policy", choices=policies, default="focus_fire")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--opponent", type=str, default=None,
                   help="override the scenario's opponent controller")
    p.add_argument("--fit-from", type=str, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="sample a scenario instance and print it")
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("export-dataset", help="record episodes into a regression dataset")
    _add_common(p)
    p.add_argument("--policy", choices=policies, default="focus_fire")
    p.add_argument("--train", type=int, default=512, help="training-fold episodes")
    p.add_argument("--val", type=int, default=256, help="validation-fold episodes")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--opponent", type=str, default=None,
                   help="override the scenario's opponent controller")
    p.add_argument("--fit-from", type=str, default=None)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_export_dataset)

    p = sub.add_parser("regress", help="masked-feature regression metrics")
    _add_common(p)
    p.add_argument("--dataset", type=str, required=True)
    p.add_argument("--mask", action="append", default=None,
                   help="mask id (repeatable), or 'all' for every mask")
    p.add_argument("--regressor", choices=("ridge", "mlp"), default="ridge")
    p.add_argument("--alpha", type=float, default=1e-3)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("replay", help="verify recorded episodes against the engine")
    _add_common(p)
    p.add_argument("--record", type=str, required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("list-scenarios", help="print the scenario registry")
    _add_common(p)
    p.set_defaults(func=cmd_list_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SkirmishError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
