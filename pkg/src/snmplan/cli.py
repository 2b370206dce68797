"""Command-line entry points: ``snmplan`` and the ``snm-table`` alias for table verbs."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .harness import (
    NOISE_GRID,
    ScenarioConfig,
    load_scenario,
    measure_sweep,
    perturb_pomdp,
    random_bound_suite,
    random_environments,
    rows_to_csv,
    run_experiment,
    sensitivity_sweep,
    verify_bounds,
    write_csv,
)
from .pomdp import DiscretePomdp, InstanceTooLarge
from .snm import InvalidScenario, MissingTable, SnmLookupTable, build_lookup_table

EXIT_CODES = {"error": 1, "invalid-argument": 2, "missing-table": 3, "invalid-scenario": 4, "instance-too-large": 5}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- table verbs ---------------------------------------------------------------


def _scenario_from_args(args):
    try:
        sc = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        raise CliError("invalid-scenario", str(exc)) from exc
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError("invalid-scenario", f"cannot read scenario {args.scenario!r}: {exc}") from exc
    if getattr(args, "collision", None) is not None:
        sc = replace(sc, collision_dynamics=args.collision)
    if getattr(args, "observation", None):
        sc = replace(sc, observation=args.observation)
    e_t = sc.noise.e_T if args.e_T is None else args.e_T
    e_z = (e_t if args.e_T is not None else sc.noise.e_Z) if args.e_Z is None else args.e_Z
    return sc.with_noise(e_t, e_z)


def cmd_table_build(args):
    sc = _scenario_from_args(args)
    table = build_lookup_table(sc.model(), np.asarray(sc.start_state), args.nodes, n=args.samples,
                               k_per_dim=args.bins, seed=args.seed, with_mong=args.with_mong,
                               variant=sc.name + ("-collision" if sc.collision_dynamics else ""), jobs=args.jobs)
    table.save(args.out)
    print(json.dumps({"out": args.out, **table.summary(), "hash": table.content_hash()}))


def cmd_table_show(args):
    table = SnmLookupTable.load(args.table)
    print(json.dumps({"metadata": table.metadata, **table.summary(), "hash": table.content_hash()}, indent=2))


def cmd_table_query(args):
    table = SnmLookupTable.load(args.table)
    state = np.array(_floats(args.state))
    i = int(table.nearest(state[None, :])[0])
    print(json.dumps({"nearest": table.states[i].tolist(), "psi_t": float(table.psi_t[i]),
                      "psi_z": float(table.psi_z[i])}))


def cmd_table_measure(args):
    levels = args.levels or list(NOISE_GRID)
    config = ScenarioConfig(scenario=args.scenario, noise_levels=levels, collision_dynamics=args.collision,
                            observation=args.observation, planners=[], seed=args.seed, out=args.out)
    rows = measure_sweep(config, nodes=args.nodes, samples=args.samples, mong_states=args.mong_states,
                         jobs=args.jobs, tables_out=args.tables_out)
    if not args.out:
        sys.stdout.write(rows_to_csv(rows))


def _add_table_verbs(sub):
    b = sub.add_parser("build", help="sample states with the RRT and store per-state SNM")
    b.add_argument("--scenario", default="maze", help="bundled name (maze, empty) or scenario file")
    b.add_argument("--e-T", dest="e_T", type=float, default=None)
    b.add_argument("--e-Z", dest="e_Z", type=float, default=None)
    b.add_argument("--collision", action=argparse.BooleanOptionalAction, default=None)
    b.add_argument("--observation", choices=("additive", "nonadditive"), default=None)
    b.add_argument("--nodes", type=int, default=300)
    b.add_argument("--samples", type=int, default=10_000)
    b.add_argument("--bins", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--with-mong", action="store_true", help="also store raw MoNG per state")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_table_build)

    s = sub.add_parser("show", help="print table metadata and mean values")
    s.add_argument("table")
    s.set_defaults(func=cmd_table_show)

    q = sub.add_parser("query", help="nearest table state to a comma-separated state")
    q.add_argument("table")
    q.add_argument("--state", required=True)
    q.set_defaults(func=cmd_table_query)

    m = sub.add_parser("measure", help="mean SNM and MoNG over fresh tables at each noise level")
    m.add_argument("--scenario", default="maze")
    m.add_argument("--levels", type=_floats, default=None, help="noise levels, e_T = e_Z")
    m.add_argument("--collision", action=argparse.BooleanOptionalAction, default=None)
    m.add_argument("--observation", choices=("additive", "nonadditive"), default=None)
    m.add_argument("--nodes", type=int, default=300)
    m.add_argument("--samples", type=int, default=10_000)
    m.add_argument("--mong-states", type=int, default=0)
    m.add_argument("--tables-out", default=None, help="directory for the built tables")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_table_measure)


# -- experiment verbs ----------------------------------------------------------


def _config_from_args(args) -> ScenarioConfig:
    path = Path(args.config)
    if not path.exists():
        raise CliError("invalid-argument", f"config file {args.config!r} does not exist")
    try:
        config = ScenarioConfig.load(path)
    except FileNotFoundError as exc:
        raise CliError("invalid-scenario", str(exc)) from exc
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = args.out
    if args.build_tables:
        updates["build_tables"] = True
    if args.table_dir is not None:
        updates["table_dir"] = args.table_dir
    if getattr(args, "episodes", None) is not None:
        updates["episodes"] = args.episodes
    return replace(config, **updates) if updates else config


def _experiment_args(p):
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="CSV path (stdout when absent)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--build-tables", action="store_true", help="build missing SNM tables")
    p.add_argument("--table-dir", default=None)


def cmd_run(args):
    config = _config_from_args(args)
    rows = run_experiment(config, jobs=args.jobs)
    if not config.out:
        sys.stdout.write(rows_to_csv(rows))


def cmd_sweep(args):
    config = _config_from_args(args)
    rows = sensitivity_sweep(config, args.thresholds, jobs=args.jobs)
    if not config.out:
        sys.stdout.write(rows_to_csv(rows))


def cmd_verify_bounds(args):
    if args.dp:
        try:
            dp = DiscretePomdp.load(args.dp)
        except FileNotFoundError as exc:
            raise CliError("invalid-argument", f"POMDP file {args.dp!r} does not exist") from exc
        rng = np.random.default_rng(args.seed)
        if args.dp_hat:
            reports = [verify_bounds(dp, DiscretePomdp.load(args.dp_hat), args.depth)]
        else:
            reports = [verify_bounds(dp, perturb_pomdp(dp, args.perturbation, rng), args.depth)
                       for _ in range(args.perturbations)]
    else:
        reports = random_bound_suite(args.random, args.perturbations, args.depth, args.seed)
    rows = [{**r.__dict__, "holds": r.holds} for r in reports]
    _emit(rows_to_csv(rows), args.out)
    violations = sum(not r.holds for r in reports)
    print(json.dumps({"checks": len(reports), "violations": violations}), file=sys.stderr)
    return 1 if violations else 0


def cmd_gen_envs(args):
    if args.count < 1:
        raise CliError("invalid-argument", "count must be at least 1")
    base = load_scenario(args.base)
    scenarios = random_environments(args.count, args.obstacles, args.seed, args.out, args.size, base=base)
    print(json.dumps({"written": len(scenarios), "out": args.out}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snmplan", description="SNM measurement, planning and experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    table = sub.add_parser("table", help="SNM lookup tables")
    _add_table_verbs(table.add_subparsers(dest="table_verb", required=True))

    r = sub.add_parser("run", help="run an experiment config and write result rows")
    _experiment_args(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-threshold", help="switching-planner rows over SNM thresholds")
    _experiment_args(s)
    s.add_argument("--thresholds", type=_floats, default=[round(0.1 * i, 1) for i in range(1, 10)])
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify-bounds", help="value-loss and alpha-gap bound checks on finite POMDPs")
    v.add_argument("--dp", default=None, help="POMDP JSON file; random instances when absent")
    v.add_argument("--dp-hat", default=None, help="approximate POMDP file instead of random perturbations")
    v.add_argument("--depth", type=int, default=3)
    v.add_argument("--perturbation", type=float, default=0.1)
    v.add_argument("--perturbations", type=int, default=10)
    v.add_argument("--random", type=int, default=100, help="number of random 3-state POMDPs")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify_bounds)

    g = sub.add_parser("gen-envs", help="random obstacle scenarios")
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--obstacles", type=_ints, default=[5, 10, 15, 20, 25, 30])
    g.add_argument("--size", type=float, default=0.1)
    g.add_argument("--base", default="empty")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_envs)
    return p


def _dispatch(parser, argv) -> int:
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CODES["invalid-argument"]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return int(args.func(args) or 0)
    except CliError as exc:
        category, message = exc.category, str(exc)
    except MissingTable as exc:
        category, message = "missing-table", str(exc)
    except InvalidScenario as exc:
        category, message = "invalid-scenario", str(exc)
    except InstanceTooLarge as exc:
        category, message = "instance-too-large", str(exc)
    except (ValueError, FileNotFoundError) as exc:
        category, message = "invalid-argument", str(exc)
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES[category]


def main(argv=None) -> int:
    return _dispatch(build_parser(), argv)


def table_main(argv=None) -> int:
    """``snm-table <verb>`` is ``snmplan table <verb>``."""
    return main(["table", *(sys.argv[1:] if argv is None else argv)])


if __name__ == "__main__":
    sys.exit(main())
