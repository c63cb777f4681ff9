"""Command-line front end: ``vawtevo {translate,evolve,coevolve,eval,stats}``.

Exit codes: 0 success, 1 usage or genome parse error, 2 runtime or oracle
error.  Every subcommand takes ``--config FILE`` with ``key=value`` lines;
flags given on the command line override it.  Run logs begin with the
resolved settings in the same format, so a log can be passed back as
``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .evolution import ENGINES, RunConfig, RunResult, seed_array_populations
from .genome import MAX_STEP, MUTATION_RATE, TOURNAMENT_SIZE, GenomeError, Genotype, parse_genotype
from .mesh import SMOOTHING_STEPS, extract_surface, smooth, write_stl
from .morphology import build_grid, dump_pbm
from .oracle import Evaluator, HardwareError, HardwareEvaluator, SimulatedEvaluator, WindSetup
from .runlog import LogFormatError, RunLog, read_log
from .stats import ALTERNATIVES, TESTS, StatsError, compare, format_report
from .surrogate import EPOCHS, HIDDEN

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# settings that locate files or control this process, never written to a log header
_NOT_LOGGED = {"command", "config", "log", "repeats", "verbose", "handler"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# --- config files ---------------------------------------------------------


def read_config(path: str | Path) -> dict[str, str]:
    """``key=value`` lines; a leading ``#`` is allowed so run-log headers load too."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            line = line[1:].strip()
            if "=" not in line:
                continue
        elif not line:
            continue
        elif "=" not in line:
            # a run log's CSV body ends the header
            if out:
                break
            raise UsageError(f"{path} line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def config_argv(parser: argparse.ArgumentParser, config: dict[str, str]) -> list[str]:
    """Turn config entries into option tokens that the subparser will type-check."""
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    argv: list[str] = []
    for key, value in config.items():
        action = actions.get(key)
        if action is None or key in _NOT_LOGGED:
            raise UsageError(f"unknown config key {key!r}")
        long_opt = next(o for o in action.option_strings if o.startswith("--"))
        if isinstance(action, argparse.BooleanOptionalAction):
            if value.lower() in ("true", "1", "yes"):
                argv.append(long_opt)
            elif value.lower() in ("false", "0", "no"):
                argv.append("--no-" + long_opt[2:])
            else:
                raise UsageError(f"config key {key!r} needs true or false, got {value!r}")
        elif value != "":
            argv += [long_opt, value]
    return argv


def resolved(args: argparse.Namespace) -> dict[str, str]:
    return {k: str(v) for k, v in sorted(vars(args).items()) if k not in _NOT_LOGGED and v is not None}


# --- shared options -------------------------------------------------------


def _add_run_options(p: argparse.ArgumentParser, budget: int) -> None:
    p.add_argument("--budget", type=int, default=budget, help="real evaluations (default %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="CSV run log to write")
    p.add_argument("--pop-size", type=int, default=20)
    p.add_argument("--tournament", type=int, default=TOURNAMENT_SIZE)
    p.add_argument("--mutation-rate", type=float, default=MUTATION_RATE)
    p.add_argument("--max-step", type=int, default=MAX_STEP)
    p.add_argument("--crossover-rate", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=EPOCHS, help="surrogate training epochs per generation")
    p.add_argument("--hidden", type=int, default=HIDDEN, help="surrogate hidden units")
    p.add_argument("--warm-start-generations", type=int, default=0,
                   help="plain generations before the surrogate starts screening")
    p.add_argument("--oracle", choices=("sim", "hw"), default="sim")
    p.add_argument("--wind-speed", type=float, default=WindSetup.speed, help="sim oracle free-stream speed (m/s)")
    p.add_argument("--exchange-dir", help="hw oracle exchange directory")
    p.add_argument("--poll-interval", type=float, default=5.0, help="hw oracle poll period (s)")
    p.add_argument("--timeout", type=float, help="hw oracle timeout per batch (s)")
    p.add_argument("--smooth", type=int, default=SMOOTHING_STEPS, help="hw oracle smoothing steps")
    p.add_argument("--stl-format", choices=("binary", "ascii"), default="binary")
    p.add_argument("--repeats", type=int, default=1,
                   help="run seeds seed..seed+N-1; --log must then contain {seed}")


def build_parser() -> _Parser:
    parser = _Parser(prog="vawtevo", description="Evolve voxel turbine rotors against a fitness oracle.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("translate", help="genome to voxels and STL")
    p.add_argument("genome", help='e.g. "xy=5,8,2,4,...;z=0,3,-2,1,0"')
    p.add_argument("--stl", help="output STL path")
    p.add_argument("--smooth", type=int, default=SMOOTHING_STEPS, help="Laplacian steps (default %(default)s)")
    p.add_argument("--format", choices=("binary", "ascii"), default="binary")
    p.add_argument("--dump-voxels", help="write the voxel grid as PBM layers")
    p.set_defaults(handler=cmd_translate)

    p = sub.add_parser("evolve", help="single-turbine GA or SGA run")
    p.add_argument("--mode", choices=("ga", "sga"), default="ga")
    p.add_argument("--z-varying", action=argparse.BooleanOptionalAction, default=False)
    _add_run_options(p, budget=100)
    p.set_defaults(handler=cmd_evolve)

    p = sub.add_parser("coevolve", help="two-turbine CGA or SCGA run")
    p.add_argument("--mode", choices=("cga", "scga"), default="cga")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--seed-from", help="single-turbine run log to seed both species")
    src.add_argument("--random-init", action=argparse.BooleanOptionalAction, default=None)
    _add_run_options(p, budget=160)
    p.set_defaults(handler=cmd_coevolve)

    p = sub.add_parser("eval", help="simulated rpm of one genome or a pair")
    p.add_argument("genome")
    p.add_argument("--partner", help="right-hand turbine genome for a pair")
    p.add_argument("--wind-speed", type=float, default=WindSetup.speed)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("stats", help="compare final best fitness of two arms of run logs")
    p.add_argument("--logs", nargs="+", action="append", required=True, metavar="CSV",
                   help="one --logs group per arm (exactly two arms)")
    p.add_argument("--test", choices=sorted(TESTS), default="rank")
    p.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided",
                   help="'greater' tests whether arm B beats arm A")
    p.set_defaults(handler=cmd_stats)

    for name, action in sub.choices.items():
        action.add_argument("--config", help="key=value settings file; flags override")
    return parser


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        extra = config_argv(subparser, read_config(args.config))
        # config tokens go first so explicit flags win
        split = list(argv).index(args.command) + 1
        args = parser.parse_args([*argv[:split], *extra, *argv[split:]])
    return args


# --- subcommands ----------------------------------------------------------


def _genome(text: str) -> Genotype:
    try:
        return parse_genotype(text)
    except GenomeError as exc:
        raise UsageError(f"bad genome: {exc}") from None


def cmd_translate(args) -> int:
    g = _genome(args.genome)
    if args.smooth < 0:
        raise UsageError("--smooth must be >= 0")
    grid = build_grid(g)
    mesh = smooth(extract_surface(grid), args.smooth)
    if args.dump_voxels:
        with open(args.dump_voxels, "w") as fh:
            dump_pbm(grid, fh)
    if args.stl:
        Path(args.stl).write_bytes(write_stl(mesh, args.format, name="vawtevo"))
    print(f"genome: {g}")
    print(f"voxels: {int(grid.sum())}")
    print(f"triangles: {mesh.n_triangles}  vertices: {mesh.n_vertices}  closed: {mesh.is_closed_manifold()}")
    return EXIT_OK


def _evaluator(args) -> Evaluator:
    if args.oracle == "hw":
        if not args.exchange_dir:
            raise UsageError("--oracle hw needs --exchange-dir")
        return HardwareEvaluator(Path(args.exchange_dir), args.poll_interval, args.timeout, args.smooth, args.stl_format)
    return SimulatedEvaluator(WindSetup(speed=args.wind_speed))


def _run_config(args) -> RunConfig:
    cfg = RunConfig(
        mode=args.mode,
        z_varying=getattr(args, "z_varying", False),
        budget=args.budget,
        seed=args.seed,
        pop_size=args.pop_size,
        tournament=args.tournament,
        mutation_rate=args.mutation_rate,
        max_step=args.max_step,
        crossover_rate=args.crossover_rate,
        epochs=args.epochs,
        hidden=args.hidden,
        warm_start_generations=args.warm_start_generations,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _one_run(args: argparse.Namespace) -> RunResult:
    cfg = _run_config(args)
    seeds = None
    if getattr(args, "seed_from", None):
        try:
            _, rows = read_log(args.seed_from)
            seeds = seed_array_populations(rows)
        except (OSError, LogFormatError, ValueError) as exc:
            raise UsageError(f"--seed-from {args.seed_from}: {exc}") from None
    runlog = RunLog(args.log, resolved(args))
    try:
        engine = ENGINES[cfg.mode]
        if cfg.n_species == 2:
            return engine(cfg, _evaluator(args), runlog, seeds=seeds)
        return engine(cfg, _evaluator(args), runlog)
    finally:
        runlog.close()


def _print_champion(res: RunResult, seed: Optional[int]) -> None:
    prefix = f"seed {seed}: " if seed is not None else ""
    if res.champion_partner is None:
        print(f"{prefix}champion {res.champion} fitness_rpm={res.champion_fitness:.6g}")
        return
    # report the pair as (left, right) using the species of the winning row
    row = next(r for r in res.log.rows if r.fitness == res.champion_fitness and r.genotype == res.champion)
    left, right = (res.champion, res.champion_partner) if row.species == 0 else (res.champion_partner, res.champion)
    print(f"{prefix}champion pair fitness_rpm={res.champion_fitness:.6g}")
    print(f"  left:  {left}")
    print(f"  right: {right}")


def _repeat_args(args, k: int) -> argparse.Namespace:
    ns = argparse.Namespace(**vars(args))
    ns.seed = args.seed + k
    if args.log:
        ns.log = args.log.format(seed=ns.seed)
    return ns


def _run_repeated(args) -> int:
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    if args.repeats == 1:
        _print_champion(_one_run(args), None)
        return EXIT_OK
    if args.log and "{seed}" not in args.log:
        raise UsageError("with --repeats > 1, --log must contain {seed}")
    runs = [_repeat_args(args, k) for k in range(args.repeats)]
    if args.oracle == "hw":
        # one exchange directory serves one evaluation at a time
        results = [_one_run(ns) for ns in runs]
    else:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_one_run, runs))
    for ns, res in zip(runs, results):
        _print_champion(res, ns.seed)
    return EXIT_OK


def cmd_evolve(args) -> int:
    return _run_repeated(args)


def cmd_coevolve(args) -> int:
    if not args.seed_from and not args.random_init:
        raise UsageError("coevolve needs --seed-from LOG or --random-init")
    return _run_repeated(args)


def cmd_eval(args) -> int:
    ev = SimulatedEvaluator(WindSetup(speed=args.wind_speed))
    g = _genome(args.genome)
    if args.partner is None:
        print(f"rpm: {ev.evaluate([g])[0]:.6g}")
        return EXIT_OK
    res = ev.evaluate_pairs([(g, _genome(args.partner))])[0]
    print(f"rpm: {res.rpm:.6g}  left: {res.per_turbine[0]:.6g}  right: {res.per_turbine[1]:.6g}")
    return EXIT_OK


def cmd_stats(args) -> int:
    if len(args.logs) != 2:
        raise UsageError(f"stats compares exactly two arms, got {len(args.logs)} --logs groups")
    sa, sb, res = compare(args.logs[0], args.logs[1], args.test, args.alternative)
    print(format_report(sa, sb, res))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"vawtevo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HardwareError, StatsError, OSError, RuntimeError, ValueError) as exc:
        print(f"vawtevo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
