"""Command-line entry point: ``rotchain <subcommand> ...``.

Subcommands
-----------
decompose    Davenport angles and plan for an (initial, goal) quaternion pair.
gen-testset  Write the stratified test set.
train        Train a goal-conditioned policy and save a checkpoint + curve.
eval         Run the hierarchical controller and baselines on a test set.
report       Aggregate stored traces into a CSV or plain-text table.
pipeline     train -> gen-testset -> eval -> report in one directory.

Exit status is 0 on success, 2 on usage errors and 1 on any other error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .env import EnvConfig, TaskKind
from .errors import RotchainError
from .rotations import Axis, Chain, UnitQuaternion, decompose, plan, quat_inverse, quat_mul

log = logging.getLogger("rotchain")


def _quaternion(text: str) -> UnitQuaternion:
    try:
        values = [float(v) for v in text.replace(" ", "").split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a quaternion: {text!r}") from None
    if len(values) != 4:
        raise argparse.ArgumentTypeError("a quaternion needs four comma-separated components w,x,y,z")
    try:
        return UnitQuaternion(*values)
    except RotchainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _chain(text: str) -> Chain:
    try:
        return Chain.parse(text)
    except RotchainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _task(text: str) -> TaskKind:
    try:
        return TaskKind.parse(text)
    except RotchainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fmt(v: float) -> str:
    v = 0.0 if abs(v) < 5e-13 else v
    return f"{v:.12g}"


def _env_config(path: str | None, seed: int | None = None) -> EnvConfig:
    cfg = EnvConfig.load(path) if path else EnvConfig()
    return cfg if seed is None else cfg.replace(seed=seed)


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------

def cmd_decompose(args) -> int:
    relative = quat_mul(args.goal, quat_inverse(args.initial))
    triple = decompose(relative, args.chain)
    print(f"chain {args.chain.label}")
    print("(" + ", ".join(_fmt(a) for a in triple.angles) + ")")
    if args.plan:
        p = plan(args.initial, args.goal, args.chain, split=not args.no_split)
        for k, s in enumerate(p.steps):
            sub = ", ".join(_fmt(v) for v in s.subgoal)
            print(f"step {k}: axis {s.axis.label} angle {_fmt(s.angle)} subgoal ({sub})")
    return 0


def cmd_gen_testset(args) -> int:
    from .bench.testset import gen_testset, save

    testset = gen_testset(args.seed)
    save(testset, args.out)
    counts = testset.bucket_counts()
    log.info("wrote %d cases to %s (%s)", len(testset), args.out, counts)
    return 0


def cmd_train(args) -> int:
    from .learner.checkpoint import save_policy
    from .learner.ddpg import TrainConfig
    from .learner.presets import preset
    from .learner.training import train, write_curve

    config = preset(args.task, args.preset)
    if args.config:
        config = TrainConfig.from_text(Path(args.config).read_text(), base=config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.timesteps is not None:
        config = config.replace(total_timesteps=args.timesteps)
    env_config = _env_config(args.env_config)
    params, curve = train(args.task, env_config, config, progress=True)
    save_policy(params, args.out)
    curve_path = args.curve or f"{args.out}.curve.csv"
    write_curve(curve, curve_path)
    best = max(p.success_rate for p in curve)
    print(f"{args.task.value}: {len(curve)} cycles, {curve[-1].env_steps} env steps, "
          f"final success {curve[-1].success_rate:.3f}, best {best:.3f}")
    return 0


def _load_policies(specs: Sequence[str]):
    from .hierarchy import PolicySet
    from .learner.checkpoint import load_policy

    mapping = {}
    for spec in specs:
        axis, sep, path = spec.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"policy spec {spec!r} must look like z=PATH")
        mapping[Axis.parse(axis)] = load_policy(path)
    return PolicySet(mapping)


def cmd_eval(args) -> int:
    from .bench.evaluate import dump_outcomes, evaluate
    from .bench.report import build_report, to_table
    from .bench.testset import load
    from .hierarchy import ChainChoice, ExecConfig
    from .learner.checkpoint import load_policy

    testset = load(args.testset)
    if args.per_bucket:
        testset = testset.subset(args.per_bucket)
    policies = _load_policies(args.policies) if args.policies else None
    baselines = {}
    for spec in args.baseline or []:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        baselines[name] = load_policy(path)
    exec_config = ExecConfig(chain=ChainChoice(args.chain), split_large=not args.no_split,
                             per_step_budget=args.budget, carry_over=args.carry_over)
    evaluation = evaluate(testset, policies, baselines, _env_config(args.env_config), exec_config,
                          noise_seed=args.seed)
    dump_outcomes(evaluation, args.out)
    if not args.quiet:
        print(to_table(build_report(evaluation), annex=False), end="")
    return 0


def cmd_report(args) -> int:
    from .bench.evaluate import load_outcomes
    from .bench.report import build_report, to_csv, to_table

    report = build_report(load_outcomes(args.input))
    text = to_csv(report) if args.format == "csv" else to_table(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_pipeline(args) -> int:
    from .bench.pipeline import run_pipeline

    paths = run_pipeline(Path(args.out), scale=args.preset, seed=args.seed,
                         baseline=not args.no_baseline, per_bucket=args.per_bucket)
    print(Path(paths["table"]).read_text(), end="")
    return 0


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotchain", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("decompose", help="Davenport angles of goal relative to initial")
    p.add_argument("--initial", type=_quaternion, default=UnitQuaternion.identity(), help="w,x,y,z")
    p.add_argument("--goal", type=_quaternion, required=True, help="w,x,y,z")
    p.add_argument("--chain", type=_chain, default=Chain.parse("z-x-z"), help="e.g. z-x-z (default)")
    p.add_argument("--plan", action="store_true", help="also print the subgoal plan")
    p.add_argument("--no-split", action="store_true", help="do not split rotations above pi/2")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("gen-testset", help="write the stratified test set")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_testset)

    p = sub.add_parser("train", help="train a policy on one task")
    p.add_argument("--task", type=_task, required=True,
                   help="rotate-z | rotate-x | rotate-y | rotate-parallel | rotate-xyz")
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--config", help="key = value file overriding training settings")
    p.add_argument("--env-config", help="key = value file with environment settings")
    p.add_argument("--seed", type=int, help="override the preset's seed")
    p.add_argument("--timesteps", type=int, help="override the preset's budget")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--curve", help="learning-curve CSV (default: OUT.curve.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate on a test set and store traces")
    p.add_argument("--testset", required=True)
    p.add_argument("--policies", nargs="+", metavar="AXIS=PATH", help="e.g. z=z.npz x=x.npz y=y.npz")
    p.add_argument("--baseline", nargs="*", metavar="[NAME=]PATH")
    p.add_argument("--out", required=True, help="trace file (JSON lines)")
    p.add_argument("--env-config")
    p.add_argument("--chain", choices=("best", "z-x-z", "z-y-z"), default="best")
    p.add_argument("--no-split", action="store_true")
    p.add_argument("--carry-over", action="store_true")
    p.add_argument("--budget", type=int, default=100, help="steps per chained rotation")
    p.add_argument("--per-bucket", type=int, help="only the first N cases of each stratum")
    p.add_argument("--seed", type=int, help="noise seed base (default: the test set's seed)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate stored traces")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("csv", "table"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="train, generate, evaluate and report in one go")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--seed", type=int, default=0, help="test-set seed")
    p.add_argument("--no-baseline", action="store_true")
    p.add_argument("--per-bucket", type=int)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"rotchain {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (RotchainError, OSError, ValueError) as exc:
        print(f"rotchain {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
