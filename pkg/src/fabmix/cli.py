"""Command-line interface.

Subcommands: ``generate`` (spec -> dataset CSV), ``fit`` (dataset +
learner -> checkpoint + trace CSV), ``race`` (learners with a shared
init -> side-by-side traces), ``experiment`` (config file -> full
protocol). Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .datagen import GeneratorSpec, sample_dataset, sample_ground_truth
from .exceptions import MixtureError
from .experiment import (
    LEARNERS,
    ExperimentConfig,
    parse_config_file,
    run_experiment,
    run_learner,
)
from .io import load_dataset_csv, save_checkpoint, save_dataset_csv
from .model import Dataset, default_init


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _split_seed(seed: int) -> tuple[int, int]:
    """Derive independent (init, order) seeds from the user-facing seed."""
    init_seed, order_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return int(init_seed), int(order_seed)


def _parse_weights(text: str) -> tuple[float, ...]:
    try:
        weights = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--weights expects comma-separated reals, got {text!r}")
    if not weights:
        raise UsageError("--weights must name at least one weight")
    return weights


def build_parser() -> _Parser:
    parser = _Parser(prog="fabmix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic mixture dataset CSV")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--k-true", type=int, required=True)
    gen.add_argument("--weights", type=str, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--mean-scale", type=float, default=10.0)
    gen.add_argument("--cov-scale", type=float, default=1.0)
    gen.add_argument("--out", type=str, required=True, help="output CSV path")

    def add_fit_flags(p, multi_learner):
        p.add_argument("data", type=str, help="dataset CSV (from `generate`)")
        if multi_learner:
            p.add_argument(
                "--learner", action="append", choices=LEARNERS, dest="learners",
                help="repeat to pick the contestants (default fab_batch, fab_online)",
            )
        else:
            p.add_argument("--learner", choices=LEARNERS, required=True)
        p.add_argument("--k-init", type=int, default=8)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--max-iters", type=int, default=100)
        p.add_argument("--mode", choices=("paper-faithful", "exact-stats"), default="exact-stats")
        p.add_argument("--prune-threshold", type=float, default=0.01)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, required=True, help="output directory")

    add_fit_flags(sub.add_parser("fit", help="fit one learner to a dataset"), False)
    add_fit_flags(sub.add_parser("race", help="run learners from a shared init"), True)

    exp = sub.add_parser("experiment", help="run a full racing protocol from a config file")
    exp.add_argument("--config", type=str, required=True)
    exp.add_argument("--out", type=str, default=None, help="override the config's output_dir")
    return parser


def _cmd_generate(args) -> int:
    spec = GeneratorSpec(
        n=args.n,
        k_true=args.k_true,
        weights=_parse_weights(args.weights),
        dim=args.dim,
        mean_scale=args.mean_scale,
        cov_scale=args.cov_scale,
        seed=args.seed,
    )
    truth = sample_ground_truth(spec)
    data, labels = sample_dataset(truth, args.n, seed=args.seed)
    save_dataset_csv(args.out, data.points, labels)
    print(f"wrote {args.n} x {args.dim} dataset to {args.out}")
    return 0


def _fit_config(args, learners) -> ExperimentConfig:
    return ExperimentConfig(
        n_values=[1],  # unused by run_learner
        dim_values=[1],
        k_init=args.k_init,
        learners=tuple(learners),
        tol=args.tol,
        max_iters=args.max_iters,
        mode=args.mode.replace("-", "_"),
        prune_threshold=args.prune_threshold,
    )


def _run_single(args, learners) -> int:
    points, _ = load_dataset_csv(args.data)
    data = Dataset(points)
    init_seed, order_seed = _split_seed(args.seed)
    init = default_init(data, args.k_init, init_seed)
    config = _fit_config(args, learners)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for learner in learners:
        model, trace = run_learner(learner, data, init, config, order_seed)
        save_checkpoint(model, out / f"{learner}_model.json")
        trace.to_csv(out / f"{learner}_trace.csv")
        print(
            f"{learner}: {len(trace) - 1} iterations, final score "
            f"{trace.final.fic:.6f}, {trace.final.n_components} components"
        )
    return 0


def _cmd_fit(args) -> int:
    return _run_single(args, [args.learner])


def _cmd_race(args) -> int:
    learners = args.learners or ["fab_batch", "fab_online"]
    return _run_single(args, learners)


def _cmd_experiment(args) -> int:
    config = parse_config_file(args.config)
    if args.out is not None:
        config.output_dir = args.out
    summary = run_experiment(config)
    print(f"wrote {len(summary.runs)} run traces to {summary.output_dir}")
    if summary.failures:
        print(f"{len(summary.failures)} run(s) failed; see failures.csv")
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "race":
            return _cmd_race(args)
        return _cmd_experiment(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except MixtureError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
