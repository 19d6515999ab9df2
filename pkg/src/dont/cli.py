"""Command line front end.

Exit codes: 0 on success, 2 for configuration problems (bad file, bad
schema, bad values), 3 when training diverges.
"""

import argparse
import json
import sys

from .config import load_config
from .exceptions import ConfigError, DivergenceError, ValidationError
from .experiments import (
    oracle_for_config,
    run_1d_dynamics,
    run_eval,
    run_experiment,
    run_gain_sweep,
    run_illposed_demo,
    run_plot,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dont",
        description="learn transport maps between point clouds via a stepwise flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML or JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override dataset and training seed")
        p.add_argument("--out", default=None, help="override the output directory")

    common(sub.add_parser("train", help="train a flow and write metrics, scores, plots"))
    p_eval = sub.add_parser("eval", help="score an existing checkpoint")
    common(p_eval)
    p_eval.add_argument(
        "--exact-inverse",
        action="store_true",
        help="use the per-step solver for the round trip instead of the reverse net",
    )
    common(sub.add_parser("oracle", help="print the ground-truth map for the dataset"))
    p_sweep = sub.add_parser("sweep", help="gain x seed grid over flow and baseline")
    common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1, help="worker threads for the grid")
    common(sub.add_parser("dynamics", help="compare per-step 1-D marginals with the geodesic"))
    common(sub.add_parser("illposed", help="sweep a family of coherent maps by cost"))
    common(sub.add_parser("plot", help="redraw SVGs from a checkpoint without retraining"))
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, out=args.out)
        if args.command == "train":
            scores = run_experiment(config)
            print(f"status {scores['status']}, artifacts in {config.out_dir}")
        elif args.command == "eval":
            result = run_eval(config, exact=args.exact_inverse)
            print(json.dumps(result, sort_keys=True, indent=1))
        elif args.command == "oracle":
            print(json.dumps(oracle_for_config(config), sort_keys=True, indent=1))
        elif args.command == "sweep":
            rows = run_gain_sweep(config, jobs=args.jobs)
            print(f"{len(rows)} rows in {config.out_dir}/sweep.csv")
        elif args.command == "dynamics":
            scores = run_1d_dynamics(config)
            print(f"status {scores['status']}, artifacts in {config.out_dir}")
        elif args.command == "illposed":
            scores = run_illposed_demo(config)
            print(
                f"{len(scores['costs'])} maps, all coherent: {scores['all_coherent']}, "
                f"cheapest at theta={scores['min_cost_theta']:g}"
            )
        else:
            paths = run_plot(config)
            print("\n".join(paths))
    except (ConfigError, ValidationError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DivergenceError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
