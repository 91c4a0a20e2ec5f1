import argparse
import sys

import demo_environment
import run_experiment
import ttest_reports

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afg",
        description="Active vs observer causal identification experiments",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="run the active-vs-observer experiment")
    run.add_argument("--config", help="flat key = value experiment file (defaults when omitted)")
    run.add_argument("--out", help="CSV report path")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--trials", type=int, help="override num_trials")
    run.add_argument("--backend", choices=["oracle", "remote"], help="override the reasoner backend")
    run.add_argument("--target-result", dest="target_result", help="override target_result, e.g. r2")
    run.add_argument("--jobs", type=int, help="concurrent trials (default: logical processors)")
    run.set_defaults(handler=run_experiment.main)

    ttest = subparsers.add_parser("ttest", help="Welch's t-test between two report files")
    ttest.add_argument("csv_a")
    ttest.add_argument("csv_b")
    ttest.add_argument("--column", default="queries")
    ttest.add_argument("--strategy-a", dest="strategy_a", help="only rows of this strategy from csv_a")
    ttest.add_argument("--strategy-b", dest="strategy_b", help="only rows of this strategy from csv_b")
    ttest.set_defaults(handler=ttest_reports.main)

    demo = subparsers.add_parser("demo", help="print the environment state step by step")
    demo.add_argument("--config", help="flat key = value experiment file (defaults when omitted)")
    demo.add_argument("--steps", type=int, default=10)
    demo.add_argument("--seed", type=int, help="override master_seed")
    demo.add_argument("--enable", help="factor to enable at step 1, e.g. f1")
    demo.set_defaults(handler=demo_environment.main)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
