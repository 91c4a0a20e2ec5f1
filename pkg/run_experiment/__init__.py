from shared_code import experiment
from shared_code.config import apply_overrides, load_config
from shared_code.exceptions import (
    ConfigurationError,
    ExportError,
    RemoteReasonerError,
    StatisticsError,
)
from shared_code.utils import render_summary_table, render_welch_table
from telegram_logging_handler import app_logger


def main(args) -> int:
    try:
        config = load_config(args.config)
        config = apply_overrides(
            config,
            master_seed=args.seed,
            num_trials=args.trials,
            backend=args.backend,
            target_result=args.target_result,
            jobs=args.jobs,
        )
    except ConfigurationError as e:
        app_logger.error(f"Invalid configuration: {e}")
        return 2

    try:
        report = experiment.run_experiment(config)
    except (ConfigurationError, StatisticsError) as e:
        app_logger.error(f"Experiment aborted: {e}")
        return 2
    except RemoteReasonerError as e:
        app_logger.error(f"Remote reasoner unavailable: {e}")
        return 3

    if args.out:
        try:
            experiment.export_csv(report, args.out)
        except ExportError as e:
            app_logger.error(str(e))
            return 3

    successes = {
        name: sum(1 for o in report.outcomes if o.strategy == name and o.success)
        for name in report.summaries
    }
    print(f"trials per strategy: {config.num_trials}  master_seed: {config.master_seed}  backend: {config.backend}")
    print(render_summary_table(report.summaries))
    print("successes: " + ", ".join(f"{name}={count}" for name, count in successes.items()))
    if report.welch is not None:
        print("Welch's t-test on query counts (active vs observer):")
        print(render_welch_table(report.welch))
    return 0
