import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from shared_code.config import ExperimentConfig
from shared_code.environment import create_env, randomize_factors
from shared_code.exceptions import DegenerateTestError, ExportError
from shared_code.llm_client import LLMClient
from shared_code.models import Strategy, TrialOutcome
from shared_code.reasoner import OracleReasoner, Reasoner, RemoteReasoner
from shared_code.statistics import Summary, WelchResult, summarize, welch_t
from shared_code.strategies import run_active, run_observer
from shared_code.trial_metrics import log_trial_metrics
from telegram_logging_handler import app_logger

TRIAL_COLUMNS = ["strategy", "trial", "seed", "queries", "success", "steps"]
NUMBER_FORMAT = "%.6f"


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    outcomes: List[TrialOutcome]
    summaries: Dict[str, Summary] = field(default_factory=dict)
    welch: Optional[WelchResult] = None

    def queries(self, strategy: Strategy) -> List[int]:
        return [o.queries for o in self.outcomes if o.strategy == strategy.value]

    def outcomes_for(self, strategy: Strategy) -> List[TrialOutcome]:
        return [o for o in self.outcomes if o.strategy == strategy.value]


def derive_seeds(master_seed: int, trial_index: int) -> Tuple[int, int]:
    """(environment seed, agent seed) for one trial index, shared by every strategy"""
    env_child, agent_child = np.random.SeedSequence([master_seed, trial_index]).spawn(2)
    return int(env_child.generate_state(1)[0]), int(agent_child.generate_state(1)[0])


def make_reasoner(config: ExperimentConfig) -> Reasoner:
    if config.backend == "remote":
        client = LLMClient(model=config.llm_model, retries=config.llm_retries, timeout=config.llm_timeout)
        return RemoteReasoner(client)
    return OracleReasoner()


def run_trial(
    config: ExperimentConfig,
    strategy: Strategy,
    trial_index: int,
    reasoner: Optional[Reasoner] = None,
) -> TrialOutcome:
    strategy = Strategy(strategy)
    env_seed, agent_seed = derive_seeds(config.master_seed, trial_index)
    env = create_env(config.env_spec(), env_seed)
    randomize_factors(env, config.initial_enable_prob)
    reasoner = reasoner or make_reasoner(config)

    if strategy is Strategy.ACTIVE:
        outcome = run_active(config, env, reasoner, np.random.default_rng(agent_seed), trial_index, env_seed)
    else:
        outcome = run_observer(config, env, reasoner, trial_index, env_seed)

    app_logger.debug(
        f"Trial {trial_index} [{outcome.strategy}]: queries={outcome.queries} "
        f"success={outcome.success} steps={outcome.steps_taken}"
    )
    log_trial_metrics(outcome)
    return outcome


def run_experiment(config: ExperimentConfig, jobs: Optional[int] = None) -> ExperimentReport:
    config.validate()
    strategies = config.strategy_list()
    tasks = [(s, i) for s in strategies for i in range(config.num_trials)]
    workers = jobs if jobs and jobs > 0 else config.worker_count()

    app_logger.info(
        f"Running {config.num_trials} trials for {', '.join(s.value for s in strategies)} "
        f"(backend={config.backend}, seed={config.master_seed}, jobs={workers})"
    )
    with ThreadPoolExecutor(max_workers=workers) as executor:
        outcomes = list(executor.map(lambda task: run_trial(config, task[0], task[1]), tasks))

    order = {s.value: k for k, s in enumerate(Strategy)}
    outcomes.sort(key=lambda o: (order[o.strategy], o.trial_index))

    report = ExperimentReport(config=config, outcomes=outcomes)
    for strategy in strategies:
        report.summaries[strategy.value] = summarize(report.queries(strategy))

    if Strategy.ACTIVE in strategies and Strategy.OBSERVER in strategies:
        try:
            report.welch = welch_t(report.queries(Strategy.ACTIVE), report.queries(Strategy.OBSERVER))
        except DegenerateTestError as e:
            app_logger.warning(f"Skipping Welch's t-test: {e}")

    failures = sum(1 for o in outcomes if not o.success)
    if failures:
        app_logger.warning(f"{failures} of {len(outcomes)} trials hit a cap without identifying the cause")
    return report


def _fmt(value: float) -> str:
    return NUMBER_FORMAT % value


def render_csv(report: ExperimentReport) -> str:
    rows = pd.DataFrame(
        [
            {
                "strategy": o.strategy,
                "trial": o.trial_index,
                "seed": o.seed,
                "queries": o.queries,
                "success": "true" if o.success else "false",
                "steps": o.steps_taken,
            }
            for o in report.outcomes
        ],
        columns=TRIAL_COLUMNS,
    )
    buffer = io.StringIO()
    rows.to_csv(buffer, index=False, lineterminator="\n")

    buffer.write("\nstrategy,mean,sd,max,n\n")
    for name, summary in report.summaries.items():
        buffer.write(f"{name},{_fmt(summary.mean)},{_fmt(summary.sd)},{_fmt(summary.max)},{summary.n}\n")

    if report.welch is not None:
        buffer.write("\nt,df,p\n")
        buffer.write(f"{_fmt(report.welch.t)},{_fmt(report.welch.df)},{_fmt(report.welch.p)}\n")
    return buffer.getvalue()


def export_csv(report: ExperimentReport, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(render_csv(report))
    except OSError as e:
        app_logger.error(f"Failed to write report to {path}: {e}")
        raise ExportError(f"Could not write {path}: {e}") from e
    app_logger.info(f"Wrote {len(report.outcomes)} trial rows to {path}")
    return path
