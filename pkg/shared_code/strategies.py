from pathlib import Path
from typing import List, Optional, Set

import numpy as np

from shared_code.config import ExperimentConfig
from shared_code.difference import DifferenceSet, diff
from shared_code.environment import (
    Environment,
    advance,
    apply_intervention,
    drift_step,
    ground_truth,
    observe,
)
from shared_code.exceptions import InconsistentObservationsError, NoPlanError
from shared_code.intervention import (
    HypothesisAssessor,
    Trigger,
    TriggerState,
    apply_scope_ops,
    evaluate_triggers,
    propose_plans,
    reduce_scope,
    select_plan,
)
from shared_code.memory import MixedMemory, Scenario, record, save_memory
from shared_code.models import EnvState, Strategy, TrialOutcome, factor
from shared_code.query_cache import QueryCache
from shared_code.reasoner import Reasoner, ReasonerAnswer, ReasonerQuery, canonical_key, dedup_query
from shared_code.screening import (
    CooccurrenceStats,
    ExpectationSource,
    ExpectationTemplate,
    VerdictReason,
    VerdictStatus,
    analyze_absence,
    judge_correctness,
    record_observation,
    screen_by_action,
    screen_by_expectation,
)
from telegram_logging_handler import app_logger


class _QueryCounter:
    """Fresh reasoner queries for one trial, deduplicated by canonical state"""

    def __init__(self, reasoner: Reasoner):
        self.reasoner = reasoner
        self.cache = QueryCache()
        self.queries = 0

    def ask(self, history: List[EnvState], target) -> ReasonerAnswer:
        query = ReasonerQuery(tuple(history), target)
        try:
            answer, fresh = dedup_query(self.cache, canonical_key(history[-1]), self.reasoner, query)
        except InconsistentObservationsError:
            # the backend did answer, it just could not explain the states
            self.queries += 1
            raise
        if fresh:
            self.queries += 1
        return answer


def _narrow(hypotheses: Set[int], answer: ReasonerAnswer) -> Set[int]:
    narrowed = hypotheses & set(answer.hypotheses)
    # a fallible backend can contradict earlier answers; trust the newest one then
    return narrowed or set(answer.hypotheses)


def _note(notes: List[str], note: str) -> None:
    if not notes or notes[-1] != note:
        notes.append(note)


def _outcome(strategy, trial_index, seed, counter, success, env, identified, notes) -> TrialOutcome:
    return TrialOutcome(
        strategy=strategy.value,
        trial_index=trial_index,
        seed=seed,
        queries=counter.queries,
        success=success,
        steps_taken=env.time,
        identified=identified,
        backend_invocations=counter.reasoner.invocations,
        notes=notes,
    )


def run_observer(
    config: ExperimentConfig, env: Environment, reasoner: Reasoner, trial_index: int, seed: int
) -> TrialOutcome:
    """Passive loop: let the environment drift and ask about every new state"""
    target = config.target()
    truth = ground_truth(env, target)
    scope = env.full_scope(config.temporal_window)
    counter = _QueryCounter(reasoner)
    hypotheses: Set[int] = set(range(env.spec.num_factors))
    history = [observe(env, scope)]
    notes: List[str] = []
    identified: Optional[int] = None

    while True:
        try:
            answer = counter.ask(history, target)
            hypotheses = _narrow(hypotheses, answer)
        except InconsistentObservationsError as e:
            app_logger.debug(f"Observer trial {trial_index}: {e}; restarting history")
            notes.append(f"inconsistent@{env.time}")
            history = [history[-1]]
            hypotheses = set(range(env.spec.num_factors))

        if len(hypotheses) == 1:
            identified = next(iter(hypotheses))
            if identified == truth:
                return _outcome(Strategy.OBSERVER, trial_index, seed, counter, True, env, identified, notes)
            _note(notes, f"wrong:{factor(identified)}")

        if counter.queries >= config.max_queries_per_trial:
            notes.append("query_cap")
            break
        if env.time >= env.spec.max_steps:
            notes.append("step_cap")
            break
        drift_step(env)
        history.append(observe(env, scope))

    return _outcome(Strategy.OBSERVER, trial_index, seed, counter, False, env, identified, notes)


class _ActiveAgent:
    def __init__(self, config: ExperimentConfig, env: Environment, reasoner: Reasoner, rng: np.random.Generator):
        self.config = config
        self.env = env
        self.rng = rng
        self.target = config.target()
        self.weights = config.degree_weights()
        self.utility_weights = config.utility_weights()
        self.window = config.temporal_window
        self.all_ids = env.spec.all_ids()
        self.scope = env.full_scope(config.temporal_window)
        self.counter = _QueryCounter(reasoner)
        self.stats = CooccurrenceStats()
        self.memory = MixedMemory(config.epsilon, config.min_support, config.movability_threshold)
        self.hypotheses: Set[int] = set(range(env.spec.num_factors))
        self.history = [observe(env, self.scope)]
        self.interventions = 0
        self.abnormal_seen = False
        self.last_delta_empty = False
        self.scope_reduced = False
        self.notes: List[str] = []

    def _scenario(self, state: EnvState) -> Scenario:
        return Scenario(
            env_tag=f"sim-d{self.env.spec.causation_delay}",
            scope_summary=self.scope.summary(),
            time_bucket=state.time // self.window,
        )

    def _wait_for_delayed_effect(self, reason: Exception, last_plan_label: str) -> None:
        """Observations stopped lining up: drop them, idle one step and look again"""
        templates = [ExpectationTemplate(self.target, None, ExpectationSource.REASONER)]
        ranked = analyze_absence(last_plan_label, templates, self.scope)
        app_logger.debug(f"{reason}; suspected causes: {[h.value for h in ranked]}")
        self.notes.append(f"inconsistent@{self.env.time}")
        before = self.history[-1]
        advance(self.env)
        after = observe(self.env, self.scope)
        record_observation(self.stats, None, diff(before, after, self.scope, action_step=after.time), False)
        self.history = [after]
        self.hypotheses = set(range(self.env.spec.num_factors))

    def _learn_from(self, plan_label: str, before: EnvState, after: EnvState) -> DifferenceSet:
        delta = diff(before, after, self.scope, action_step=after.time)
        record_observation(self.stats, plan_label, delta, True)
        self.last_delta_empty = not delta
        if not delta:
            return delta

        candidates = screen_by_action(
            self.stats, plan_label, delta, self.config.theta_screen, self.weights, self.window
        )
        templates = [ExpectationTemplate(self.target, None, ExpectationSource.REASONER)]
        # nothing passed screening: judge the raw differences instead
        judged = [c.difference for c in screen_by_expectation(candidates, templates)] or list(delta)

        feedback = []
        self.abnormal_seen = False
        for difference in judged:
            verdict = judge_correctness(
                difference,
                self.memory,
                repeat_evidence=self.stats.count_with[(plan_label, difference.signature)],
                repeat_threshold=self.config.repeat_threshold,
                action_sig=plan_label,
                weights=self.weights,
                window=self.window,
            )
            app_logger.debug(f"{plan_label} -> {difference.signature}: {verdict.status.value} ({verdict.rationale.value})")
            if verdict.rationale is VerdictReason.ABNORMAL_DEGREE:
                self.abnormal_seen = True
            if verdict.status is not VerdictStatus.SUSPECT:
                feedback.append(difference.signature)

        if not feedback:
            app_logger.debug(f"{plan_label}: all feedback suspect, nothing recorded")
            return delta
        record(self.memory, plan_label, feedback, self._scenario(after), delta, self.weights, self.window)
        return delta

    def _goal_gap(self, accepted: bool) -> float:
        """Normalized ambiguity left in the hypothesis set; zero once the cause is accepted"""
        if accepted:
            return 0.0
        remaining = max(len(self.hypotheses) - 1, 1)
        return remaining / max(1, self.env.spec.num_factors - 1)

    def run(self, trial_index: int, seed: int) -> TrialOutcome:
        truth = ground_truth(self.env, self.target)
        identified: Optional[int] = None
        last_plan_label = "start"

        while True:
            before_count = len(self.hypotheses)
            try:
                answer = self.counter.ask(self.history, self.target)
                self.hypotheses = _narrow(self.hypotheses, answer)
            except InconsistentObservationsError as e:
                if self.counter.queries >= self.config.max_queries_per_trial or self.env.time >= self.env.spec.max_steps:
                    self.notes.append("cap_while_inconsistent")
                    break
                self._wait_for_delayed_effect(e, last_plan_label)
                continue

            ambiguity = (len(self.hypotheses) - 1) / max(1, before_count - 1)
            if ambiguity > 0.5:
                app_logger.debug(f"Active trial {trial_index}: {len(self.hypotheses)} hypotheses remain, re-proposing")

            accepted = False
            if len(self.hypotheses) == 1:
                identified = next(iter(self.hypotheses))
                accepted = identified == truth
                if not accepted:
                    _note(self.notes, f"wrong:{factor(identified)}")

            triggers = evaluate_triggers(
                TriggerState(
                    goal_gap=self._goal_gap(accepted),
                    abnormal_seen=self.abnormal_seen,
                    self_cost_exceeded=self.interventions > self.config.self_cost_budget,
                )
            )
            if accepted:
                return self._finish(trial_index, seed, True, identified)
            if Trigger.SELF_IMPACT in triggers and not self.scope_reduced:
                keep = {factor(h) for h in self.hypotheses} | {self.target}
                self.scope = reduce_scope(self.scope, keep)
                self.scope_reduced = True
                app_logger.debug(f"Active trial {trial_index}: intervention budget exceeded, scope reduced to {self.scope.summary()}")
            if Trigger.ABNORMAL_FEEDBACK in triggers:
                app_logger.debug(f"Active trial {trial_index}: abnormal feedback after {last_plan_label}")

            if self.counter.queries >= self.config.max_queries_per_trial:
                self.notes.append("query_cap")
                break
            if self.env.time >= self.env.spec.max_steps:
                self.notes.append("step_cap")
                break

            current = self.history[-1]
            if not triggers:
                # idle: no intervention this step
                advance(self.env)
                self.history.append(observe(self.env, self.scope))
                self.last_delta_empty = False
                continue

            try:
                plans = propose_plans(
                    self.hypotheses,
                    self.scope,
                    self.config.plan_budget,
                    current,
                    self.all_ids,
                    self.config.temporal_window,
                    self.last_delta_empty,
                )
            except NoPlanError as e:
                app_logger.warning(f"Active trial {trial_index}: {e}")
                self.notes.append("no_plan")
                break

            assessor = HypothesisAssessor(
                self.hypotheses, self.utility_weights, self.config.plan_budget, self.rng, self.stats, self.target
            )
            plan = select_plan(plans, assessor, self.config.samples_per_plan)
            last_plan_label = plan.label

            if plan.scope_ops:
                self.scope = apply_scope_ops(self.scope, plan, self.all_ids, self.config.temporal_window)
            if plan.toggles:
                apply_intervention(self.env, plan)
                self.interventions += 1
                after = observe(self.env, self.scope)
                self._learn_from(plan.label, current, after)
            else:
                after = observe(self.env, self.scope)
                self.last_delta_empty = False
            self.history.append(after)

        return self._finish(trial_index, seed, False, identified)

    def _finish(self, trial_index: int, seed: int, success: bool, identified: Optional[int]) -> TrialOutcome:
        if self.config.memory_dir:
            save_memory(self.memory, Path(self.config.memory_dir) / f"active_trial_{trial_index}.jsonl")
        return _outcome(Strategy.ACTIVE, trial_index, seed, self.counter, success, self.env, identified, self.notes)


def run_active(
    config: ExperimentConfig,
    env: Environment,
    reasoner: Reasoner,
    rng: np.random.Generator,
    trial_index: int,
    seed: int,
) -> TrialOutcome:
    """Intervening loop: query, pick the most useful toggle, apply it, learn from the difference"""
    return _ActiveAgent(config, env, reasoner, rng).run(trial_index, seed)
