import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np

from shared_code.difference import Direction, diff
from shared_code.environment import Environment, apply_intervention, observe
from shared_code.exceptions import (
    InterventionError,
    MisuseError,
    NoPlanError,
    ScopeError,
    SelectionError,
)
from shared_code.models import (
    RESULT,
    ActionPlan,
    EnvState,
    Ident,
    Scope,
    ScopeOp,
    ScopeOpKind,
    Toggle,
    factor,
)
from shared_code.screening import CooccurrenceStats, cooccurrence_score
from telegram_logging_handler import app_logger

# utilities closer than this are treated as equal before the tie-breaks apply
_UTILITY_REL_TOL = 1e-9
_UTILITY_ABS_TOL = 1e-12


@dataclass(frozen=True)
class UtilityWeights:
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 0.5

    def validate(self) -> None:
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise MisuseError("alpha, beta and gamma must all be strictly positive")

    def scaled(self, c: float) -> "UtilityWeights":
        return UtilityWeights(self.alpha * c, self.beta * c, self.gamma * c)


@dataclass(frozen=True)
class PlanAssessment:
    rel: float
    cost: float
    amb: float
    utility: float


def utility(rel: float, cost: float, amb: float, weights: UtilityWeights) -> float:
    return weights.alpha * rel - weights.beta * cost - weights.gamma * amb


@dataclass(frozen=True)
class PlanEvidence:
    """What screening predicts about a plan before it runs"""
    cooccurrence: Optional[float] = None
    hypotheses_before: int = 1
    hypotheses_after: int = 1
    budget: int = 1


def assess_plan(plan: ActionPlan, predicted: PlanEvidence, weights: UtilityWeights) -> PlanAssessment:
    weights.validate()
    rel = 0.5 if predicted.cooccurrence is None else (predicted.cooccurrence + 1.0) / 2.0
    cost = plan.size / max(predicted.budget, 1)
    amb = (predicted.hypotheses_after - 1) / max(1, predicted.hypotheses_before - 1)
    amb = min(max(amb, 0.0), 1.0)
    return PlanAssessment(rel=rel, cost=cost, amb=amb, utility=utility(rel, cost, amb, weights))


class Trigger(Enum):
    GOAL = "goal"
    ABNORMAL_FEEDBACK = "abnormal_feedback"
    SELF_IMPACT = "self_impact"


@dataclass(frozen=True)
class TriggerState:
    goal_gap: float = 0.0
    abnormal_seen: bool = False
    self_cost_exceeded: bool = False

    def __post_init__(self):
        if self.goal_gap < 0:
            raise MisuseError("goal_gap must be nonnegative")


@dataclass(frozen=True)
class TriggerThresholds:
    goal_tolerance: float = 0.0


def evaluate_triggers(ts: TriggerState, thresholds: TriggerThresholds = TriggerThresholds()) -> FrozenSet[Trigger]:
    fired = set()
    if ts.goal_gap > thresholds.goal_tolerance:
        fired.add(Trigger.GOAL)
    if ts.abnormal_seen:
        fired.add(Trigger.ABNORMAL_FEEDBACK)
    if ts.self_cost_exceeded:
        fired.add(Trigger.SELF_IMPACT)
    return frozenset(fired)


def expand_scope(scope: Scope, all_ids: Iterable[Ident], max_window: int) -> Scope:
    return Scope(
        temporal_window=min(scope.temporal_window * 2, max(max_window, scope.temporal_window)),
        spatial_set=frozenset(scope.spatial_set) | frozenset(all_ids),
    )


def reduce_scope(scope: Scope, keep: Iterable[Ident]) -> Scope:
    keep = frozenset(keep)
    if not keep:
        raise ScopeError("reduce_scope needs a nonempty keep set")
    if not keep <= scope.spatial_set:
        raise ScopeError("reduce_scope can only keep identifiers already in scope")
    return Scope(temporal_window=scope.temporal_window, spatial_set=keep)


def apply_scope_ops(scope: Scope, plan: ActionPlan, all_ids: Iterable[Ident], max_window: int) -> Scope:
    all_ids = frozenset(all_ids)
    for op in plan.scope_ops:
        if op.kind is ScopeOpKind.EXPAND_TEMPORAL:
            scope = Scope(min(scope.temporal_window * 2, max(max_window, scope.temporal_window)), scope.spatial_set)
        elif op.kind is ScopeOpKind.EXPAND_SPATIAL:
            scope = Scope(scope.temporal_window, scope.spatial_set | (op.ids or all_ids))
        else:
            scope = reduce_scope(scope, op.ids)
    scope.validate(all_ids)
    return scope


def is_maximal(scope: Scope, all_ids: Iterable[Ident], max_window: int) -> bool:
    return frozenset(all_ids) <= scope.spatial_set and scope.temporal_window >= max_window


def propose_plans(
    hypotheses: Iterable[int],
    scope: Scope,
    budget: int,
    current: EnvState,
    all_ids: Iterable[Ident],
    max_window: int,
    last_delta_empty: bool = False,
) -> List[ActionPlan]:
    """Candidate plans: one single-toggle probe per hypothesis, plus scope expansion when nothing changed"""
    if budget < 1:
        raise MisuseError("budget must be at least 1")
    all_ids = frozenset(all_ids)
    hypotheses = sorted(set(hypotheses))
    maximal = is_maximal(scope, all_ids, max_window)
    if not hypotheses and maximal:
        raise NoPlanError("No hypotheses left and the scope is already maximal")

    plans = []
    for f in hypotheses:
        value = current.value(factor(f))
        plans.append(ActionPlan(toggles=(Toggle(f, not value if value is not None else True),)))

    if last_delta_empty or not hypotheses:
        hidden = all_ids - scope.spatial_set
        if hidden:
            plans.append(ActionPlan(scope_ops=(ScopeOp(ScopeOpKind.EXPAND_SPATIAL, hidden),)))
        if scope.temporal_window < max_window:
            plans.append(ActionPlan(scope_ops=(ScopeOp(ScopeOpKind.EXPAND_TEMPORAL),)))
    return plans


class HypothesisAssessor:
    """Scores a plan against one hypothetical outcome per call.

    Each call draws the cause from the hypothesis set, so averaging several
    calls estimates the expected utility over what the environment may hide.
    """

    def __init__(
        self,
        hypotheses: Iterable[int],
        weights: UtilityWeights,
        budget: int,
        rng: np.random.Generator,
        stats: Optional[CooccurrenceStats] = None,
        target: Optional[Ident] = None,
    ):
        self.hypotheses = sorted(set(hypotheses))
        self.weights = weights
        self.budget = budget
        self.rng = rng
        self.stats = stats
        self.target = target

    def _cooccurrence(self, plan: ActionPlan) -> Optional[float]:
        if self.stats is None or self.target is None or self.stats.trials_with[plan.label] < 1:
            return None
        scores = [
            cooccurrence_score(self.stats, plan.label, sig)
            for (label, sig) in self.stats.count_with
            if label == plan.label and sig.location == self.target
        ]
        return max(scores) if scores else 0.0

    def __call__(self, plan: ActionPlan) -> PlanAssessment:
        before = len(self.hypotheses)
        after = before
        probe = plan.target_factor()
        if probe is not None and probe in self.hypotheses and self.hypotheses:
            cause = self.hypotheses[int(self.rng.integers(len(self.hypotheses)))]
            after = 1 if cause == probe else before - 1
        evidence = PlanEvidence(
            cooccurrence=self._cooccurrence(plan),
            hypotheses_before=before,
            hypotheses_after=max(after, 1) if before else 0,
            budget=self.budget,
        )
        return assess_plan(plan, evidence, self.weights)


def _tie_key(plan: ActionPlan, mean_cost: float):
    target = plan.target_factor()
    return (mean_cost, target if target is not None else math.inf, plan.label)


def select_plan(
    plans: Sequence[ActionPlan],
    assessor: Callable[[ActionPlan], PlanAssessment],
    samples_per_plan: int = 1,
) -> ActionPlan:
    """argmax of the sample-mean utility; ties go to the cheaper plan, then the lower factor id"""
    if not plans:
        raise SelectionError("Cannot select from an empty plan set")
    if samples_per_plan < 1:
        raise MisuseError("samples_per_plan must be at least 1")

    best, best_utility, best_tie = None, None, None
    for plan in plans:
        assessments = [assessor(plan) for _ in range(samples_per_plan)]
        mean_utility = sum(a.utility for a in assessments) / samples_per_plan
        mean_cost = sum(a.cost for a in assessments) / samples_per_plan
        tie = _tie_key(plan, mean_cost)
        if best is None:
            best, best_utility, best_tie = plan, mean_utility, tie
            continue
        if math.isclose(mean_utility, best_utility, rel_tol=_UTILITY_REL_TOL, abs_tol=_UTILITY_ABS_TOL):
            if tie < best_tie:
                best, best_utility, best_tie = plan, mean_utility, tie
        elif mean_utility > best_utility:
            best, best_utility, best_tie = plan, mean_utility, tie
    app_logger.debug(f"Selected plan {best.label} (utility {best_utility:.4f}) from {len(plans)}")
    return best


class FactorEffect(Enum):
    ASSOCIATED = "associated"
    NOT_ASSOCIATED = "not_associated"


class InterventionSession:
    """Exclusive handle on one environment for controlled comparisons"""

    def __init__(self, env: Environment, scope: Optional[Scope] = None):
        self.env = env
        self.scope = scope or env.full_scope()
        self.interventions = 0

    def set_factor(self, factor_id: int, enabled: bool) -> EnvState:
        apply_intervention(self.env, ActionPlan(toggles=(Toggle(factor_id, enabled),)))
        self.interventions += 1
        return observe(self.env, self.scope)


def compare_factor(
    session: InterventionSession,
    factor_id: int,
    lambda1: bool,
    lambda2: bool,
    target: Optional[Ident] = None,
) -> FactorEffect:
    if lambda1 == lambda2:
        raise MisuseError("compare_factor needs two different settings")
    if not 0 <= factor_id < session.env.spec.num_factors:
        raise InterventionError(f"Unknown factor index {factor_id}")

    first = session.set_factor(factor_id, lambda1)
    second = session.set_factor(factor_id, lambda2)
    expected = Direction.APPEARED if lambda2 else Direction.DISAPPEARED
    changes = diff(first, second, session.scope)
    tracking = [
        d
        for d in changes
        if d.location.kind == RESULT
        and d.direction is expected
        and first.value(d.location) == lambda1
        and (target is None or d.location == target)
    ]
    effect = FactorEffect.ASSOCIATED if tracking else FactorEffect.NOT_ASSOCIATED
    app_logger.debug(f"compare_factor {factor(factor_id)}: {effect.value}")
    return effect
