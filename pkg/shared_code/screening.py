from collections import Counter
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Hashable, List, NamedTuple, Optional, Sequence, TYPE_CHECKING

from shared_code.difference import (
    DegreeClass,
    DegreeWeights,
    Difference,
    DifferenceSet,
    DiffSignature,
    Direction,
    classify,
    degree,
)
from shared_code.exceptions import InsufficientDataError, MisuseError
from shared_code.models import Ident, Scope
from telegram_logging_handler import app_logger

if TYPE_CHECKING:
    from shared_code.memory import MixedMemory


class CooccurrenceEntry(NamedTuple):
    count_with_action: int
    count_without_action: int
    trials_with_action: int
    trials_without_action: int


class CooccurrenceStats:
    """Action/difference co-occurrence counts for one trial"""

    def __init__(self):
        self.trials_with: Counter = Counter()
        self.trials_without = 0
        self.count_with: Counter = Counter()
        self.count_without: Counter = Counter()

    def entry(self, action_sig: Hashable, diff_sig: DiffSignature) -> CooccurrenceEntry:
        return CooccurrenceEntry(
            count_with_action=self.count_with[(action_sig, diff_sig)],
            count_without_action=self.count_without[diff_sig],
            trials_with_action=self.trials_with[action_sig],
            trials_without_action=self.trials_without,
        )


class ExpectationSource(Enum):
    REASONER = "reasoner"
    MEMORY = "memory"


@dataclass(frozen=True)
class ExpectationTemplate:
    # None acts as the wildcard for either field
    expected_location: Optional[Ident] = None
    expected_direction: Optional[Direction] = None
    source: ExpectationSource = ExpectationSource.REASONER

    def __post_init__(self):
        if self.expected_location is None and self.expected_direction is None:
            raise MisuseError("An expectation template needs a location or a direction")

    def matches(self, item) -> bool:
        if self.expected_location is not None and item.location != self.expected_location:
            return False
        if self.expected_direction is not None and item.direction != self.expected_direction:
            return False
        return True


@dataclass(frozen=True)
class Candidate:
    difference: Difference
    cooccurrence: float
    degree: float

    @property
    def location(self) -> Ident:
        return self.difference.location

    @property
    def direction(self) -> Direction:
        return self.difference.direction

    @property
    def signature(self) -> DiffSignature:
        return self.difference.signature


class VerdictStatus(Enum):
    RELIABLE = "reliable"
    SUSPECT = "suspect"
    UNKNOWN = "unknown"


class VerdictReason(Enum):
    CONSISTENT_WITH_MEMORY = "consistent_with_memory"
    CONTRADICTS_MEMORY = "contradicts_memory"
    ABNORMAL_DEGREE = "abnormal_degree"
    INSUFFICIENT_REPETITION = "insufficient_repetition"
    NO_PRIOR_RECORD = "no_prior_record"


@dataclass(frozen=True)
class Verdict:
    status: VerdictStatus
    rationale: VerdictReason


class FailureHypothesis(Enum):
    INSUFFICIENT_STRENGTH = "insufficient_strength"
    LIMITED_SCOPE = "limited_scope"
    INTERFERENCE = "interference"
    DELAYED_EFFECT = "delayed_effect"


def record_observation(
    stats: CooccurrenceStats,
    action_sig: Optional[Hashable],
    delta_set: DifferenceSet,
    action_performed: bool,
) -> CooccurrenceStats:
    if action_performed:
        stats.trials_with[action_sig] += 1
        for sig in set(delta_set.signatures()):
            stats.count_with[(action_sig, sig)] += 1
    else:
        stats.trials_without += 1
        for sig in set(delta_set.signatures()):
            stats.count_without[sig] += 1
    return stats


def cooccurrence_score(
    stats: CooccurrenceStats, action_sig: Hashable, diff_sig: DiffSignature
) -> float:
    """P(diff | action) - P(diff | no action), in [-1, 1]"""
    entry = stats.entry(action_sig, diff_sig)
    if entry.trials_with_action < 1:
        raise InsufficientDataError(f"No trials recorded for action {action_sig}")
    with_action = Fraction(entry.count_with_action, entry.trials_with_action)
    without_action = (
        Fraction(entry.count_without_action, entry.trials_without_action)
        if entry.trials_without_action
        else Fraction(0)
    )
    return float(with_action - without_action)


def screen_by_action(
    stats: CooccurrenceStats,
    action_sig: Hashable,
    delta_set: DifferenceSet,
    theta_screen: float = 0.5,
    weights: DegreeWeights = DegreeWeights(),
    window: int = 1,
) -> List[Candidate]:
    if not -1.0 <= theta_screen <= 1.0:
        raise MisuseError("theta_screen must lie in [-1, 1]")
    candidates = []
    for delta in delta_set:
        score = cooccurrence_score(stats, action_sig, delta.signature)
        if score >= theta_screen:
            candidates.append(Candidate(delta, score, degree(delta, weights, window)))
    candidates.sort(key=lambda c: (-c.cooccurrence, -c.degree))
    return candidates


def screen_by_expectation(candidates: Sequence, templates: Sequence[ExpectationTemplate]) -> list:
    """Stable re-rank: template matches first. Nothing is dropped"""
    if not templates:
        return list(candidates)
    matching = [c for c in candidates if any(t.matches(c) for t in templates)]
    others = [c for c in candidates if not any(t.matches(c) for t in templates)]
    return matching + others


def judge_correctness(
    candidate: Difference,
    memory: "MixedMemory",
    repeat_evidence: int,
    repeat_threshold: int = 2,
    action_sig: Optional[Hashable] = None,
    weights: DegreeWeights = DegreeWeights(),
    window: int = 1,
) -> Verdict:
    if repeat_threshold < 1:
        raise MisuseError("repeat_threshold must be at least 1")
    sig = candidate.signature

    for record in memory.all_records():
        if action_sig is not None and record.action_sig != action_sig:
            continue
        for seen in record.feedback:
            if (
                seen.location == sig.location
                and seen.direction == sig.direction.opposite()
                and seen.direction != sig.direction
                and sig not in record.feedback
            ):
                return Verdict(VerdictStatus.SUSPECT, VerdictReason.CONTRADICTS_MEMORY)

    known = memory.has_feedback(sig, action_sig)
    if known and repeat_evidence >= repeat_threshold:
        return Verdict(VerdictStatus.RELIABLE, VerdictReason.CONSISTENT_WITH_MEMORY)
    if classify(degree(candidate, weights, window), weights) is DegreeClass.ABNORMAL:
        return Verdict(VerdictStatus.SUSPECT, VerdictReason.ABNORMAL_DEGREE)
    if known:
        return Verdict(VerdictStatus.UNKNOWN, VerdictReason.INSUFFICIENT_REPETITION)
    return Verdict(VerdictStatus.UNKNOWN, VerdictReason.NO_PRIOR_RECORD)


_DEFAULT_FAILURE_ORDER = (
    FailureHypothesis.INSUFFICIENT_STRENGTH,
    FailureHypothesis.DELAYED_EFFECT,
    FailureHypothesis.INTERFERENCE,
    FailureHypothesis.LIMITED_SCOPE,
)


def analyze_absence(
    action_sig: Hashable,
    templates: Sequence[ExpectationTemplate],
    scope: Scope,
    observed: Optional[DifferenceSet] = None,
    delay_hint: Optional[int] = None,
) -> List[FailureHypothesis]:
    """Rank explanations for expected feedback that did not show up.

    delay_hint is the suspected causation delay in steps, when one is known.
    """
    if not templates:
        raise MisuseError("analyze_absence needs at least one expectation template")
    if observed is not None and any(t.matches(d) for t in templates for d in observed):
        raise MisuseError("An expected difference was observed; nothing is absent")

    front = []
    if any(
        t.expected_location is not None and not scope.contains(t.expected_location)
        for t in templates
    ):
        front.append(FailureHypothesis.LIMITED_SCOPE)
    if delay_hint is not None and delay_hint > scope.temporal_window:
        front.append(FailureHypothesis.DELAYED_EFFECT)
    if observed is not None and len(observed) > 0:
        front.append(FailureHypothesis.INTERFERENCE)

    ranked = front + [h for h in _DEFAULT_FAILURE_ORDER if h not in front]
    app_logger.debug(f"Absence after {action_sig}: {[h.value for h in ranked]}")
    return ranked
