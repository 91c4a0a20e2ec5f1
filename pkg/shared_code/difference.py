from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from shared_code.exceptions import ComparisonError, MisuseError, ScopeError
from shared_code.models import EnvState, Ident, Scope


class Dimension(IntEnum):
    # value order is the tie-break order for the most informative difference
    TEMPORAL = 0
    SPATIAL = 1
    MAGNITUDE = 2
    FREQUENCY = 3


class Direction(Enum):
    APPEARED = "appeared"
    DISAPPEARED = "disappeared"
    CHANGED = "changed"

    def opposite(self) -> "Direction":
        if self is Direction.APPEARED:
            return Direction.DISAPPEARED
        if self is Direction.DISAPPEARED:
            return Direction.APPEARED
        return self


class DegreeClass(Enum):
    MINOR = "minor"
    SIGNIFICANT = "significant"
    ABNORMAL = "abnormal"


class DiffSignature(NamedTuple):
    dimension: Dimension
    location: Ident
    direction: Direction

    def __str__(self) -> str:
        return f"{self.dimension.name.lower()}:{self.location}:{self.direction.value}"


@dataclass(frozen=True)
class Difference:
    dimension: Dimension
    location: Ident
    direction: Direction
    delta_magnitude: float = 1.0
    first_seen: int = 0
    occurrence_count: int = 1
    # trailing steps during which the new value held
    persistence: int = 1

    def __post_init__(self):
        if self.delta_magnitude < 0:
            raise ValueError("delta_magnitude must be nonnegative")
        if self.occurrence_count < 1:
            raise ValueError("occurrence_count must be at least 1")

    @property
    def signature(self) -> DiffSignature:
        return DiffSignature(self.dimension, self.location, self.direction)


def signature(delta: Difference) -> DiffSignature:
    return delta.signature


@dataclass(frozen=True)
class DifferenceSet:
    items: Tuple[Difference, ...]
    scope: Scope
    from_time: int
    to_time: int

    def __post_init__(self):
        if self.from_time > self.to_time:
            raise ValueError("from_time must not exceed to_time")
        sigs = [d.signature for d in self.items]
        if len(sigs) != len(set(sigs)):
            raise ValueError("Duplicate (dimension, location, direction) in difference set")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Difference]:
        return iter(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)

    def signatures(self) -> List[DiffSignature]:
        return [signature(d) for d in self.items]

    def at(self, location: Ident) -> List[Difference]:
        return [d for d in self.items if d.location == location]


@dataclass(frozen=True)
class DegreeWeights:
    w_magnitude: float = 1.0
    w_frequency: float = 1.0
    w_persistence: float = 1.0
    theta_significant: float = 0.5
    theta_abnormal: float = 1.5

    def validate(self) -> None:
        weights = (self.w_magnitude, self.w_frequency, self.w_persistence)
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError("Degree weights must be nonnegative with at least one positive")
        if not self.theta_significant < self.theta_abnormal:
            raise ValueError("theta_significant must be below theta_abnormal")


def _value(state: EnvState, ident: Ident) -> Optional[bool]:
    try:
        return state.value(ident)
    except ScopeError as e:
        raise ComparisonError(str(e)) from e


def _trajectory(
    ident: Ident, before: EnvState, after: EnvState, history: Sequence[EnvState]
) -> List[Tuple[int, bool]]:
    lo, hi = sorted((before.time, after.time))
    points = [(before.time, _value(before, ident))]
    for state in sorted(history, key=lambda s: s.time):
        if lo < state.time < hi:
            value = _value(state, ident)
            if value is not None:
                points.append((state.time, value))
    points.append((after.time, _value(after, ident)))
    if before.time > after.time:
        # swapped arguments walk the window backwards
        points = [points[0]] + sorted(points[1:-1], reverse=True) + [points[-1]]
    return points


def diff(
    before: EnvState,
    after: EnvState,
    scope: Scope,
    history: Optional[Sequence[EnvState]] = None,
    action_step: Optional[int] = None,
) -> DifferenceSet:
    """The generic difference operator between two observed states.

    history, when given, holds the observations between before and after and
    sharpens first_seen, occurrence_count and persistence. A change first seen
    after action_step is Temporal; an entry that flipped more than once in the
    window is Frequency; every other change is Spatial.
    """
    items = []
    for ident in sorted(scope.spatial_set):
        old, new = _value(before, ident), _value(after, ident)
        if old is None and new is None:
            continue
        if old is None or new is None:
            raise ComparisonError(f"{ident} is observed in only one of the compared states")
        if old == new:
            continue

        first_seen, occurrences = after.time, 1
        if history:
            points = _trajectory(ident, before, after, history)
            occurrences = sum(1 for a, b in zip(points, points[1:]) if a[1] != b[1])
            first_seen = points[-1][0]
            for time, value in reversed(points[:-1]):
                if value != new:
                    break
                first_seen = time
        persistence = abs(after.time - first_seen) + 1

        if occurrences > 1:
            dimension = Dimension.FREQUENCY
        elif action_step is not None and first_seen > action_step:
            dimension = Dimension.TEMPORAL
        else:
            dimension = Dimension.SPATIAL

        items.append(
            Difference(
                dimension=dimension,
                location=ident,
                direction=Direction.APPEARED if new else Direction.DISAPPEARED,
                delta_magnitude=1.0,
                first_seen=first_seen,
                occurrence_count=max(occurrences, 1),
                persistence=persistence,
            )
        )
    return DifferenceSet(
        items=tuple(items),
        scope=scope,
        from_time=min(before.time, after.time),
        to_time=max(before.time, after.time),
    )


def degree(delta: Difference, weights: DegreeWeights, window: int) -> float:
    if window < 1:
        raise MisuseError("window must be at least 1")
    magnitude = min(delta.delta_magnitude, 1.0)
    frequency = delta.occurrence_count / window
    persistence = min(delta.persistence / window, 1.0)
    return (
        weights.w_magnitude * magnitude
        + weights.w_frequency * frequency
        + weights.w_persistence * persistence
    )


def classify(score: float, weights: DegreeWeights) -> DegreeClass:
    if score < weights.theta_significant:
        return DegreeClass.MINOR
    if score < weights.theta_abnormal:
        return DegreeClass.SIGNIFICANT
    return DegreeClass.ABNORMAL


def _rank_key(delta: Difference, score: float):
    return (-score, delta.location, delta.dimension, delta.direction.value)


def most_informative(
    delta_set: Iterable[Difference], weights: DegreeWeights, window: int
) -> Optional[Difference]:
    """Highest-degree difference; ties go to the lowest location, then Temporal < ... < Frequency"""
    best, best_key = None, None
    for delta in delta_set:
        key = _rank_key(delta, degree(delta, weights, window))
        if best_key is None or key < best_key:
            best, best_key = delta, key
    return best
