from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Tuple

from shared_code.exceptions import ConfigurationError, InterventionError, ScopeError

FACTOR = "f"
RESULT = "r"


@dataclass(frozen=True, order=True)
class Ident:
    """A factor or result identifier. Ordered by index first, factors before results"""
    index: int
    kind: str = FACTOR

    @property
    def label(self) -> str:
        # 1-based labels: f1..fN, r1..rM
        return f"{self.kind}{self.index + 1}"

    def __str__(self) -> str:
        return self.label


def factor(index: int) -> Ident:
    return Ident(index, FACTOR)


def result(index: int) -> Ident:
    return Ident(index, RESULT)


def parse_ident(text: str) -> Ident:
    """Parse a label such as 'f2' or 'r1' into an Ident"""
    text = str(text).strip().lower()
    if len(text) < 2 or text[0] not in (FACTOR, RESULT) or not text[1:].isdigit():
        raise ConfigurationError(f"Invalid identifier label: {text!r}")
    number = int(text[1:])
    if number < 1:
        raise ConfigurationError(f"Identifier labels are 1-based: {text!r}")
    return Ident(number - 1, text[0])


@dataclass
class EnvSpec:
    num_effective: int = 3
    num_disturbing: int = 4
    # effective factor index -> result index; identity when omitted
    result_map: Optional[Dict[int, int]] = None
    drift_interval: int = 1
    drift_toggle_count: int = 1
    causation_delay: int = 0
    max_steps: int = 200

    def __post_init__(self):
        if self.result_map is None and isinstance(self.num_effective, int):
            self.result_map = {k: k for k in range(max(self.num_effective, 0))}

    @property
    def num_factors(self) -> int:
        return self.num_effective + self.num_disturbing

    @property
    def num_results(self) -> int:
        return self.num_effective

    def validate(self) -> None:
        if self.num_effective < 1:
            raise ConfigurationError("num_effective must be at least 1")
        if self.num_disturbing < 0:
            raise ConfigurationError("num_disturbing must be nonnegative")
        if self.drift_interval < 1:
            raise ConfigurationError("drift_interval must be at least 1")
        if not 0 <= self.drift_toggle_count <= self.num_factors:
            raise ConfigurationError(
                f"drift_toggle_count must be in [0, {self.num_factors}]"
            )
        if self.causation_delay < 0:
            raise ConfigurationError("causation_delay must be nonnegative")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be at least 1")

        effective = set(range(self.num_effective))
        if set(self.result_map.keys()) != effective:
            raise ConfigurationError(
                "result_map must map exactly the effective factors 0..num_effective-1"
            )
        targets = list(self.result_map.values())
        if len(set(targets)) != len(targets) or set(targets) != set(range(self.num_results)):
            raise ConfigurationError("result_map must be a bijection onto the results")

    def factor_ids(self) -> List[Ident]:
        return [factor(i) for i in range(self.num_factors)]

    def result_ids(self) -> List[Ident]:
        return [result(k) for k in range(self.num_results)]

    def all_ids(self) -> FrozenSet[Ident]:
        return frozenset(self.factor_ids() + self.result_ids())


@dataclass(frozen=True)
class EnvState:
    """Snapshot of one step. None marks an entry outside the observation scope"""
    time: int
    factor_states: Tuple[Optional[bool], ...]
    results_present: Tuple[Optional[bool], ...]

    def value(self, ident: Ident) -> Optional[bool]:
        values = self.factor_states if ident.kind == FACTOR else self.results_present
        if not 0 <= ident.index < len(values):
            raise ScopeError(f"Identifier {ident} is not part of this state")
        return values[ident.index]

    def is_observed(self, ident: Ident) -> bool:
        return self.value(ident) is not None

    def identifiers(self) -> List[Ident]:
        return [factor(i) for i in range(len(self.factor_states))] + [
            result(k) for k in range(len(self.results_present))
        ]

    def observed_identifiers(self) -> List[Ident]:
        return [ident for ident in self.identifiers() if self.is_observed(ident)]


@dataclass(frozen=True)
class Scope:
    temporal_window: int
    spatial_set: FrozenSet[Ident]

    def validate(self, known: Optional[Iterable[Ident]] = None) -> None:
        if self.temporal_window < 1:
            raise ScopeError("temporal_window must be at least 1")
        if not self.spatial_set:
            raise ScopeError("spatial_set must not be empty")
        if known is not None:
            unknown = set(self.spatial_set) - set(known)
            if unknown:
                labels = ", ".join(sorted(str(u) for u in unknown))
                raise ScopeError(f"Scope references unknown identifiers: {labels}")

    def contains(self, ident: Ident) -> bool:
        return ident in self.spatial_set

    def summary(self) -> str:
        factors = sum(1 for i in self.spatial_set if i.kind == FACTOR)
        results = len(self.spatial_set) - factors
        return f"w{self.temporal_window}:f{factors}:r{results}"


class Toggle(NamedTuple):
    factor: int
    enable: bool

    @property
    def label(self) -> str:
        return f"{'enable' if self.enable else 'disable'}:{factor(self.factor)}"


class ScopeOpKind(Enum):
    EXPAND_TEMPORAL = "expand_temporal"
    EXPAND_SPATIAL = "expand_spatial"
    REDUCE_SPATIAL = "reduce_spatial"


@dataclass(frozen=True)
class ScopeOp:
    kind: ScopeOpKind
    ids: FrozenSet[Ident] = frozenset()


@dataclass(frozen=True)
class ActionPlan:
    toggles: Tuple[Toggle, ...] = ()
    scope_ops: Tuple[ScopeOp, ...] = ()
    label: str = ""

    def __post_init__(self):
        seen = [t.factor for t in self.toggles]
        if len(seen) != len(set(seen)):
            raise InterventionError("A factor may appear only once in a plan's toggles")
        if not self.label:
            parts = [t.label for t in self.toggles] + [op.kind.value for op in self.scope_ops]
            object.__setattr__(self, "label", "+".join(parts) or "idle")

    @property
    def size(self) -> int:
        return len(self.toggles) + len(self.scope_ops)

    def target_factor(self) -> Optional[int]:
        return self.toggles[0].factor if self.toggles else None


IDLE_PLAN = ActionPlan(label="idle")


class Strategy(str, Enum):
    ACTIVE = "active"
    OBSERVER = "observer"


@dataclass
class TrialOutcome:
    strategy: str
    trial_index: int
    seed: int
    queries: int
    success: bool
    steps_taken: int
    identified: Optional[int] = None
    backend_invocations: int = 0
    notes: List[str] = field(default_factory=list)
