import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple

from shared_code.difference import (
    DegreeWeights,
    DifferenceSet,
    DiffSignature,
    Dimension,
    Direction,
    most_informative,
)
from shared_code.exceptions import (
    InsufficientDataError,
    MisuseError,
    NoKeyError,
    UnknownIdentifierError,
)
from shared_code.models import parse_ident
from telegram_logging_handler import app_logger

MemoryKey = Tuple[DiffSignature, ...]
FeedbackSig = Tuple[DiffSignature, ...]
Pair = Tuple[str, FeedbackSig]

_write_lock = threading.Lock()


class StoreKind(Enum):
    PARAMETRIC = "parametric"
    OBVIOUS = "obvious"


class Generality(Enum):
    GENERAL = "general"
    SPECIFIC = "specific"


@dataclass(frozen=True)
class Scenario:
    env_tag: str = "sim"
    scope_summary: str = ""
    time_bucket: int = 0

    @property
    def tag(self) -> str:
        return f"{self.env_tag}|{self.scope_summary}|t{self.time_bucket}"


@dataclass
class RelationshipRecord:
    key: MemoryKey
    action_sig: str
    feedback: FeedbackSig
    scenario: Scenario
    generality: Generality = Generality.SPECIFIC
    evidence_count: int = 1
    scenarios: Set[str] = field(default_factory=set)

    @property
    def pair(self) -> Pair:
        return (self.action_sig, self.feedback)


class MixedMemory:
    """Frequency table for common action->feedback pairs plus an explicit store for rare ones"""

    def __init__(self, epsilon: float = 0.05, min_support: int = 10, movability_threshold: int = 2):
        if not 0.0 < epsilon < 1.0:
            raise MisuseError("epsilon must lie in (0, 1)")
        self.epsilon = epsilon
        self.min_support = min_support
        self.movability_threshold = movability_threshold
        self.pair_counts: Counter = Counter()
        self.total_events = 0
        self.stores: Dict[StoreKind, Dict[MemoryKey, Dict[Pair, RelationshipRecord]]] = {
            StoreKind.PARAMETRIC: {},
            StoreKind.OBVIOUS: {},
        }
        self.pair_store: Dict[Pair, StoreKind] = {}

    def all_records(self) -> List[RelationshipRecord]:
        return [
            record
            for store in self.stores.values()
            for by_pair in store.values()
            for record in by_pair.values()
        ]

    def records_in(self, kind: StoreKind) -> List[RelationshipRecord]:
        return [r for by_pair in self.stores[kind].values() for r in by_pair.values()]

    def store_of(self, action_sig: str, feedback_sig: FeedbackSig) -> Optional[StoreKind]:
        return self.pair_store.get((action_sig, tuple(feedback_sig)))

    def has_feedback(self, sig: DiffSignature, action_sig: Optional[str] = None) -> bool:
        return any(
            sig in record.feedback and (action_sig is None or record.action_sig == action_sig)
            for record in self.all_records()
        )

    def _find(self, key: MemoryKey, pair: Pair) -> Optional[RelationshipRecord]:
        for store in self.stores.values():
            record = store.get(key, {}).get(pair)
            if record is not None:
                return record
        return None

    def _put(self, kind: StoreKind, record: RelationshipRecord) -> None:
        self.stores[kind].setdefault(record.key, {})[record.pair] = record

    def _move_pair(self, pair: Pair, target: StoreKind) -> None:
        source = StoreKind.OBVIOUS if target is StoreKind.PARAMETRIC else StoreKind.PARAMETRIC
        for key in list(self.stores[source].keys()):
            record = self.stores[source][key].pop(pair, None)
            if record is not None:
                self._put(target, record)
            if not self.stores[source][key]:
                del self.stores[source][key]
        self.pair_store[pair] = target


def occurrence_prob(mem: MixedMemory, action_sig: str, feedback_sig: FeedbackSig) -> float:
    if mem.total_events < 1:
        raise InsufficientDataError("Memory holds no recorded events")
    return mem.pair_counts[(action_sig, tuple(feedback_sig))] / mem.total_events


def route(mem: MixedMemory, action_sig: str, feedback_sig: FeedbackSig) -> StoreKind:
    if mem.total_events < mem.min_support:
        return StoreKind.OBVIOUS
    # strict inequality: P == epsilon already counts as statistically supported
    if occurrence_prob(mem, action_sig, feedback_sig) < mem.epsilon:
        return StoreKind.OBVIOUS
    return StoreKind.PARAMETRIC


def assess_movability(
    record: RelationshipRecord, distinct_scenarios_seen: int, movability_threshold: int = 2
) -> Generality:
    if movability_threshold < 2:
        raise MisuseError("movability_threshold must be at least 2")
    if distinct_scenarios_seen >= movability_threshold:
        return Generality.GENERAL
    return Generality.SPECIFIC


def _reroute_all(mem: MixedMemory) -> None:
    for pair in list(mem.pair_counts.keys()):
        target = route(mem, *pair)
        current = mem.pair_store.get(pair)
        if current is not target:
            if current is not None:
                app_logger.debug(f"Memory pair {pair[0]} -> {_sig_text(pair[1])} moves {current.value} -> {target.value}")
            mem._move_pair(pair, target)


def record(
    mem: MixedMemory,
    action_sig: str,
    feedback: Iterable[DiffSignature],
    scenario: Scenario,
    delta_set: DifferenceSet,
    weights: DegreeWeights = DegreeWeights(),
    window: int = 1,
) -> MixedMemory:
    key_delta = most_informative(delta_set, weights, window)
    if key_delta is None:
        raise NoKeyError("Cannot key a relationship on an empty difference set")
    key: MemoryKey = (key_delta.signature,)
    feedback_sig: FeedbackSig = tuple(sorted(feedback, key=str))
    pair: Pair = (action_sig, feedback_sig)

    mem.pair_counts[pair] += 1
    mem.total_events += 1

    present = set(delta_set.signatures())
    touched = []
    existing = mem._find(key, pair)
    if existing is None:
        new_record = RelationshipRecord(
            key=key,
            action_sig=action_sig,
            feedback=feedback_sig,
            scenario=scenario,
            scenarios={scenario.tag},
        )
        mem._put(mem.pair_store.get(pair, StoreKind.OBVIOUS), new_record)
        touched.append(new_record)
    else:
        existing.evidence_count += 1
        touched.append(existing)

    # refined keys specialise the base key; they gather evidence when their extras are present
    for candidate in mem.all_records():
        if (
            len(candidate.key) > 1
            and candidate.key[0] == key[0]
            and candidate.pair == pair
            and all(extra in present for extra in candidate.key[1:])
        ):
            candidate.evidence_count += 1
            touched.append(candidate)

    for rec in touched:
        rec.scenario = scenario
        rec.scenarios.add(scenario.tag)
        rec.generality = assess_movability(rec, len(rec.scenarios), mem.movability_threshold)

    _reroute_all(mem)
    return mem


def retrieve(
    mem: MixedMemory,
    delta_set: DifferenceSet,
    weights: DegreeWeights = DegreeWeights(),
    window: int = 1,
) -> List[RelationshipRecord]:
    key_delta = most_informative(delta_set, weights, window)
    if key_delta is None:
        return []
    base = key_delta.signature
    present = set(delta_set.signatures())
    matches = [
        r
        for r in mem.all_records()
        if r.key[0] == base and all(extra in present for extra in r.key[1:])
    ]
    matches.sort(key=lambda r: (-len(r.key), -r.evidence_count, r.action_sig, _sig_text(r.feedback)))
    return matches


def refine_key(mem: MixedMemory, key: MemoryKey, extra: DiffSignature) -> MemoryKey:
    key = tuple(key)
    base_records = [
        (kind, r) for kind, store in mem.stores.items() for r in store.get(key, {}).values()
    ]
    if not base_records:
        raise UnknownIdentifierError(f"No memory key {_sig_text(key)}")
    new_key = key + (extra,)
    for kind, base in base_records:
        if mem._find(new_key, base.pair) is None:
            mem._put(
                kind,
                RelationshipRecord(
                    key=new_key,
                    action_sig=base.action_sig,
                    feedback=base.feedback,
                    scenario=base.scenario,
                    generality=Generality.SPECIFIC,
                    evidence_count=1,
                    scenarios={base.scenario.tag},
                ),
            )
    return new_key


def _sig_text(sigs: Iterable[DiffSignature]) -> str:
    return "|".join(str(s) for s in sigs)


def _parse_sig(text: str) -> DiffSignature:
    dimension, location, direction = text.split(":")
    return DiffSignature(Dimension[dimension.upper()], parse_ident(location), Direction(direction))


def _parse_sigs(text: str) -> Tuple[DiffSignature, ...]:
    return tuple(_parse_sig(part) for part in text.split("|") if part)


def save_memory(mem: MixedMemory, path) -> None:
    """Write a JSON-lines snapshot, one relationship record per line"""
    path = Path(path)
    lines = []
    for kind in (StoreKind.PARAMETRIC, StoreKind.OBVIOUS):
        for rec in sorted(mem.records_in(kind), key=lambda r: (_sig_text(r.key), r.action_sig, _sig_text(r.feedback))):
            lines.append(
                json.dumps(
                    {
                        "key": _sig_text(rec.key),
                        "action_sig": rec.action_sig,
                        "feedback_sig": _sig_text(rec.feedback),
                        "scenario": {
                            "env_tag": rec.scenario.env_tag,
                            "scope_summary": rec.scenario.scope_summary,
                            "time_bucket": rec.scenario.time_bucket,
                        },
                        "scenarios": sorted(rec.scenarios),
                        "evidence_count": rec.evidence_count,
                        "generality": rec.generality.value,
                        "store": kind.value,
                        "pair_count": mem.pair_counts[rec.pair],
                        "total_events": mem.total_events,
                    },
                    sort_keys=True,
                )
            )
    with _write_lock:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + ("\n" if lines else ""))
    app_logger.debug(f"Saved {len(lines)} memory records to {path}")


def load_memory(path, epsilon: float = 0.05, min_support: int = 10, movability_threshold: int = 2) -> MixedMemory:
    mem = MixedMemory(epsilon=epsilon, min_support=min_support, movability_threshold=movability_threshold)
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            data = json.loads(line)
            scenario = Scenario(**data["scenario"])
            rec = RelationshipRecord(
                key=_parse_sigs(data["key"]),
                action_sig=data["action_sig"],
                feedback=_parse_sigs(data["feedback_sig"]),
                scenario=scenario,
                generality=Generality(data["generality"]),
                evidence_count=int(data["evidence_count"]),
                scenarios=set(data.get("scenarios") or [scenario.tag]),
            )
            kind = StoreKind(data["store"])
            mem._put(kind, rec)
            mem.pair_store[rec.pair] = kind
            mem.pair_counts[rec.pair] = int(data["pair_count"])
            mem.total_events = max(mem.total_events, int(data["total_events"]))
    return mem
