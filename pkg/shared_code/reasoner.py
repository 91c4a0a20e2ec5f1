import re
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Hashable, Optional, Protocol, Sequence, Tuple

from prettytable import PrettyTable

from shared_code.exceptions import (
    InconsistentObservationsError,
    MisuseError,
    RemoteReasonerError,
)
from shared_code.llm_client import LLMClient
from shared_code.models import RESULT, EnvState, Ident, Toggle, factor
from shared_code.query_cache import QueryCache
from telegram_logging_handler import app_logger

SYSTEM_INSTRUCTION = (
    "You identify causes in a simulated environment. Each factor can be enabled or "
    "disabled and each result is present or absent. Exactly one factor causes the "
    "target result. Answer with one line 'CAUSE: f<k>' when the observations single "
    "out one factor, otherwise 'CANDIDATES: f<i>, f<j>, ...'. Add a second line "
    "'SUGGEST: enable f<k>' or 'SUGGEST: disable f<k>' naming the toggle that would "
    "best separate the remaining candidates."
)

DEFAULT_PROMPT_TEMPLATE = (
    "Observed states (1 = enabled/present, 0 = disabled/absent, ? = not observed):\n"
    "{table}\n\n"
    "Which factor causes {target}?"
)

_TOGGLE_PATTERN = re.compile(r"\b(enable|disable)\s+f(\d+)\b", re.IGNORECASE)
_FACTOR_PATTERN = re.compile(r"\bf(\d+)\b", re.IGNORECASE)


class AnswerStatus(Enum):
    IDENTIFIED = "identified"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class ReasonerQuery:
    observed_states: Tuple[EnvState, ...]
    target_result: Ident

    def __post_init__(self):
        if not self.observed_states:
            raise MisuseError("A reasoner query needs at least one observed state")
        if self.target_result.kind != RESULT:
            raise MisuseError(f"{self.target_result} is not a result identifier")
        if self.target_result.index >= len(self.observed_states[0].results_present):
            raise MisuseError(f"Unknown target result {self.target_result}")

    @property
    def latest(self) -> EnvState:
        return self.observed_states[-1]

    @property
    def num_factors(self) -> int:
        return len(self.latest.factor_states)


@dataclass(frozen=True)
class ReasonerAnswer:
    status: AnswerStatus
    hypotheses: FrozenSet[int]
    suggested_toggle: Optional[Toggle] = None

    def __post_init__(self):
        if self.status is AnswerStatus.IDENTIFIED and len(self.hypotheses) != 1:
            raise MisuseError("An identified answer carries exactly one hypothesis")

    @property
    def identified(self) -> Optional[int]:
        if self.status is AnswerStatus.IDENTIFIED:
            return next(iter(self.hypotheses))
        return None

    def describe(self) -> str:
        names = ", ".join(str(factor(f)) for f in sorted(self.hypotheses))
        return f"{self.status.value}({names})"


class Reasoner(Protocol):
    invocations: int

    def infer(self, query: ReasonerQuery) -> ReasonerAnswer:
        ...


def canonical_key(state: EnvState) -> Hashable:
    # time is not observable content
    return (state.factor_states, state.results_present)


def _suggest(hypotheses: Sequence[int], latest: EnvState) -> Optional[Toggle]:
    if not hypotheses:
        return None
    probe = min(hypotheses)
    current = latest.factor_states[probe]
    return Toggle(probe, not current if current is not None else True)


def _answer(hypotheses: FrozenSet[int], latest: EnvState) -> ReasonerAnswer:
    status = AnswerStatus.IDENTIFIED if len(hypotheses) == 1 else AnswerStatus.UNDETERMINED
    return ReasonerAnswer(status, hypotheses, _suggest(sorted(hypotheses), latest))


def infer_cause_oracle(query: ReasonerQuery) -> ReasonerAnswer:
    """Hypothesis elimination: keep the factors whose state tracked the target in every observation"""
    target = query.target_result
    hypotheses = set(range(query.num_factors))
    for state in query.observed_states:
        present = state.value(target)
        if present is None:
            continue
        for f in list(hypotheses):
            enabled = state.factor_states[f]
            if enabled is not None and enabled != present:
                hypotheses.discard(f)

    if not hypotheses:
        raise InconsistentObservationsError(
            f"No factor tracks {target} across {len(query.observed_states)} observed states"
        )
    return _answer(frozenset(hypotheses), query.latest)


class OracleReasoner:
    def __init__(self):
        self.invocations = 0

    def infer(self, query: ReasonerQuery) -> ReasonerAnswer:
        self.invocations += 1
        return infer_cause_oracle(query)


def render_state_table(states: Sequence[EnvState]) -> str:
    if not states:
        return ""
    identifiers = states[-1].identifiers()
    table = PrettyTable()
    table.field_names = ["step"] + [str(i) for i in identifiers]
    for state in states:
        row = [state.time]
        for ident in identifiers:
            value = state.value(ident)
            row.append("?" if value is None else int(value))
        table.add_row(row)
    return table.get_string()


def render_prompt(query: ReasonerQuery, prompt_template: str = DEFAULT_PROMPT_TEMPLATE) -> str:
    return prompt_template.format(table=render_state_table(query.observed_states), target=query.target_result)


def parse_reply(reply: str, num_factors: int, latest: EnvState) -> ReasonerAnswer:
    """Read the cause and the suggested toggle out of a free-text reply"""
    everything = frozenset(range(num_factors))
    text = reply or ""

    suggestion = None
    for verb, number in _TOGGLE_PATTERN.findall(text):
        index = int(number) - 1
        if 0 <= index < num_factors:
            suggestion = Toggle(index, verb.lower() == "enable")
            break
    remainder = _TOGGLE_PATTERN.sub(" ", text)

    named = []
    for number in _FACTOR_PATTERN.findall(remainder):
        index = int(number) - 1
        if 0 <= index < num_factors and index not in named:
            named.append(index)

    if not named:
        app_logger.warning(f"Could not parse a factor from reasoner reply: {text[:120]!r}")
        return ReasonerAnswer(AnswerStatus.UNDETERMINED, everything, suggestion or _suggest(sorted(everything), latest))

    hypotheses = frozenset(named)
    status = AnswerStatus.IDENTIFIED if len(hypotheses) == 1 else AnswerStatus.UNDETERMINED
    return ReasonerAnswer(status, hypotheses, suggestion or _suggest(sorted(hypotheses), latest))


def infer_cause_remote(
    client: LLMClient, query: ReasonerQuery, prompt_template: str = DEFAULT_PROMPT_TEMPLATE
) -> ReasonerAnswer:
    reply = client.complete(SYSTEM_INSTRUCTION, render_prompt(query, prompt_template))
    answer = parse_reply(reply, query.num_factors, query.latest)
    app_logger.debug(f"Remote reasoner answered {answer.describe()}")
    return answer


class RemoteReasoner:
    def __init__(self, client: LLMClient, prompt_template: str = DEFAULT_PROMPT_TEMPLATE):
        self.client = client
        self.prompt_template = prompt_template
        self.invocations = 0

    def infer(self, query: ReasonerQuery) -> ReasonerAnswer:
        self.invocations += 1
        try:
            return infer_cause_remote(self.client, query, self.prompt_template)
        except RemoteReasonerError as e:
            app_logger.error(f"Remote reasoner query failed: {e}")
            raise


def dedup_query(
    cache: QueryCache, state_key: Hashable, reasoner: Reasoner, query: ReasonerQuery
) -> Tuple[ReasonerAnswer, bool]:
    """Answer from the cache for a known state, otherwise ask the backend once and remember it"""
    cached = cache.get_answer(state_key)
    if cached is not None:
        return cached, False
    answer = reasoner.infer(query)
    cache.set_answer(state_key, answer)
    return answer, True
