"""
Tests for the causal reasoner backends, reply parsing and query deduplication
The remote backend is exercised against a patched requests.post
"""

import os
import sys
from itertools import combinations, combinations_with_replacement, permutations, product

import numpy as np
import pytest
import requests

# Add the project root to Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared_code.exceptions import ConfigurationError, InconsistentObservationsError, MisuseError, RemoteReasonerError
from shared_code.llm_client import LLMClient
from shared_code.models import EnvState, Toggle, result
from shared_code.query_cache import QueryCache
from shared_code.reasoner import (
    AnswerStatus,
    OracleReasoner,
    ReasonerAnswer,
    ReasonerQuery,
    RemoteReasoner,
    canonical_key,
    dedup_query,
    infer_cause_oracle,
    parse_reply,
    render_state_table,
)

R2 = result(1)
ENDPOINT = "http://localhost:11434/v1/chat/completions"


def _state(factors, results, time=0):
    return EnvState(time, tuple(factors), tuple(results))


def _query(*states, target=R2):
    return ReasonerQuery(tuple(states), target)


def _consistent_state(factors, result_map, time=0):
    """Delay-0 state: result r is present iff the factor mapped to it is enabled"""
    results = [False] * len(result_map)
    for f, r in result_map.items():
        results[r] = factors[f]
    return _state(factors, results, time)


class FakeResponse:
    def __init__(self, status_code=200, content="CAUSE: f2", body=None):
        self.status_code = status_code
        self._body = body if body is not None else {"choices": [{"message": {"content": content}}]}
        self.text = str(self._body)

    def json(self):
        return self._body


class FakePost:
    """Stands in for requests.post: replays responses (or raises exceptions) in order"""

    def __init__(self, *responses):
        self.responses = list(responses)
        self.calls = []

    def __call__(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        item = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(item, Exception):
            raise item
        return item


def _client(monkeypatch, *responses, retries=2):
    fake = FakePost(*responses)
    monkeypatch.setattr("shared_code.llm_client.requests.post", fake)
    delays = []
    client = LLMClient(endpoint=ENDPOINT, api_key="secret", retries=retries, sleep=delays.append)
    return client, fake, delays


def test_canonical_key_ignores_time():
    a = _state([True, False], [True], time=3)
    b = _state([True, False], [True], time=9)
    c = _state([False, False], [True], time=3)

    assert canonical_key(a) == canonical_key(b)
    assert canonical_key(a) != canonical_key(c)
    assert canonical_key(a) == canonical_key(a)


def test_oracle_examples():
    first = _state([True, True, False, False, False, False, False], [True, True, False])
    answer = infer_cause_oracle(_query(first))
    assert answer.status is AnswerStatus.UNDETERMINED
    assert answer.hypotheses == {0, 1}

    second = _state([True, False, False, False, False, False, False], [True, False, False])
    answer = infer_cause_oracle(_query(first, second))
    assert answer.status is AnswerStatus.IDENTIFIED
    assert answer.identified == 1

    contradiction = _state([False] * 7, [False, True, False])
    with pytest.raises(InconsistentObservationsError):
        infer_cause_oracle(_query(contradiction))


def test_oracle_skips_unobserved_entries():
    hidden_target = _state([True, False, False], [None, None, None])
    assert infer_cause_oracle(_query(hidden_target)).hypotheses == {0, 1, 2}

    hidden_factor = _state([None, True, False], [False, True, False])
    assert infer_cause_oracle(_query(hidden_factor)).hypotheses == {0, 1}


def test_query_validation():
    with pytest.raises(MisuseError):
        ReasonerQuery((), R2)
    with pytest.raises(MisuseError):
        ReasonerQuery((_state([True], [True]),), R2)
    with pytest.raises(MisuseError):
        ReasonerAnswer(AnswerStatus.IDENTIFIED, frozenset({0, 1}))


def _check_soundness(states, result_map, target_index):
    cause = next(f for f, r in result_map.items() if r == target_index)
    target = result(target_index)
    previous = None
    for end in range(1, len(states) + 1):
        answer = infer_cause_oracle(_query(*states[:end], target=target))
        assert cause in answer.hypotheses
        if answer.status is AnswerStatus.IDENTIFIED:
            assert answer.identified == cause
        if previous is not None:
            assert answer.hypotheses <= previous
        previous = answer.hypotheses

        toggle = answer.suggested_toggle
        assert toggle.factor in answer.hypotheses
        assert toggle.enable != states[end - 1].factor_states[toggle.factor]


@pytest.mark.parametrize("num_effective,num_disturbing", [(1, 0), (1, 1), (2, 0), (2, 1), (2, 2), (3, 0), (3, 1)])
def test_oracle_soundness_exhaustive_small(num_effective, num_disturbing):
    n = num_effective + num_disturbing
    all_states = list(product([False, True], repeat=n))
    for mapping in permutations(range(num_effective)):
        result_map = dict(enumerate(mapping))
        states = [_consistent_state(list(v), result_map, t) for t, v in enumerate(all_states)]
        for target_index in range(num_effective):
            for size in (1, 2):
                for subset in combinations(states, size):
                    _check_soundness(list(subset), result_map, target_index)


@pytest.mark.parametrize("num_factors", range(1, 9))
def test_oracle_soundness_exhaustive_up_to_eight_factors(num_factors):
    """Every observation sequence of up to four states, up to relabelling.

    The oracle only compares each factor column against the target column, so
    factor order is irrelevant and complementing a whole observation row keeps
    every comparison. That fixes the cause as f1, enabled in every row, and
    leaves the other factors as a multiset of column patterns. Results other
    than the target are never read; the small exhaustive test above varies the
    mapping and effective count.
    """
    num_effective = min(3, num_factors)
    result_map = {f: f for f in range(num_effective)}
    for size in range(1, 5):
        patterns = list(product([False, True], repeat=size))
        cause_column = (True,) * size
        for others in combinations_with_replacement(patterns, num_factors - 1):
            rows = zip(cause_column, *others)
            states = [_consistent_state(list(row), result_map, t) for t, row in enumerate(rows)]
            _check_soundness(states, result_map, 0)


class CountingReasoner(OracleReasoner):
    def __init__(self, fail_first=0):
        super().__init__()
        self.fail_first = fail_first

    def infer(self, query):
        if self.fail_first:
            self.fail_first -= 1
            self.invocations += 1
            raise RemoteReasonerError("endpoint down", 0)
        return super().infer(query)


def test_dedup_hits_the_cache_for_repeated_states():
    cache, backend = QueryCache(), CountingReasoner()
    state = _state([False, True, False], [False, True, False])

    _, fresh = dedup_query(cache, canonical_key(state), backend, _query(state))
    answer, again = dedup_query(cache, canonical_key(state), backend, _query(state))

    assert fresh is True and again is False
    assert backend.invocations == 1
    assert answer.identified == 1


def test_dedup_invokes_once_per_distinct_state():
    cache, backend = QueryCache(), CountingReasoner()
    rng = np.random.default_rng(5)
    seen = set()
    for _ in range(200):
        factors = [bool(v) for v in rng.random(3) < 0.5]
        state = _consistent_state(factors, {0: 0, 1: 1, 2: 2})
        seen.add(canonical_key(state))
        dedup_query(cache, canonical_key(state), backend, _query(state))

    assert backend.invocations == len(seen) == len(cache)


def test_dedup_does_not_cache_errors():
    cache, backend = QueryCache(), CountingReasoner(fail_first=1)
    state = _state([False, True, False], [False, True, False])

    with pytest.raises(RemoteReasonerError):
        dedup_query(cache, canonical_key(state), backend, _query(state))
    assert canonical_key(state) not in cache

    _, fresh = dedup_query(cache, canonical_key(state), backend, _query(state))
    assert fresh is True
    assert backend.invocations == 2


def test_parse_reply_cases():
    latest = _state([False] * 7, [False] * 3)

    named = parse_reply("the cause is factor f2", 7, latest)
    assert named.status is AnswerStatus.IDENTIFIED and named.identified == 1

    shortlist = parse_reply("CANDIDATES: f1, f3\nSUGGEST: enable f3", 7, latest)
    assert shortlist.status is AnswerStatus.UNDETERMINED
    assert shortlist.hypotheses == {0, 2}
    assert shortlist.suggested_toggle == Toggle(2, True)

    # the suggested toggle is not read as a candidate
    suggestion_only = parse_reply("CAUSE: f2\nSUGGEST: disable f5", 7, latest)
    assert suggestion_only.identified == 1
    assert suggestion_only.suggested_toggle == Toggle(4, False)

    nothing = parse_reply("I am not sure.", 7, latest)
    assert nothing.status is AnswerStatus.UNDETERMINED
    assert nothing.hypotheses == frozenset(range(7))

    out_of_range = parse_reply("CAUSE: f12", 7, latest)
    assert out_of_range.hypotheses == frozenset(range(7))


def test_remote_reasoner_sends_one_chat_request(monkeypatch):
    client, fake, _ = _client(monkeypatch, FakeResponse(content="CAUSE: f2"))
    backend = RemoteReasoner(client)
    state = _state([False, True, False], [False, True, False])

    answer = backend.infer(_query(state))

    assert answer.identified == 1
    assert backend.invocations == 1
    assert len(fake.calls) == 1
    payload = fake.calls[0]["json"]
    assert payload["temperature"] == 0
    assert [m["role"] for m in payload["messages"]] == ["system", "user"]
    assert "r2" in payload["messages"][1]["content"]
    assert fake.calls[0]["headers"]["Authorization"] == "Bearer secret"


def test_llm_client_retries_with_backoff(monkeypatch):
    client, fake, delays = _client(monkeypatch, requests.ConnectionError("refused"))

    with pytest.raises(RemoteReasonerError) as excinfo:
        client.complete("system", "user")

    assert len(fake.calls) == 3
    assert delays == [1.0, 2.0]
    assert excinfo.value.retries == 2


def test_llm_client_recovers_after_transient_status(monkeypatch):
    client, fake, delays = _client(monkeypatch, FakeResponse(status_code=503), FakeResponse(content="CAUSE: f1"))

    assert client.complete("system", "user") == "CAUSE: f1"
    assert len(fake.calls) == 2
    assert delays == [1.0]


def test_llm_client_does_not_retry_client_errors(monkeypatch):
    client, fake, delays = _client(monkeypatch, FakeResponse(status_code=400))

    with pytest.raises(RemoteReasonerError):
        client.complete("system", "user")
    assert len(fake.calls) == 1
    assert delays == []


def test_llm_client_requires_an_endpoint(monkeypatch):
    monkeypatch.delenv("AFG_LLM_ENDPOINT", raising=False)

    with pytest.raises(ConfigurationError):
        LLMClient()


def test_render_state_table_marks_unobserved():
    text = render_state_table([_state([True, None], [None], time=4)])

    assert "?" in text
    assert "f1" in text and "r1" in text
    assert render_state_table([]) == ""


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
