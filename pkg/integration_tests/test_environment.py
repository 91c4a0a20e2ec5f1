"""
Tests for the simulated factor -> result environment
Covers creation, scoped observation, interventions, drift and causation delay
"""

import os
import sys

import pytest

# Add the project root to Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared_code.environment import (
    advance,
    apply_intervention,
    create_env,
    drift_step,
    ground_truth,
    observe,
    randomize_factors,
)
from shared_code.exceptions import (
    ConfigurationError,
    InterventionError,
    ScopeError,
    UnknownIdentifierError,
)
from shared_code.models import ActionPlan, EnvSpec, Scope, Toggle, factor, result


def _enable(env, *indices):
    return apply_intervention(env, ActionPlan(toggles=tuple(Toggle(i, True) for i in indices)))


def test_create_env_starts_all_disabled():
    env = create_env(EnvSpec(num_effective=3, num_disturbing=4), seed=7)
    state = env.state()

    assert state.time == 0
    assert state.factor_states == (False,) * 7
    assert state.results_present == (False,) * 3


def test_create_env_rejects_invalid_specs():
    with pytest.raises(ConfigurationError):
        create_env(EnvSpec(num_effective=3, num_disturbing=4, result_map={0: 0, 1: 0, 2: 2}), seed=1)
    with pytest.raises(ConfigurationError):
        create_env(EnvSpec(num_effective=0, num_disturbing=0), seed=1)
    with pytest.raises(ConfigurationError):
        create_env(EnvSpec(drift_interval=0), seed=1)


def test_same_seed_gives_same_trajectory():
    spec = EnvSpec(num_effective=3, num_disturbing=4)
    a, b = create_env(spec, 42), create_env(spec, 42)

    assert [drift_step(a) for _ in range(100)] == [drift_step(b) for _ in range(100)]


def test_observe_full_scope_on_fresh_env():
    env = create_env(EnvSpec(), seed=3)
    state = observe(env, env.full_scope())

    assert not any(state.factor_states)
    assert not any(state.results_present)


def test_observe_masks_entries_outside_scope():
    env = create_env(EnvSpec(), seed=3)
    _enable(env, 0)

    state = observe(env, Scope(1, frozenset({factor(0), result(0)})))

    assert state.value(factor(0)) is True
    assert state.value(result(0)) is True
    # unobserved is reported as None, not as disabled
    assert state.value(factor(1)) is None
    assert state.value(result(1)) is None
    assert state.observed_identifiers() == [factor(0), result(0)]


def test_observe_rejects_unknown_identifier():
    env = create_env(EnvSpec(), seed=3)

    with pytest.raises(ScopeError):
        observe(env, Scope(1, frozenset({factor(98)})))


def test_observe_does_not_mutate():
    env = create_env(EnvSpec(), seed=3)
    drift_step(env)

    first = observe(env, env.full_scope())
    second = observe(env, env.full_scope())

    assert first == second
    assert env.time == 1


def test_enabling_effective_factor_produces_its_result():
    env = create_env(EnvSpec(), seed=0)

    state = _enable(env, 1)

    assert state.time == 1
    assert state.results_present == (False, True, False)


def test_disturbing_factors_never_produce_results():
    env = create_env(EnvSpec(num_effective=3, num_disturbing=4), seed=0)

    for index in range(3, 7):
        state = _enable(env, index)
        assert state.results_present == (False, False, False)


def test_unknown_factor_toggle_is_rejected():
    env = create_env(EnvSpec(), seed=0)

    with pytest.raises(InterventionError):
        _enable(env, 7)


def test_causation_delay_holds_result_back():
    env = create_env(EnvSpec(causation_delay=2), seed=0)

    assert _enable(env, 0).value(result(0)) is False
    assert advance(env).value(result(0)) is False
    assert advance(env).value(result(0)) is True


def test_drift_flips_only_on_interval_multiples():
    env = create_env(EnvSpec(drift_interval=3, drift_toggle_count=1), seed=11)
    initial = env.state().factor_states

    drift_step(env)
    assert env.last_drifted == ()
    drift_step(env)
    assert env.last_drifted == ()
    assert env.state().factor_states == initial

    state = drift_step(env)
    assert len(env.last_drifted) == 1
    changed = [i for i, (a, b) in enumerate(zip(initial, state.factor_states)) if a != b]
    assert changed == list(env.last_drifted)


def test_drift_with_every_factor_flips_everything():
    spec = EnvSpec(num_effective=3, num_disturbing=4, drift_toggle_count=7)
    env = create_env(spec, seed=5)

    before = env.state().factor_states
    after = drift_step(env).factor_states

    assert after == tuple(not v for v in before)


def test_results_track_factors_under_drift():
    env = create_env(EnvSpec(), seed=9)

    for _ in range(100):
        state = drift_step(env)
        assert state.results_present == state.factor_states[:3]


def test_custom_result_map_and_ground_truth():
    env = create_env(EnvSpec(result_map={0: 2, 1: 0, 2: 1}), seed=0)

    state = _enable(env, 0)

    assert state.results_present == (False, False, True)
    assert ground_truth(env, result(2)) == 0
    assert ground_truth(env, result(0)) == 1


def test_ground_truth_default_map():
    env = create_env(EnvSpec(), seed=0)

    assert ground_truth(env, result(1)) == 1
    for k in range(env.spec.num_results):
        assert ground_truth(env, result(k)) < env.spec.num_effective
    with pytest.raises(UnknownIdentifierError):
        ground_truth(env, result(8))
    with pytest.raises(UnknownIdentifierError):
        ground_truth(env, factor(1))


def test_randomize_factors_keeps_time_and_causation():
    env = create_env(EnvSpec(), seed=3)

    state = randomize_factors(env, 0.5)

    assert state.time == 0
    assert state.results_present == state.factor_states[:3]
    assert randomize_factors(env, 1.0).factor_states == (True,) * 7
    with pytest.raises(ConfigurationError):
        randomize_factors(env, 2.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
