from typing import List, Tuple, Union

import numpy as np

from shared_code.exceptions import (
    ConfigurationError,
    InterventionError,
    UnknownIdentifierError,
)
from shared_code.models import (
    RESULT,
    IDLE_PLAN,
    ActionPlan,
    EnvSpec,
    EnvState,
    Ident,
    Scope,
    factor,
    result,
)
from telegram_logging_handler import app_logger


class Environment:
    """Seeded factor -> result simulator.

    Effective factors occupy indices 0..num_effective-1, disturbing factors the
    rest. Result k is present at step t iff its mapped factor was enabled at
    step t - causation_delay.
    """

    def __init__(self, spec: EnvSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.time = 0
        self._factor_history: List[Tuple[bool, ...]] = [(False,) * spec.num_factors]
        self._inverse_map = {r: f for f, r in spec.result_map.items()}
        self.last_drifted: Tuple[int, ...] = ()

    @property
    def factors(self) -> Tuple[bool, ...]:
        return self._factor_history[-1]

    def results(self) -> Tuple[bool, ...]:
        source_time = self.time - self.spec.causation_delay
        if source_time < 0:
            return (False,) * self.spec.num_results
        source = self._factor_history[source_time]
        return tuple(source[self._inverse_map[k]] for k in range(self.spec.num_results))

    def state(self) -> EnvState:
        return EnvState(time=self.time, factor_states=self.factors, results_present=self.results())

    def full_scope(self, temporal_window: int = 1) -> Scope:
        return Scope(temporal_window=temporal_window, spatial_set=self.spec.all_ids())

    def _step(self, new_factors: Tuple[bool, ...]) -> EnvState:
        self.time += 1
        self._factor_history.append(new_factors)
        return self.state()


def create_env(spec: EnvSpec, seed: int) -> Environment:
    spec.validate()
    app_logger.debug(
        f"Creating environment: {spec.num_effective} effective, {spec.num_disturbing} disturbing, "
        f"delay={spec.causation_delay}, seed={seed}"
    )
    return Environment(spec, seed)


def randomize_factors(env: Environment, enable_prob: float = 0.5) -> EnvState:
    """Scramble the current factor states in place without advancing time"""
    if not 0.0 <= enable_prob <= 1.0:
        raise ConfigurationError("enable_prob must lie in [0, 1]")
    draws = env.rng.random(env.spec.num_factors) < enable_prob
    env._factor_history[-1] = tuple(bool(v) for v in draws)
    return env.state()


def observe(env: Environment, scope: Scope) -> EnvState:
    scope.validate(env.spec.all_ids())
    full = env.state()
    factor_states = tuple(
        value if factor(i) in scope.spatial_set else None
        for i, value in enumerate(full.factor_states)
    )
    results_present = tuple(
        value if result(k) in scope.spatial_set else None
        for k, value in enumerate(full.results_present)
    )
    return EnvState(time=full.time, factor_states=factor_states, results_present=results_present)


def apply_intervention(env: Environment, plan: ActionPlan) -> EnvState:
    new_factors = list(env.factors)
    for toggle in plan.toggles:
        if not 0 <= toggle.factor < env.spec.num_factors:
            raise InterventionError(f"Unknown factor index {toggle.factor}")
        new_factors[toggle.factor] = bool(toggle.enable)
    env.last_drifted = ()
    return env._step(tuple(new_factors))


def advance(env: Environment) -> EnvState:
    """One idle step: no toggles and no drift"""
    return apply_intervention(env, IDLE_PLAN)


def drift_step(env: Environment) -> EnvState:
    new_factors = list(env.factors)
    next_time = env.time + 1
    drifted: Tuple[int, ...] = ()
    if next_time % env.spec.drift_interval == 0 and env.spec.drift_toggle_count > 0:
        chosen = env.rng.choice(
            env.spec.num_factors, size=env.spec.drift_toggle_count, replace=False
        )
        drifted = tuple(sorted(int(i) for i in chosen))
        for i in drifted:
            new_factors[i] = not new_factors[i]
        app_logger.debug(f"Drift at step {next_time}: flipped {[str(factor(i)) for i in drifted]}")
    env.last_drifted = drifted
    return env._step(tuple(new_factors))


def ground_truth(env: Environment, result_id: Union[Ident, int]) -> int:
    """Effective factor index mapped to result_id. Harness use only"""
    if isinstance(result_id, Ident):
        if result_id.kind != RESULT:
            raise UnknownIdentifierError(f"{result_id} is not a result identifier")
        index = result_id.index
    else:
        index = int(result_id)
    if index not in env._inverse_map:
        raise UnknownIdentifierError(f"Unknown result r{index + 1}")
    return env._inverse_map[index]
