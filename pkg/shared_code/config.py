import configparser
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from shared_code.difference import DegreeWeights
from shared_code.exceptions import ConfigurationError
from shared_code.intervention import UtilityWeights
from shared_code.models import FACTOR, RESULT, EnvSpec, Ident, Strategy, parse_ident
from telegram_logging_handler import app_logger

SECTION = "experiment"
BACKENDS = ("oracle", "remote")


@dataclass(frozen=True)
class ExperimentConfig:
    # environment
    num_effective: int = 3
    num_disturbing: int = 4
    result_map: Optional[Dict[int, int]] = None
    drift_interval: int = 1
    drift_toggle_count: int = 1
    causation_delay: int = 0
    max_steps: int = 200
    initial_enable_prob: float = 0.5

    # experiment
    target_result: str = "r2"
    num_trials: int = 100
    master_seed: int = 20240601
    strategies: Tuple[str, ...] = (Strategy.ACTIVE.value, Strategy.OBSERVER.value)
    max_queries_per_trial: int = 50
    jobs: int = 0

    # intervention selection
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 0.5
    samples_per_plan: int = 1
    plan_budget: int = 1
    self_cost_budget: int = 5

    # difference degree and screening
    w_magnitude: float = 1.0
    w_frequency: float = 1.0
    w_persistence: float = 1.0
    theta_significant: float = 0.5
    theta_abnormal: float = 1.5
    theta_screen: float = 0.5
    repeat_threshold: int = 2
    temporal_window: int = 10

    # memory
    epsilon: float = 0.05
    min_support: int = 10
    movability_threshold: int = 2
    memory_dir: Optional[str] = None

    # reasoner backend
    backend: str = "oracle"
    llm_model: str = "deepseek-r1:70b"
    llm_retries: int = 3
    llm_timeout: float = 60.0

    def env_spec(self) -> EnvSpec:
        return EnvSpec(
            num_effective=self.num_effective,
            num_disturbing=self.num_disturbing,
            result_map=dict(self.result_map) if self.result_map is not None else None,
            drift_interval=self.drift_interval,
            drift_toggle_count=self.drift_toggle_count,
            causation_delay=self.causation_delay,
            max_steps=self.max_steps,
        )

    def target(self) -> Ident:
        return parse_ident(self.target_result)

    def utility_weights(self) -> UtilityWeights:
        return UtilityWeights(self.alpha, self.beta, self.gamma)

    def degree_weights(self) -> DegreeWeights:
        return DegreeWeights(
            self.w_magnitude,
            self.w_frequency,
            self.w_persistence,
            self.theta_significant,
            self.theta_abnormal,
        )

    def strategy_list(self) -> Tuple[Strategy, ...]:
        return tuple(Strategy(s) for s in self.strategies)

    def worker_count(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def validate(self) -> "ExperimentConfig":
        self.env_spec().validate()
        target = self.target()
        if target.kind != RESULT or target.index >= self.num_effective:
            raise ConfigurationError(f"target_result {self.target_result} is not a result of this environment")
        # a single trial is runnable; summarize() rejects it when the report is built
        if self.num_trials < 1:
            raise ConfigurationError("num_trials must be positive")
        if self.max_queries_per_trial < 1:
            raise ConfigurationError("max_queries_per_trial must be positive")
        if not self.strategies:
            raise ConfigurationError("At least one strategy is required")
        for name in self.strategies:
            if name not in {s.value for s in Strategy}:
                raise ConfigurationError(f"Unknown strategy: {name}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"backend must be one of {', '.join(BACKENDS)}")
        if self.jobs < 0:
            raise ConfigurationError("jobs must be nonnegative")
        if min(self.samples_per_plan, self.plan_budget, self.temporal_window, self.repeat_threshold) < 1:
            raise ConfigurationError("samples_per_plan, plan_budget, temporal_window and repeat_threshold must be positive")
        if self.self_cost_budget < 0:
            raise ConfigurationError("self_cost_budget must be nonnegative")
        if not 0.0 <= self.initial_enable_prob <= 1.0:
            raise ConfigurationError("initial_enable_prob must lie in [0, 1]")
        if not -1.0 <= self.theta_screen <= 1.0:
            raise ConfigurationError("theta_screen must lie in [-1, 1]")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError("epsilon must lie in (0, 1)")
        if self.min_support < 0 or self.movability_threshold < 2:
            raise ConfigurationError("min_support must be nonnegative and movability_threshold at least 2")
        if self.llm_retries < 0 or self.llm_timeout <= 0:
            raise ConfigurationError("llm_retries must be nonnegative and llm_timeout positive")
        try:
            self.utility_weights().validate()
            self.degree_weights().validate()
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        return self


def _parse_int(value: str) -> int:
    return int(value.strip())


def _parse_strategies(value: str) -> Tuple[str, ...]:
    return tuple(part.strip().lower() for part in value.split(",") if part.strip())


def _parse_result_map(value: str) -> Optional[Dict[int, int]]:
    """'f1:r2, f2:r1, f3:r3' -> {0: 1, 1: 0, 2: 2}"""
    if not value.strip():
        return None
    mapping = {}
    for pair in value.split(","):
        try:
            left, right = pair.split(":")
        except ValueError:
            raise ConfigurationError(f"Invalid result_map entry: {pair.strip()!r}")
        f, r = parse_ident(left), parse_ident(right)
        if f.kind != FACTOR or r.kind != RESULT:
            raise ConfigurationError(f"result_map entries look like f1:r1, got {pair.strip()!r}")
        mapping[f.index] = r.index
    return mapping


def _parse_optional_str(value: str) -> Optional[str]:
    value = value.strip()
    return value or None


_PARSERS = {
    int: _parse_int,
    float: lambda v: float(v.strip()),
    str: lambda v: v.strip(),
}
_SPECIAL_PARSERS = {
    "strategies": _parse_strategies,
    "result_map": _parse_result_map,
    "memory_dir": _parse_optional_str,
    "backend": lambda v: v.strip().lower(),
}


def _convert(name: str, raw: str, default: Any) -> Any:
    parser = _SPECIAL_PARSERS.get(name) or _PARSERS.get(type(default))
    if parser is None:
        raise ConfigurationError(f"No parser for configuration key {name}")
    try:
        return parser(raw)
    except ConfigurationError:
        raise
    except ValueError as e:
        raise ConfigurationError(f"Invalid value for {name}: {raw!r}") from e


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        try:
            parser.read_string(text)
        except configparser.MissingSectionHeaderError:
            # flat key = value files are read as one section
            parser.read_string(f"[{SECTION}]\n{text}")
    except configparser.Error as e:
        raise ConfigurationError(f"Could not parse configuration: {e}") from e

    defaults = {f.name: f.default for f in fields(ExperimentConfig)}
    values: Dict[str, Any] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in defaults:
                raise ConfigurationError(f"Unknown configuration key: {key}")
            values[key] = _convert(key, raw, defaults[key])
    return ExperimentConfig(**values)


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    """Load a flat key = value experiment file; no path means all defaults"""
    if path is None:
        return ExperimentConfig().validate()
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigurationError(f"Config file not found: {config_path}") from e
    except OSError as e:
        raise ConfigurationError(f"Could not read config file {config_path}: {e}") from e
    config = parse_config_text(text).validate()
    app_logger.debug(f"Loaded configuration from {config_path}")
    return config


def apply_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Replace the fields given as keyword arguments; None means keep the file value"""
    changes = {k: v for k, v in overrides.items() if v is not None}
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(changes) - known
    if unknown:
        raise ConfigurationError(f"Unknown override(s): {', '.join(sorted(unknown))}")
    return replace(config, **changes).validate()
