"""
Configuration document: dataclass defaults, JSON loading and validation.

Precedence, highest first: command-line flags, --config FILE,
$TCSIM_CONFIG, built-in defaults.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Type, TypeVar

from tcsim import __version__
from tcsim.errors import ConfigError
from tcsim.fence import FenceConfig, FenceStep, parse_variant, worst_case_raw_cycles
from tcsim.kernel import Component, parse_component
from tcsim.leakage import DEFAULT_CONFIDENCE, DEFAULT_TRIALS
from tcsim.overhead import DEFAULT_SCALE, DEFAULT_SLICE, DEFAULT_SLICES, WorkloadKind, parse_workload_kind
from tcsim.uarch.state import UarchConfig

logger = logging.getLogger(__name__)

CONFIG_ENV = "TCSIM_CONFIG"
TOOL_MAJOR = int(__version__.split(".")[0])

T = TypeVar("T")


@dataclass(frozen=True)
class BenchSettings:
    component: Component = Component.L1D
    secret_count: int = 0
    samples_per_secret: int = 1000
    noise_cycles: int = 0
    observe_switch: bool = False
    workers: int = 1
    bucket_width: int = 0


@dataclass(frozen=True)
class LeakageSettings:
    trials: int = DEFAULT_TRIALS
    confidence: float = DEFAULT_CONFIDENCE

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 0 < self.confidence <= 1:
            raise ConfigError(f"confidence must be in (0, 1], got {self.confidence}")


@dataclass(frozen=True)
class OverheadSettings:
    workload: WorkloadKind = WorkloadKind.MIXED
    working_set: Optional[int] = None
    slice_cycles: int = DEFAULT_SLICE
    total_slices: int = DEFAULT_SLICES
    scale: int = DEFAULT_SCALE
    fence_every: int = 1


@dataclass(frozen=True)
class Config:
    """Everything a command needs; every section has working defaults."""

    uarch: UarchConfig = field(default_factory=UarchConfig)
    fence: FenceConfig = field(default_factory=FenceConfig)
    bench: BenchSettings = field(default_factory=BenchSettings)
    leakage: LeakageSettings = field(default_factory=LeakageSettings)
    overhead: OverheadSettings = field(default_factory=OverheadSettings)
    seed: Optional[int] = None

    def validate(self) -> "Config":
        """
        Check cross-section constraints.

        Raises:
            ConfigError: When the worst-case fence would overrun the pad
        """
        bound = worst_case_raw_cycles(self.fence, self.uarch)
        logger.debug("worst-case fence %d cycles, pad target %d", bound, self.fence.pad_target)
        return self


# Fields whose JSON form is a string or list rather than the Python value.
FIELD_PARSERS: Dict[str, Callable[[Any], Any]] = {
    "fence.variant": parse_variant,
    "fence.steps": lambda names: tuple(_parse_step(name) for name in names),
    "bench.component": parse_component,
    "overhead.workload": parse_workload_kind,
}


def _parse_step(name: Any) -> FenceStep:
    try:
        return FenceStep(name)
    except ValueError:
        choices = ", ".join(step.value for step in FenceStep)
        raise ConfigError(f"unknown fence step {name!r}; choose from {choices}") from None


def _build(cls: Type[T], data: Any, path: str) -> T:
    """Build a dataclass from a JSON object, recursing into nested dataclasses."""
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path} must be an object")
    known = {item.name: item for item in dataclasses.fields(cls)}
    values: Dict[str, Any] = {}
    for key, raw in data.items():
        dotted = f"{path}.{key}"
        if key not in known:
            raise ConfigError(f"unknown configuration key {dotted}")
        target = known[key].type
        if dotted in FIELD_PARSERS:
            values[key] = FIELD_PARSERS[dotted](raw)
        elif dataclasses.is_dataclass(target):
            values[key] = _build(target, raw, dotted)
        else:
            values[key] = raw
    try:
        return cls(**values)
    except TypeError as error:
        raise ConfigError(f"{path}: {error}") from None


def _check_version(version: Any) -> None:
    if version is None:
        raise ConfigError("configuration is missing its version field")
    try:
        major = int(str(version).split(".")[0])
    except ValueError:
        raise ConfigError(f"unreadable configuration version {version!r}") from None
    if major != TOOL_MAJOR:
        raise ConfigError(f"configuration version {version} does not match tool major version {TOOL_MAJOR}")


def config_from_dict(document: Any) -> Config:
    """
    Turn a parsed JSON document into a validated Config.

    Raises:
        ConfigError: On unknown keys, a version mismatch or invalid values
    """
    if not isinstance(document, Mapping):
        raise ConfigError("configuration must be a JSON object")
    document = dict(document)
    _check_version(document.pop("version", None))

    sections: Dict[str, Any] = {}
    known = {item.name: item for item in dataclasses.fields(Config)}
    for key, raw in document.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key {key}")
        if key == "seed":
            if raw is not None and (not isinstance(raw, int) or isinstance(raw, bool) or raw < 0):
                raise ConfigError(f"seed must be a non-negative integer, got {raw!r}")
            sections[key] = raw
        else:
            sections[key] = _build(known[key].type, raw, key)
    return Config(**sections).validate()


def load_config(path: Optional[str] = None) -> Config:
    """
    Load the configuration file named by path or $TCSIM_CONFIG.

    Returns built-in defaults when neither is set.
    """
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config().validate()
    try:
        with open(path, encoding="utf-8") as stream:
            document = json.load(stream)
    except OSError as error:
        raise ConfigError(f"cannot read configuration {path}: {error.strerror}") from None
    except json.JSONDecodeError as error:
        raise ConfigError(f"{path}: invalid JSON at line {error.lineno}: {error.msg}") from None
    logger.info("loaded configuration from %s", path)
    return config_from_dict(document)
