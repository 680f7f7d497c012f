"""Pipeline configuration: key=value files, CLI overrides and stage seeds."""

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional, get_args, get_origin, Union

from .dataset import DEFAULT_K, DEFAULT_STEP, DEFAULT_WINDOW
from .errors import ConfigError
from .rng import derive_seed
from .session import SCENARIOS

# run order; manifest.json lists the stages that ran in this order
STAGES = (
    "select",
    "gen",
    "real",
    "split",
    "train",
    "eval",
    "importance",
    "coverage",
    "sessions-eval",
    "filters",
)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything run_pipeline needs. seed is required."""

    scenario: str
    seed: int
    iterations: int = 1000  # per mode
    real_iterations: int = 200
    plan_file: Optional[str] = None  # None selects fields automatically
    trials: int = 500
    threshold: float = 0.5
    window: int = DEFAULT_WINDOW
    step: int = DEFAULT_STEP
    k: int = DEFAULT_K
    family: Optional[str] = None
    epochs: int = 300
    learning_rate: float = 0.05
    batch_size: int = 64
    ratio: float = 0.8
    repeats: int = 10
    include_responses: bool = False
    workers: int = 1
    out_dir: str = "artifacts"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        for name in ("iterations", "real_iterations", "trials", "window", "step", "k", "epochs",
                     "batch_size", "repeats", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 < self.ratio < 1 or not 0 <= self.threshold < 1:
            raise ConfigError("ratio must be in (0, 1) and threshold in [0, 1)")

    def stage_seed(self, stage: str) -> int:
        return stage_seed(self.seed, stage)


def stage_seed(seed: int, stage: str) -> int:
    """Seed of one pipeline stage, derived from the global seed."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}, expected one of {', '.join(STAGES)}")
    return derive_seed(seed, "stage", stage)


def _field_type(name: str):
    for f in fields(PipelineConfig):
        if f.name == name:
            tp = f.type
            if get_origin(tp) is Union:
                tp = next(a for a in get_args(tp) if a is not type(None))
            return tp
    raise ConfigError(f"unknown config key {name!r}")


def _parse(name: str, text: str) -> Any:
    tp = _field_type(name)
    if text.lower() in ("", "none") and tp is str and name in ("plan_file", "family"):
        return None
    try:
        if tp is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return tp(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def read_config_file(path: Path) -> dict[str, Any]:
    """Parse a flat key=value file. '#' starts a comment line.

    Raises:
        ConfigError: malformed line or unknown key
    """
    values: dict[str, Any] = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{number}: expected key=value")
        key = key.strip().replace("-", "_")
        values[key] = _parse(key, value.strip())
    return values


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """File values first, then overrides that are not None."""
    values = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            _field_type(key)
            values[key] = value
    missing = [k for k in ("scenario", "seed") if k not in values]
    if missing:
        raise ConfigError(f"missing required config: {', '.join(missing)}")
    return PipelineConfig(**values)
