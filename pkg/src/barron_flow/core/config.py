"""
Run configuration and user defaults.
Defaults live in ~/.config/barron-flow/config.json; the output directory can
also come from the BARRON_FLOW_OUTPUT_DIR environment variable.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "BARRON_FLOW_OUTPUT_DIR"

ORACLES = ("galerkin", "fd", "none")
ACTIVATIONS = ("cosine", "relu", "both")


@dataclass
class RunConfig:
    """Settings of one CLI run."""

    command: str
    problem: str
    eps: float
    seed: int
    k: Optional[int]  # network width; None means the computed budget
    m: Optional[int]  # ReLU interpolation pieces; None means ceil(sqrt(k))
    trials: int
    alpha: Optional[float]  # step-size override
    prune_tol: float
    oracle: str
    out_dir: str
    activation: str
    workers: Optional[int]
    samples: int  # ellipticity audit points
    max_steps: Optional[int]
    early_stop: bool
    galerkin_tol: float
    max_unknowns: int
    fd_grid: int
    pdf: bool

    @classmethod
    def default(cls) -> "RunConfig":
        """Create default configuration."""
        return cls(
            command="solve",
            problem="single_mode_d1",
            eps=0.05,
            seed=0,
            k=None,
            m=None,
            trials=8,
            alpha=None,
            prune_tol=1e-14,
            oracle="galerkin",
            out_dir="barron-flow-output",
            activation="cosine",
            workers=None,
            samples=10_000,
            max_steps=None,
            early_stop=True,
            galerkin_tol=1e-10,
            max_unknowns=20_000,
            fd_grid=256,
            pdf=False,
        )

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Copy with every non-None override applied; unknown keys are ignored."""
        names = {f.name for f in fields(self)}
        return replace(self, **{key: value for key, value in overrides.items() if key in names and value is not None})

    @property
    def output_path(self) -> Path:
        return Path(self.out_dir)


class ConfigManager:
    """Loads and saves user defaults for :class:`RunConfig`."""

    def __init__(self, config_dir: Optional[Path] = None):
        self.config_dir = config_dir or Path.home() / ".config" / "barron-flow"
        self.config_file = self.config_dir / "config.json"
        self.config = self.load_config()

    def ensure_config_dir(self) -> None:
        self.config_dir.mkdir(parents=True, exist_ok=True)

    def load_config(self) -> RunConfig:
        """Load configuration from file, merging with defaults key by key.

        Unknown keys in the saved file are dropped and missing keys fall back
        to defaults. The output directory environment variable overrides the
        file.
        """
        config = self._load_file()
        env_dir = os.environ.get(OUTPUT_DIR_ENV)
        if env_dir:
            logger.debug("Output directory from %s: %s", OUTPUT_DIR_ENV, env_dir)
            config = replace(config, out_dir=env_dir)
        return config

    def _load_file(self) -> RunConfig:
        if not self.config_file.exists():
            logger.debug("Config file %s doesn't exist, using default", self.config_file)
            return RunConfig.default()

        try:
            with open(self.config_file, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning("Error loading config: %s, using default", e)
            return RunConfig.default()

        if not isinstance(data, dict):
            logger.warning("Config root is not an object, using default")
            return RunConfig.default()

        defaults = asdict(RunConfig.default())
        merged = {key: data.get(key, defaults[key]) for key in defaults}
        try:
            return RunConfig(**merged)
        except TypeError as e:
            logger.warning("Config shape mismatch (%s), using default", e)
            return RunConfig.default()

    def save_config(self, config: Optional[RunConfig] = None) -> None:
        """Save defaults to file; failures are logged, not raised."""
        data: Dict[str, Any] = asdict(config or self.config)
        try:
            self.ensure_config_dir()
            logger.debug("Saving config to %s", self.config_file)
            with open(self.config_file, "w") as f:
                json.dump(data, f, indent=2)
        except OSError as e:
            logger.error("Failed to save configuration: %s", e)
