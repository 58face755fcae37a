import hashlib
import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, asdict, field, replace
from pathlib import Path

import numpy as np

from farfield.asymptotics import ExtractionOptions
from farfield.errors import RejectedConfiguration
from farfield.operators import OperatorSpec, operator_from_dict
from farfield.solver import BallOptions

DEFAULT_OUTPUT = "results"
OUTPUT_ROOT_VARIABLE = "FARFIELD_OUTPUT_ROOT"

TOP_LEVEL_KEYS = {"scenario", "seed", "output", "operator", "grid", "extraction", "sweep"}
SECTION_KEYS = {
    "operator": {"kind", "lambda", "Lambda", "n", "controls", "orbit", "rhs"},
    "grid": {
        "r_out",
        "radial_nodes",
        "angular_nodes",
        "directions",
        "ball_radial_nodes",
        "ball_angular_nodes",
        "ball_spacing",
    },
    "extraction": {"schedule", "tolerance", "constraint_tolerance", "slack"},
}


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A fully resolved experiment: scenario defaults merged with the file's tables.
    """

    scenario: str
    seed: int = 0
    output: str = DEFAULT_OUTPUT
    operator: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    extraction: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """
        Returns:
            SHA-256 of the canonical JSON of the config, output location excluded.
        """
        payload = self.to_dict()
        payload.pop("output")
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()

    def with_value(self, path: str, value) -> "ExperimentConfig":
        """
        Returns:
            A copy with one dotted key (``seed`` or ``operator.Lambda``) replaced.
        """
        section, _, key = path.partition(".")
        if not key:
            if section not in ("seed", "output", "scenario"):
                raise RejectedConfiguration(f"Invalid parameter: {path}")
            return replace(self, **{section: value})
        if section not in SECTION_KEYS or key not in SECTION_KEYS[section]:
            raise RejectedConfiguration(f"Invalid parameter: {path}")
        return replace(self, **{section: {**getattr(self, section), key: value}})

    def operator_spec(self) -> OperatorSpec:
        block = {key: value for key, value in self.operator.items() if key != "rhs"}
        return operator_from_dict(block)

    @property
    def rhs(self) -> float:
        return float(self.operator.get("rhs", 0.0))

    @property
    def schedule(self) -> list[float]:
        return [float(radius) for radius in self.extraction["schedule"]]

    def ball_options(self) -> BallOptions:
        return BallOptions(
            radial_spacing=float(self.grid["ball_spacing"]),
            radial_nodes=int(self.grid["ball_radial_nodes"]),
            angular_nodes=int(self.grid["ball_angular_nodes"]),
            frames=int(self.grid["directions"]),
        )

    def extraction_options(self) -> ExtractionOptions:
        return ExtractionOptions(
            tolerance=float(self.extraction["tolerance"]),
            constraint_tolerance=float(self.extraction["constraint_tolerance"]),
            slack=float(self.extraction["slack"]),
            balls=self.ball_options(),
        )


def _check_keys(data: dict, allowed: set[str], where: str):
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise RejectedConfiguration(f"Invalid config keys in {where}: {unknown}")


def _validate(config: ExperimentConfig):
    extraction = config.extraction
    for key in ("tolerance", "constraint_tolerance"):
        if key in extraction and not float(extraction[key]) > 0:
            raise RejectedConfiguration(f"Invalid {key}: {extraction[key]}")
    schedule = extraction.get("schedule")
    if schedule is not None:
        radii = np.asarray(schedule, dtype=float)
        if radii.size == 0 or np.any(np.diff(radii) <= 0):
            raise RejectedConfiguration(f"Invalid schedule: {schedule}")
    if not isinstance(config.seed, int):
        raise RejectedConfiguration(f"Invalid seed: {config.seed}")


def config_from_dict(data: dict, defaults: dict | None = None) -> ExperimentConfig:
    """
    Builds a config from a parsed mapping, filling omitted keys from the scenario defaults.

    Args:
        data: Top-level mapping (as read from TOML).
        defaults: Scenario defaults with the same layout.

    Returns:
        The validated config.

    Raises:
        RejectedConfiguration: on unknown keys, a missing scenario name or invalid values.
    """
    _check_keys(data, TOP_LEVEL_KEYS, "the top level")
    for section, allowed in SECTION_KEYS.items():
        if not isinstance(data.get(section, {}), dict):
            raise RejectedConfiguration(f"Invalid config table: {section}")
        _check_keys(data.get(section, {}), allowed, f"[{section}]")
    if "scenario" not in data:
        raise RejectedConfiguration("Invalid config: no scenario")
    defaults = defaults or {}
    config = ExperimentConfig(
        scenario=str(data["scenario"]),
        seed=data.get("seed", defaults.get("seed", 0)),
        output=str(data.get("output", defaults.get("output", DEFAULT_OUTPUT))),
        **{section: {**defaults.get(section, {}), **data.get(section, {})} for section in SECTION_KEYS},
    )
    _validate(config)
    return config


def read_config_file(path: str | Path) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as error:
        raise RejectedConfiguration(f"Invalid config file {path}: {error}") from error


def sweep_grid(data: dict) -> dict[str, list]:
    """
    Returns:
        The ``[sweep]`` table: dotted parameter paths mapped to value lists.
    """
    grid = data.get("sweep", {})
    if not isinstance(grid, dict) or not all(isinstance(values, list) for values in grid.values()):
        raise RejectedConfiguration(f"Invalid sweep table: {grid}")
    return grid
