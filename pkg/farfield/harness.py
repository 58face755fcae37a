import itertools
import json
import logging
import os
import tempfile
import time

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl

from polars import DataFrame

import farfield.names as names

from farfield.config import OUTPUT_ROOT_VARIABLE, ExperimentConfig, config_from_dict, read_config_file, sweep_grid
from farfield.errors import (
    DiagnosticFailure,
    ExtractionError,
    InconclusiveResult,
    MissingBaseline,
    RejectedConfiguration,
    RejectedInput,
    SolverNonConvergence,
)
from farfield.fundamental import case_label
from farfield.scenarios import ScenarioResult, get_scenario

_logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
TIMINGS_FILE = "timings.json"
# Keys that vary between identical runs and stay out of the summary.
TIMING_KEYS = {names.WALL_MS}
DEFAULT_RELATIVE = 1e-6
DEFAULT_ABSOLUTE = 1e-9

DOMAIN_ERRORS = (
    RejectedInput,
    RejectedConfiguration,
    SolverNonConvergence,
    ExtractionError,
    DiagnosticFailure,
    InconclusiveResult,
)


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    """
    Reads a TOML experiment file and fills omitted keys from its scenario's defaults.

    Args:
        path: The TOML file.
        overrides: Top-level values (``seed``, ``output``) replacing the file's.

    Returns:
        The resolved config.
    """
    data = read_config_file(path)
    data.update({key: value for key, value in overrides.items() if value is not None})
    return resolve_config(data)


def resolve_config(data: dict) -> ExperimentConfig:
    if "scenario" not in data:
        raise RejectedConfiguration("Invalid config: no scenario")
    return config_from_dict(data, get_scenario(str(data["scenario"])).defaults)


def _jsonable(value):
    match value:
        case dict():
            return {str(key): _jsonable(item) for key, item in value.items()}
        case list() | tuple():
            return [_jsonable(item) for item in value]
        case np.ndarray():
            return _jsonable(value.tolist())
        case np.bool_():
            return bool(value)
        case np.integer():
            return int(value)
        case float() | np.floating():
            if np.isfinite(value):
                return float(value)
            return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
        case _:
            return value


def _split_timings(value, path: str = "") -> tuple[object, dict[str, float]]:
    """
    Returns:
        The value without timing keys, and the removed timings keyed by their dotted path.
    """
    timings = {}
    match value:
        case dict():
            kept = {}
            for key, item in value.items():
                where = f"{path}.{key}" if path else str(key)
                if key in TIMING_KEYS:
                    timings[where] = item
                    continue
                kept[key], nested = _split_timings(item, where)
                timings.update(nested)
            return kept, timings
        case list():
            kept = []
            for index, item in enumerate(value):
                item, nested = _split_timings(item, f"{path}.{index}")
                kept.append(item)
                timings.update(nested)
            return kept, timings
        case _:
            return value, timings


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8") as stream:
            stream.write(text)
        os.replace(temporary, path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise


def write_json(path: Path, payload):
    _write_atomic(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_table(path: Path, table: DataFrame, name: str):
    _write_atomic(path, names.schema_header(name) + "\n" + table.write_csv())


def read_table(path: Path) -> DataFrame:
    return pl.read_csv(path, comment_prefix="#")


def output_root(config: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_VARIABLE) or config.output)


@dataclass
class ResultBundle:
    """
    One run on disk: ``summary.json`` with the config, values and flags, one CSV per table and
    ``timings.json``. The directory is named after the scenario and the config hash.
    """

    scenario: str
    config_hash: str
    directory: Path
    flags: dict[str, bool] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    files: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and bool(self.flags) and all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            names.SCENARIO: self.scenario,
            names.CONFIG_HASH: self.config_hash,
            "directory": str(self.directory),
            "flags": self.flags,
            "errors": self.errors,
            "files": self.files,
            names.PASSED: self.passed,
        }


def run(config: ExperimentConfig) -> ResultBundle:
    """
    Runs a scenario pipeline and writes its result bundle.

    Domain errors do not propagate: they become a failed ``completed`` flag and an error entry in
    the summary, so sweeps keep going.

    Args:
        config: The resolved experiment.

    Returns:
        The bundle describing what was written.
    """
    scenario = get_scenario(config.scenario)
    digest = config.config_hash()
    directory = output_root(config) / f"{config.scenario}-{digest[:12]}"
    _logger.info("Running %s (%s) into %s", config.scenario, digest[:12], directory)

    errors = []
    start = time.perf_counter()
    try:
        result = scenario.pipeline(config)
        flags = {"completed": True, **{key: bool(value) for key, value in result.flags.items()}}
    except DOMAIN_ERRORS as error:
        _logger.error("Scenario %s failed: %s: %s", config.scenario, type(error).__name__, error)
        result = ScenarioResult()
        flags = {"completed": False}
        errors.append(f"{type(error).__name__}: {error}")
    wall_ms = (time.perf_counter() - start) * 1000.0

    values, timings = _split_timings(_jsonable(result.values))
    bundle = ResultBundle(config.scenario, digest, directory, flags, errors)
    write_json(
        directory / SUMMARY_FILE,
        {
            "schema_version": names.SCHEMA_VERSION,
            names.SCENARIO: config.scenario,
            names.CONFIG_HASH: digest,
            "config": {key: value for key, value in config.to_dict().items() if key != "output"},
            "values": values,
            "flags": flags,
            "errors": errors,
            names.PASSED: bundle.passed,
        },
    )
    bundle.files.append(SUMMARY_FILE)
    for name, table in result.tables.items():
        write_table(directory / f"{name}.csv", table, name)
        bundle.files.append(f"{name}.csv")
    write_json(directory / TIMINGS_FILE, {names.WALL_MS: wall_ms, "steps": timings})
    bundle.files.append(TIMINGS_FILE)
    _logger.info("%s %s in %.0f ms", config.scenario, "passed" if bundle.passed else "failed", wall_ms)
    return bundle


def sweep_configs(base: ExperimentConfig, grid: dict[str, list]) -> list[tuple[dict, ExperimentConfig]]:
    """
    Returns:
        One (parameters, config) pair per point of the Cartesian product of ``grid``.
    """
    if not grid or any(len(values) == 0 for values in grid.values()):
        raise RejectedInput(f"Invalid sweep grid: {grid}")
    keys = list(grid)
    points = []
    for combination in itertools.product(*(grid[key] for key in keys)):
        parameters = dict(zip(keys, combination))
        config = base
        for key, value in parameters.items():
            config = config.with_value(key, value)
        points.append((parameters, config))
    return points


def _sweep_row(parameters: dict, config: ExperimentConfig) -> dict:
    bundle = run(config)
    try:
        case = case_label(config.operator_spec().ellipticity)
    except RejectedConfiguration:
        case = None
    return {
        **{key: str(value) for key, value in parameters.items()},
        names.CASE: case,
        names.CONFIG_HASH: bundle.config_hash,
        names.PASSED: bundle.passed,
        names.ERROR: "; ".join(bundle.errors) or None,
    }


def sweep(base: ExperimentConfig, grid: dict[str, list], jobs: int = 1) -> DataFrame:
    """
    Runs the base experiment at every point of a parameter grid.

    Args:
        base: The experiment whose parameters get overridden.
        grid: Dotted parameter paths (``operator.Lambda``) mapped to value lists.
        jobs: Worker processes; 1 runs in-process.

    Returns:
        Summary table with one row per run, also written as ``sweep-<hash>.csv`` under the output root.
    """
    if jobs < 1:
        raise RejectedInput(f"Invalid job count: {jobs}")
    points = sweep_configs(base, grid)
    _logger.info("Sweeping %s over %d points with %d jobs", base.scenario, len(points), jobs)
    parameters, configs = zip(*points)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            rows = list(executor.map(_sweep_row, parameters, configs))
    else:
        rows = [_sweep_row(p, c) for p, c in points]
    summary = DataFrame(rows)
    write_table(output_root(base) / f"sweep-{base.config_hash()[:12]}.csv", summary, "sweep")
    return summary


def load_sweep(path: str | Path, **overrides) -> tuple[ExperimentConfig, dict[str, list]]:
    data = read_config_file(path)
    data.update({key: value for key, value in overrides.items() if value is not None})
    return resolve_config(data), sweep_grid(data)


@dataclass(frozen=True)
class Mismatch:
    field: str
    expected: object
    actual: object

    def to_dict(self) -> dict:
        return {"field": self.field, "expected": self.expected, "actual": self.actual}


@dataclass(frozen=True)
class VerifyReport:
    compared: int
    mismatches: tuple[Mismatch, ...]

    @property
    def passed(self) -> bool:
        return not self.mismatches


def _flatten(value, path: str = "") -> dict[str, object]:
    match value:
        case dict():
            leaves = {}
            for key, item in value.items():
                leaves.update(_flatten(item, f"{path}.{key}" if path else str(key)))
            return leaves
        case list():
            leaves = {}
            for index, item in enumerate(value):
                leaves.update(_flatten(item, f"{path}.{index}"))
            return leaves
        case _:
            return {path: value}


def _tolerance_for(key: str, tolerances: dict[str, tuple[float, float]]) -> tuple[float, float]:
    for prefix, tolerance in tolerances.items():
        if not prefix or key == prefix or key.startswith(prefix + "."):
            return tolerance
    return DEFAULT_RELATIVE, DEFAULT_ABSOLUTE


def _matches(expected, actual, relative: float, absolute: float) -> bool:
    numeric = (int, float)
    if isinstance(expected, numeric) and isinstance(actual, numeric) and not isinstance(expected, bool):
        return abs(expected - actual) <= absolute + relative * abs(expected)
    return expected == actual


def _compare(expected: dict, actual: dict, tolerances: dict, prefix: str) -> tuple[int, list[Mismatch]]:
    mismatches = []
    for key in sorted(set(expected) | set(actual)):
        if key.split(".")[-1] in TIMING_KEYS:
            continue
        where = f"{prefix}:{key}"
        if key not in expected or key not in actual:
            mismatches.append(Mismatch(where, expected.get(key), actual.get(key)))
            continue
        relative, absolute = _tolerance_for(key, tolerances)
        if not _matches(expected[key], actual[key], relative, absolute):
            mismatches.append(Mismatch(where, expected[key], actual[key]))
    return len(set(expected) | set(actual)), mismatches


def _table_leaves(path: Path) -> dict[str, object]:
    table = read_table(path)
    return {f"{column}.{row}": value for column in table.columns for row, value in enumerate(table[column].to_list())}


def verify(bundle: str | Path, golden: str | Path, tolerances: dict[str, tuple[float, float]] | None = None) -> VerifyReport:
    """
    Compares a result bundle with a golden bundle, field by field.

    Numeric leaves match when |expected − actual| ≤ abs + rel·|expected|; the default is
    rel 1e−6, abs 1e−9, and ``tolerances`` maps dotted field prefixes to their own (rel, abs).
    Wall-clock timings are never compared.

    Raises:
        MissingBaseline: if the golden bundle has no summary.
    """
    bundle, golden = Path(bundle), Path(golden)
    tolerances = tolerances or {}
    if not (golden / SUMMARY_FILE).is_file():
        raise MissingBaseline(f"Missing golden summary: {golden / SUMMARY_FILE}")
    if not (bundle / SUMMARY_FILE).is_file():
        raise RejectedInput(f"Invalid bundle: {bundle / SUMMARY_FILE} not found")

    expected = _flatten(json.loads((golden / SUMMARY_FILE).read_text(encoding="utf-8")))
    actual = _flatten(json.loads((bundle / SUMMARY_FILE).read_text(encoding="utf-8")))
    compared, mismatches = _compare(expected, actual, tolerances, SUMMARY_FILE)
    for table in sorted(golden.glob("*.csv")):
        counterpart = bundle / table.name
        if not counterpart.is_file():
            mismatches.append(Mismatch(table.name, "present", "missing"))
            continue
        count, found = _compare(_table_leaves(table), _table_leaves(counterpart), tolerances, table.name)
        compared += count
        mismatches.extend(found)
    for mismatch in mismatches:
        _logger.warning("Mismatch in %s: expected %s, got %s", mismatch.field, mismatch.expected, mismatch.actual)
    return VerifyReport(compared, tuple(mismatches))
