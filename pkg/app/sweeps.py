# app/sweeps.py
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .config import logger
from .errors import ConfigError
from .models import ScenarioConfig, TimeTagStream
from . import detection_sim


@dataclass
class SweepPoint:
    index: int
    value: Optional[float]
    config: ScenarioConfig
    stream: Optional[TimeTagStream] = None


def apply_override(config: ScenarioConfig, path: str, value) -> ScenarioConfig:
    """Copy of the config with the dotted path set to value, re-validated."""
    doc = config.model_dump()
    node = doc
    parts = path.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"Cannot override '{path}'", [f"{path}: '{part}' does not resolve"])
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"Cannot override '{path}'", [f"{path}: '{parts[-1]}' does not resolve"])
    node[parts[-1]] = value
    try:
        return ScenarioConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError.from_validation_error(e, f"config with {path}={value}")


def point_seed(seed: int, index: int) -> int:
    """Independent 63-bit seed for sweep point `index`."""
    state = np.random.SeedSequence(seed, spawn_key=(1 << 20, index)).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def sweep_points(config: ScenarioConfig, variable: Optional[str] = None,
                 values: Optional[Sequence[float]] = None) -> List[SweepPoint]:
    """Resolved and validated per-point configs; nothing is simulated here."""
    if variable is None and config.sweep is not None:
        variable, values = config.sweep.variable, config.sweep.values
    if variable is None:
        detection_sim.validate_scenario(config)
        return [SweepPoint(index=0, value=None, config=config)]
    points = []
    for k, value in enumerate(values):
        point_config = apply_override(config, variable, value)
        point_config = point_config.model_copy(update={"seed": point_seed(config.seed, k)})
        detection_sim.validate_scenario(point_config)
        points.append(SweepPoint(index=k, value=float(value), config=point_config))
    return points


def simulate_sweep(config: ScenarioConfig, variable: Optional[str] = None, values: Optional[Sequence[float]] = None,
                   threads: int = 1) -> List[SweepPoint]:
    points = sweep_points(config, variable, values)
    logger.info(f"Running {len(points)} point(s) of '{config.scenario_id}'"
                + (f" over {variable or config.sweep.variable}" if points[0].value is not None else ""))
    for point in points:
        point.stream = detection_sim.run_trials(point.config, threads=threads)
    return points
