# app/presets/base_preset.py
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .. import models
from ..config import logger
from ..errors import InsufficientStatisticsError
from .. import detection_sim, fitting, rydberg_memory

TABLE_COLUMNS = ["panel", "x", "y", "sigma", "model"]


@dataclass
class PresetOutput:
    table: pd.DataFrame
    summary: Dict[str, Any] = field(default_factory=dict)


def calibrated_scenario(scenario_id: str, **updates) -> models.ScenarioConfig:
    """
    Two-site scenario with efficiencies and noise in the experiment's regime:
    write arm folded into eta_w, read arm to site B in eta_r, read detectors at
    the quoted overall detection efficiency.
    """
    doc: Dict[str, Any] = {
        "scenario_id": scenario_id,
        "source": {"p": 0.01, "eta_w": 0.1, "eta_r": 0.7, "eta_A": 0.385, "p_SE": 0.05,
                   "p_nw": 1e-5, "p_nr": 2e-4, "tau_dlcz": 24.0},
        "timing": {"t_A": 1.0},
        "detectors": {"D1": {"efficiency": 1.0}, "D2": {"efficiency": 0.152},
                      "D3": {"efficiency": 0.152}, "D4": {"efficiency": 0.152}},
        "n_trials": 1_000_000,
    }
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], **value}
        else:
            doc[key] = value
    return models.ScenarioConfig.model_validate(doc)


def with_modes(config: models.ScenarioConfig, measurement: str, memory_mode: str) -> models.ScenarioConfig:
    memory = config.memory.model_copy(update={"mode": memory_mode})
    return config.model_copy(update={"measurement": measurement, "memory": memory})


def wide_read_gate(config: models.ScenarioConfig, lo: float, hi: float, detector: str = "D2") -> models.ScenarioConfig:
    """Config whose read detector is armed on [lo, hi]; analyses then cut sub-windows from the stream."""
    windows = detection_sim.resolve_windows(config)
    windows = windows.model_copy(update={"read_window": models.Window(center=0.5 * (lo + hi), width=hi - lo)})
    detectors = dict(config.detectors)
    detectors[detector] = detectors[detector].model_copy(update={"gate_width": None})
    return config.model_copy(update={"windows": windows, "detectors": detectors})


def read_path_efficiency(config: models.ScenarioConfig, detector: str = "D2") -> float:
    """Read-photon transmission from site A to a click on `detector`, site B included."""
    memory = config.memory
    if memory.mode == "slow_light":
        site_b = memory.slow_transmission
    elif memory.mode == "storage":
        site_b = float(rydberg_memory.storage_efficiency(config.storage, memory.t_B + config.storage.t_off))
    else:
        site_b = 1.0
    return config.source.eta_r * site_b * config.detectors[detector].efficiency


def write_calibration(config: models.ScenarioConfig, detector: str = "D1") -> float:
    """c1 = 1 / (write-arm efficiency) in p = c1 p(w) + c2."""
    return 1.0 / (config.source.eta_w * config.detectors[detector].efficiency)


def safe_estimate(quantity: str, estimator: Callable[[], models.CorrelationEstimate]) -> models.CorrelationEstimate:
    try:
        return estimator()
    except InsufficientStatisticsError as e:
        logger.warning(f"Insufficient statistics for '{quantity}': {e}")
        return models.CorrelationEstimate(quantity=quantity, value=math.nan, sigma=0.0, n_coinc=0)


def estimate_rows(panel: str, xs: Sequence[float], estimates: Sequence[models.CorrelationEstimate],
                  model: Optional[Sequence[float]] = None) -> pd.DataFrame:
    return pd.DataFrame({
        "panel": panel,
        "x": np.asarray(xs, dtype=np.float64),
        "y": [e.value for e in estimates],
        "sigma": [e.sigma for e in estimates],
        "model": np.full(len(xs), np.nan) if model is None else np.asarray(model, dtype=np.float64),
    })


def try_fit(model_id: str, xs: Sequence[float], estimates: Sequence[models.CorrelationEstimate],
            initial_params: Optional[Dict[str, float]] = None,
            fixed: Optional[List[str]] = None) -> Tuple[Optional[models.FitResult], str]:
    """Fits the two-sided finite estimates and says how it went: ok, skipped, failed or not converged."""
    data = [models.FitDataPoint(x=float(x), y=e.value, sigma_y=e.sigma)
            for x, e in zip(xs, estimates)
            if math.isfinite(x) and math.isfinite(e.value) and not e.one_sided and e.sigma > 0.0]
    n_free = len(fitting.get_model(model_id).parameter_names()) - len(
        fitting.get_model(model_id).default_fixed() if fixed is None else fixed)
    if len(data) < max(n_free, 1) + 1:
        status = f"skipped: {len(data)} usable points for {n_free} free parameters"
        logger.warning(f"'{model_id}' fit {status}")
        return None, status
    try:
        problem = models.FitProblem(model_id=model_id, data=data, initial_params=initial_params or {}, fixed=fixed)
        result = fitting.fit(problem)
    except ValueError as e:
        logger.warning(f"'{model_id}' fit failed: {e}")
        return None, f"failed: {e}"
    if not result.converged:
        logger.warning(f"'{model_id}' fit did not converge: {result.message}")
        return result, f"not converged: {result.message}"
    return result, "ok"


def fit_estimates(model_id: str, xs: Sequence[float], estimates: Sequence[models.CorrelationEstimate],
                  initial_params: Optional[Dict[str, float]] = None,
                  fixed: Optional[List[str]] = None) -> Optional[models.FitResult]:
    """Fits the two-sided finite estimates; None when too few remain or the fit cannot start."""
    return try_fit(model_id, xs, estimates, initial_params, fixed)[0]


def missing_points(table: pd.DataFrame) -> Dict[str, List[float]]:
    """x values per panel whose estimate is NaN."""
    missing = table[table["y"].isna()]
    return {str(panel): group["x"].tolist() for panel, group in missing.groupby("panel", sort=False)}


def model_curve(result: Optional[models.FitResult], xs: Sequence[float]) -> Optional[np.ndarray]:
    if result is None:
        return None
    return fitting.model_eval(result.model_id, np.asarray(xs, dtype=np.float64), result.params)


def fit_summary(result: Optional[models.FitResult]) -> Optional[Dict[str, Any]]:
    if result is None:
        return None
    return {"model_id": result.model_id, "params": result.params, "uncertainties": result.uncertainties,
            "chi_square": result.chi_square, "n_dof": result.n_dof, "converged": result.converged,
            "message": result.message}


class BasePreset(ABC):
    """A figure reproduction: derives its runs from a base scenario and emits panel/x/y/sigma/model rows."""
    preset_id: ClassVar[str] = "base"
    preset_name: ClassVar[str] = "Base Preset"
    preset_description: ClassVar[str] = "Base class for figure presets."
    sweep_variable: ClassVar[Optional[str]] = None
    default_values: ClassVar[List[float]] = []
    TABLE_COLUMNS: ClassVar[List[str]] = TABLE_COLUMNS

    @classmethod
    @abstractmethod
    def default_config(cls) -> models.ScenarioConfig:
        pass

    @classmethod
    @abstractmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        pass

    @classmethod
    def sweep_values(cls, config: models.ScenarioConfig, variable: Optional[str] = None) -> List[float]:
        """The config's sweep values when it sweeps this variable, else the preset grid."""
        variable = variable or cls.sweep_variable
        if config.sweep is not None and config.sweep.variable == variable:
            return list(config.sweep.values)
        return list(cls.default_values)

    @classmethod
    def get_info(cls) -> models.PresetInfo:
        return models.PresetInfo(id=cls.preset_id, name=cls.preset_name, description=cls.preset_description)
