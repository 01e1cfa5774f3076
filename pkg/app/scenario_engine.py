# app/scenario_engine.py
"""
Scenario execution: simulate -> analyze -> (optional) fit, written as a
deterministic output bundle with a manifest, plus figure reproduction
through the preset registry.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Type

import numpy as np
import pandas as pd

from .config import settings, logger
from .errors import InsufficientStatisticsError
from . import models
from . import counting_analysis, data_module, detection_sim, fitting
from .sweeps import SweepPoint, simulate_sweep
from .presets.base_preset import BasePreset
from .presets.correlation_presets import AntibunchingPreset, CrossCorrelationPreset, StoredCorrelationPreset, CoincidenceHistogramPreset
from .presets.memory_presets import StorageExamplePreset, StorageTimePreset, WeakCoherentStoragePreset, WindowedCorrelationPreset
from .presets.spectroscopy_presets import EitSpectrumPreset, MemoryLinewidthPreset
from .presets.saturation_preset import SaturationPreset

# Figure preset registry
PRESET_REGISTRY: Dict[str, Type[BasePreset]] = {
    "fig2a": AntibunchingPreset,
    "fig2b": CrossCorrelationPreset,
    "fig3a": StorageExamplePreset,
    "fig3b": StoredCorrelationPreset,
    "fig4": StorageTimePreset,
    "fig5": SaturationPreset,
    "sfig1": CoincidenceHistogramPreset,
    "sfig2": EitSpectrumPreset,
    "sfig3": WeakCoherentStoragePreset,
    "sfig4": WindowedCorrelationPreset,
    "sfig5": MemoryLinewidthPreset,
}

SWEEP_ESTIMATE_COLUMNS = ["point", "sweep_value"] + counting_analysis.ESTIMATE_COLUMNS
RESIDUAL_SUFFIX = "_residuals.csv"


@dataclass
class ScenarioOutput:
    out_dir: Path
    manifest: models.RunManifest
    estimates: pd.DataFrame
    fit_result: Optional[models.FitResult] = None
    files: List[Path] = field(default_factory=list)


def with_overrides(config: models.ScenarioConfig, seed: Optional[int] = None,
                   n_trials: Optional[int] = None) -> models.ScenarioConfig:
    update = {}
    if seed is not None:
        update["seed"] = seed
    if n_trials is not None:
        update["n_trials"] = n_trials
    if not update:
        return config
    return data_module.parse_scenario_config({**config.model_dump(), **update})


def estimates_for_point(point: SweepPoint, strict: bool = False) -> pd.DataFrame:
    windows = detection_sim.resolve_windows(point.config)
    estimates = counting_analysis.standard_estimates(point.stream, windows, point.config.measurement, strict=strict)
    table = counting_analysis.estimate_table(estimates, point.config.scenario_id)
    table.insert(0, "sweep_value", np.nan if point.value is None else point.value)
    table.insert(0, "point", point.index)
    return table[SWEEP_ESTIMATE_COLUMNS]


def fit_problem_from_estimates(estimates: pd.DataFrame, fit_cfg: models.ScenarioFit) -> models.FitProblem:
    """Fit data: one row per sweep point with a finite two-sided estimate of fit_cfg.quantity."""
    y_rows = estimates[estimates["quantity"] == fit_cfg.quantity].set_index("point")
    if y_rows.empty:
        raise InsufficientStatisticsError(f"fit: quantity '{fit_cfg.quantity}' was not estimated")
    if fit_cfg.x == "p_w":
        x = estimates[estimates["quantity"] == "p_w"].set_index("point")["value"]
    else:
        x = y_rows["sweep_value"]
    data = []
    for point, row in y_rows.iterrows():
        x_value = x.get(point, math.nan)
        if not (math.isfinite(row["value"]) and math.isfinite(x_value) and row["sigma"] > 0.0 and row["n_coinc"] > 0):
            logger.warning(f"Fit of '{fit_cfg.quantity}' skips sweep point {point} (value={row['value']}, sigma={row['sigma']})")
            continue
        data.append(models.FitDataPoint(x=float(x_value), y=float(row["value"]), sigma_y=float(row["sigma"])))
    return models.FitProblem(model_id=fit_cfg.model_id, data=data, initial_params=fit_cfg.initial_params, fixed=fit_cfg.fixed)


def build_manifest(config: models.ScenarioConfig, out_dir: Path, files: Sequence[Path]) -> models.RunManifest:
    return models.RunManifest(
        scenario_id=config.scenario_id,
        config=config.model_dump(mode="json"),
        config_hash=detection_sim.scenario_hash(config),
        seed=config.seed,
        n_trials=config.n_trials,
        files={p.relative_to(out_dir).as_posix(): data_module.file_sha256(p) for p in sorted(files)},
    )


def run_scenario(config: models.ScenarioConfig, out_dir: Optional[Path] = None, threads: int = 1,
                 strict: bool = False) -> ScenarioOutput:
    """Simulate every sweep point, estimate, optionally fit, and write the bundle."""
    out_dir = Path(out_dir or settings.OUTPUT_DIR / config.scenario_id)
    points = simulate_sweep(config, threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)

    files: List[Path] = []
    tables = []
    for point in points:
        files.append(data_module.write_stream(point.stream, out_dir / f"stream_{point.index}.csv"))
        files.append(data_module.sidecar_path(files[-1]))
        tables.append(estimates_for_point(point, strict=strict))
    estimates = pd.concat(tables, ignore_index=True)
    files.append(data_module.write_csv(estimates, out_dir / "estimates.csv"))

    fit_result = None
    if config.fit is not None:
        problem = fit_problem_from_estimates(estimates, config.fit)
        try:
            fit_result = fitting.fit(problem)
        except ValueError as e:
            raise InsufficientStatisticsError(f"fit '{config.fit.model_id}': {e}") from e
        fit_path = out_dir / f"fit_{config.fit.model_id}.yaml"
        files.append(data_module.write_fit_result(fit_result, fit_path))
        files.append(data_module.write_csv(fitting.residual_table(problem, fit_result),
                                           out_dir / f"fit_{config.fit.model_id}{RESIDUAL_SUFFIX}"))

    manifest = build_manifest(config, out_dir, files)
    data_module.write_manifest(manifest, out_dir)
    logger.info(f"Scenario '{config.scenario_id}' written to {out_dir} ({len(files)} files + manifest)")
    return ScenarioOutput(out_dir=out_dir, manifest=manifest, estimates=estimates, fit_result=fit_result, files=files)


def analyze_streams(config: models.ScenarioConfig, stream_paths: Sequence[Path], out_path: Path,
                    strict: bool = False) -> pd.DataFrame:
    """Re-estimates existing stream files with the config's windows and measurement mode."""
    windows = detection_sim.resolve_windows(config)
    tables = []
    for k, path in enumerate(stream_paths):
        stream = data_module.read_stream(path)
        estimates = counting_analysis.standard_estimates(stream, windows, config.measurement, strict=strict)
        table = counting_analysis.estimate_table(estimates, stream.scenario_id or config.scenario_id)
        table.insert(0, "sweep_value", np.nan)
        table.insert(0, "point", k)
        tables.append(table[SWEEP_ESTIMATE_COLUMNS])
    result = pd.concat(tables, ignore_index=True)
    data_module.write_csv(result, out_path)
    logger.info(f"Estimates for {len(stream_paths)} stream(s) written to {out_path}")
    return result


def fit_file(problem: models.FitProblem, out_dir: Path, profile: bool = False) -> models.FitResult:
    result = fitting.fit(problem)
    out_dir = Path(out_dir)
    data_module.write_fit_result(result, out_dir / f"fit_{problem.model_id}.yaml")
    data_module.write_csv(fitting.residual_table(problem, result), out_dir / f"fit_{problem.model_id}{RESIDUAL_SUFFIX}")
    if profile:
        names = fitting.get_model(problem.model_id).parameter_names()
        intervals = [fitting.profile_uncertainty(problem, result, names.index(n)) for n in result.free_params]
        data_module.write_json([iv.model_dump() for iv in intervals], out_dir / f"fit_{problem.model_id}_profile.json")
    return result

# --- Figure reproduction ---

def get_preset(figure_id: str) -> Type[BasePreset]:
    preset = PRESET_REGISTRY.get(figure_id)
    if preset is None:
        raise ValueError(f"Unknown figure '{figure_id}'. Available presets: {', '.join(PRESET_REGISTRY)}")
    return preset


def available_presets() -> List[models.PresetInfo]:
    return [cls.get_info() for cls in PRESET_REGISTRY.values()]


def reproduce(figure_id: str, out_dir: Optional[Path] = None, config: Optional[models.ScenarioConfig] = None,
              seed: Optional[int] = None, n_trials: Optional[int] = None, threads: int = 1) -> Dict[str, Path]:
    """Runs a figure preset and writes <figure>.csv, <figure>_summary.json and a manifest."""
    preset = get_preset(figure_id)
    base = with_overrides(config or preset.default_config(), seed=seed, n_trials=n_trials)
    out_dir = Path(out_dir or settings.OUTPUT_DIR / figure_id)
    logger.info(f"Reproducing '{figure_id}' ({preset.preset_name}) into {out_dir}")

    output = preset.run(base, threads=threads)
    table_path = data_module.write_csv(output.table[BasePreset.TABLE_COLUMNS], out_dir / f"{figure_id}.csv")
    summary_path = data_module.write_json(output.summary, out_dir / f"{figure_id}_summary.json")
    manifest = build_manifest(base, out_dir, [table_path, summary_path])
    manifest_path = data_module.write_manifest(manifest, out_dir)
    return {"table": table_path, "summary": summary_path, "manifest": manifest_path}
