# app/data_module.py
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
import yaml
from pydantic import ValidationError

from .config import settings, logger
from .errors import ConfigError
from . import models

PathLike = Union[str, Path]
FIT_DATA_COLUMNS = ["x", "y", "sigma_y"]

# --- Scenario configuration (YAML) ---

def _load_yaml(path: PathLike, what: str) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"{what} file {path} is not valid YAML", [str(e)])
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{what} file {path} must hold a mapping at top level")
    return doc


def parse_scenario_config(doc: Dict[str, Any]) -> models.ScenarioConfig:
    try:
        return models.ScenarioConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError.from_validation_error(e, "scenario config")


def resolve_scenario_path(path: PathLike) -> Path:
    """The path as given, or the same relative name under SCENARIO_DIR when only that exists."""
    path = Path(path)
    if path.is_file() or path.is_absolute():
        return path
    candidate = Path(settings.SCENARIO_DIR) / path
    return candidate if candidate.is_file() else path


def load_scenario_config(path: PathLike) -> models.ScenarioConfig:
    path = resolve_scenario_path(path)
    config = parse_scenario_config(_load_yaml(path, "Scenario config"))
    logger.info(f"Loaded scenario '{config.scenario_id}' from {path}")
    return config


def scenario_config_to_yaml(config: models.ScenarioConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False, allow_unicode=True)


def save_scenario_config(config: models.ScenarioConfig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(scenario_config_to_yaml(config))
    return path

# --- Time-tag streams (CSV + sidecar) ---

def sidecar_path(csv_path: PathLike) -> Path:
    return Path(csv_path).with_suffix(".meta.json")


def write_json(obj: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n")
    return path


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(df: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


def write_stream(stream: models.TimeTagStream, path: PathLike) -> Path:
    path = write_csv(stream.tags[models.TimeTagStream.COLUMNS], path)
    write_json(stream.metadata(), sidecar_path(path))
    logger.info(f"Wrote {len(stream)} time tags to {path}")
    return path


def read_stream(path: PathLike) -> models.TimeTagStream:
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.is_file():
        raise ConfigError(f"Stream file not found: {path}")
    if not meta_path.is_file():
        raise ConfigError(f"Stream metadata not found: {meta_path}")
    meta = read_json(meta_path)
    tags = pd.read_csv(path, dtype={"detector": str, "trial": "int64", "t_us": "float64"})
    if list(tags.columns) != models.TimeTagStream.COLUMNS:
        raise ConfigError(f"Stream {path} must have columns {models.TimeTagStream.COLUMNS}, got {list(tags.columns)}")
    return models.TimeTagStream(
        tags, trial_count=meta["trial_count"], trial_period=meta["trial_period_us"], seed=meta.get("seed"),
        scenario_id=meta.get("scenario_id", ""), scenario_hash=meta.get("scenario_hash", ""),
    )

# --- Fit problems and results ---

def read_fit_data(path: PathLike) -> List[models.FitDataPoint]:
    df = pd.read_csv(path)
    missing = [c for c in FIT_DATA_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigError(f"Fit data {path} lacks columns {missing}")
    if "exposure" not in df.columns:
        df["exposure"] = 1.0
    try:
        return [models.FitDataPoint(x=r.x, y=r.y, sigma_y=r.sigma_y, exposure=r.exposure)
                for r in df.itertuples(index=False)]
    except ValidationError as e:
        raise ConfigError.from_validation_error(e, f"fit data {path}")


def load_fit_problem(path: PathLike, data_path: Optional[PathLike] = None) -> models.FitProblem:
    doc = _load_yaml(path, "Fit problem")
    if data_path is not None:
        doc["data"] = [p.model_dump() for p in read_fit_data(data_path)]
    try:
        return models.FitProblem.model_validate(doc)
    except ValidationError as e:
        raise ConfigError.from_validation_error(e, "fit problem")


def write_fit_result(result: models.FitResult, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(result.model_dump(mode="json"), f, sort_keys=False)
    return path


def read_fit_result(path: PathLike) -> models.FitResult:
    with open(path, "r", encoding="utf-8") as f:
        return models.FitResult.model_validate(yaml.safe_load(f))

# --- Manifests ---

def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(manifest: models.RunManifest, out_dir: PathLike) -> Path:
    return write_json(manifest.model_dump(mode="json"), Path(out_dir) / "manifest.json")


def read_manifest(path: PathLike) -> models.RunManifest:
    return models.RunManifest.model_validate(read_json(path))


def verify_manifest(path: PathLike) -> Dict[str, bool]:
    """File -> whether its sha256 still matches the manifest."""
    path = Path(path)
    manifest = read_manifest(path)
    return {rel: (path.parent / rel).is_file() and file_sha256(path.parent / rel) == digest
            for rel, digest in manifest.files.items()}
