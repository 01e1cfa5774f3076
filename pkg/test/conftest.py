# test/conftest.py
from typing import Any, Dict

import pytest

from app.config import settings
from app import models


def _merge(doc: Dict[str, Any], updates: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key] = _merge(dict(doc[key]), value)
        else:
            doc[key] = value
    return doc


@pytest.fixture
def make_config():
    """Scenario factory: ideal detectors, site B bypassed, nested keyword updates."""
    def factory(**updates) -> models.ScenarioConfig:
        doc: Dict[str, Any] = {"scenario_id": "test", "source": {"p": 0.05}, "n_trials": 1000, "seed": 11,
                               "detectors": {det: {} for det in models.DETECTOR_IDS}}
        return models.ScenarioConfig.model_validate(_merge(doc, updates))
    return factory


@pytest.fixture
def small_blocks(monkeypatch):
    """Several RNG blocks even for short runs."""
    monkeypatch.setattr(settings, "TRIAL_BLOCK_SIZE", 4096)
    return 4096
