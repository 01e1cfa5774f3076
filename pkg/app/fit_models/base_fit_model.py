# app/fit_models/base_fit_model.py
from abc import ABC, abstractmethod
from typing import ClassVar, Dict, List, Optional, Tuple

import numpy as np

from .. import models


class BaseFitModel(ABC):
    """A model y = f(x; params) with parameter metadata used by the fit engine."""
    model_id: ClassVar[str] = "base"
    model_name: ClassVar[str] = "Base Model"
    model_description: ClassVar[str] = "Base class for fit models."
    parameters: ClassVar[List[models.FitParameter]] = []

    @classmethod
    @abstractmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        pass

    @classmethod
    def parameter_names(cls) -> List[str]:
        return [p.name for p in cls.parameters]

    @classmethod
    def default_params(cls) -> Dict[str, float]:
        return {p.name: p.default for p in cls.parameters}

    @classmethod
    def default_bounds(cls) -> Dict[str, Tuple[Optional[float], Optional[float]]]:
        return {p.name: (p.lower, p.upper) for p in cls.parameters}

    @classmethod
    def default_fixed(cls) -> List[str]:
        return [p.name for p in cls.parameters if p.fixed]

    @classmethod
    def get_info(cls) -> models.FitModelInfo:
        return models.FitModelInfo(
            id=cls.model_id, name=cls.model_name,
            description=cls.model_description, parameters=list(cls.parameters),
        )
