# app/fit_models/gaussian_line.py
from typing import Dict

import numpy as np

from ..models import FitParameter
from .base_fit_model import BaseFitModel


class GaussianLineModel(BaseFitModel):
    model_id = "gaussian_line"
    model_name = "Gaussian line"
    model_description = "A exp(-(x - x0)^2 / (2 sigma^2))."
    parameters = [
        FitParameter(name="amplitude", default=1.0, description="Peak height."),
        FitParameter(name="sigma", default=1.0, lower=0.0, unit="MHz", description="Standard deviation."),
        FitParameter(name="center", default=0.0, fixed=True, unit="MHz", description="Line centre."),
    ]

    @classmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        z = (np.asarray(x, dtype=np.float64) - params["center"]) / params["sigma"]
        return params["amplitude"] * np.exp(-0.5 * z * z)
