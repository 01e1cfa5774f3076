# app/fit_models/eit_spectrum.py
from typing import Dict

import numpy as np

from ..models import FitParameter, EitMediumParams
from ..rydberg_memory import transmission
from .base_fit_model import BaseFitModel


class EitSpectrumModel(BaseFitModel):
    model_id = "eit_spectrum"
    model_name = "EIT transmission spectrum"
    model_description = "Probe transmission exp(-k_p l Im chi) versus probe detuning (MHz)."
    parameters = [
        FitParameter(name="od", default=5.4, lower=0.0, unit="", description="Resonant optical depth."),
        FitParameter(name="omega_c", default=2.66, lower=0.0, unit="MHz", description="Coupling Rabi frequency."),
        FitParameter(name="gamma_gR", default=0.29, lower=0.0, unit="MHz", description="Ground-Rydberg dephasing."),
        FitParameter(name="gamma", default=6.07, lower=0.0, fixed=True, unit="MHz", description="Excited-state linewidth."),
    ]

    @classmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        medium = EitMediumParams(od=params["od"], omega_c=params["omega_c"],
                                 gamma_gR=params["gamma_gR"], gamma=params["gamma"])
        return np.asarray(transmission(medium, x), dtype=np.float64)
