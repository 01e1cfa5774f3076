# app/fit_models/correlation_models.py
from typing import Dict

import numpy as np

from ..models import FitParameter
from ..photon_source import detection_probability_arrays, noisy_antibunching
from .base_fit_model import BaseFitModel

P_FLOOR = 1e-12


def _pair_probability(x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
    return np.clip(params["c1"] * x + params["c2"], P_FLOOR, 1.0 - P_FLOOR)


class G2VsPwModel(BaseFitModel):
    """
    g2_wr versus the measured write click probability p(w), from the
    first-order noise model with p = c1 p(w) + c2.

    Only p_nr / eta_r is identifiable together with eta_A and p_SE, so eta_r
    is fixed from the read-arm calibration; c1 = 1/eta_w and c2 = -p_nw/eta_w
    come from the write-arm calibration.
    """
    model_id = "g2_vs_pw"
    model_name = "Cross-correlation vs p(w)"
    model_description = "g2_wr(p(w)) with source noise (random emission, background)."
    parameters = [
        FitParameter(name="eta_A", default=0.385, lower=0.0, upper=1.0, description="Intrinsic retrieval efficiency."),
        FitParameter(name="p_SE", default=0.1, lower=0.0, upper=1.0, description="Random-emission branching."),
        FitParameter(name="p_nr", default=1e-3, lower=0.0, upper=1.0, description="Read background per gate."),
        FitParameter(name="eta_r", default=0.1, lower=0.0, upper=1.0, fixed=True, description="Read-path efficiency."),
        FitParameter(name="c1", default=10.0, lower=0.0, fixed=True, description="p = c1 p(w) + c2 slope."),
        FitParameter(name="c2", default=0.0, fixed=True, description="p = c1 p(w) + c2 offset."),
    ]

    @classmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        p = _pair_probability(x, params)
        # write-arm terms cancel in p_wr / (p_w p_r)
        p_w, p_r, p_wr = detection_probability_arrays(
            p, 1.0, params["eta_r"], params["eta_A"], params["p_SE"], 0.0, params["p_nr"]
        )
        return p_wr / (p_w * p_r)


class AlphaVsPwModel(BaseFitModel):
    model_id = "alpha_vs_pw"
    model_name = "Heralded autocorrelation vs p(w)"
    model_description = "alpha(p(w)) = 2p(2+p)/(1+p)^2 with p = c1 p(w) + c2."
    parameters = [
        FitParameter(name="c1", default=10.0, lower=0.0, description="p = c1 p(w) + c2 slope."),
        FitParameter(name="c2", default=0.0, fixed=True, description="p = c1 p(w) + c2 offset."),
    ]

    @classmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        return np.asarray(noisy_antibunching(x, params["c1"], params["c2"]), dtype=np.float64)
