# app/fit_models/memory_models.py
from typing import Dict

import numpy as np

from ..models import FitParameter, StorageParams, SaturationParams
from ..photon_source import detection_probability_arrays, retrieval_efficiency_at
from ..rydberg_memory import storage_efficiency, nonlinear_retrieval
from .base_fit_model import BaseFitModel


class StorageDecayModel(BaseFitModel):
    """
    Storage efficiency versus storage time t_B, evaluated at t_T = t_B + t_off.

    The beat contrast 2 p_F1 (1 - p_F1) is stationary at p_F1 = 0.5 and
    symmetric under p_F1 -> 1 - p_F1, so p_F1 is fixed by default.
    """
    model_id = "storage_decay"
    model_name = "Rydberg storage decay"
    model_description = "eta0 exp(-t^2/tau_R^2) |p_F1 + (1-p_F1) exp(-2 pi i dF t)|^2."
    parameters = [
        FitParameter(name="eta0", default=0.05, lower=0.0, upper=1.0, description="Zero-time efficiency."),
        FitParameter(name="tau_R", default=3.3, lower=0.0, unit="us", description="Gaussian coherence time."),
        FitParameter(name="delta_F", default=182.3, lower=0.0, unit="kHz", description="Hyperfine splitting."),
        FitParameter(name="p_F1", default=0.5, lower=0.0, upper=1.0, fixed=True, description="F=1 excitation share."),
        FitParameter(name="t_off", default=0.0, lower=0.0, fixed=True, unit="us", description="Delay offset."),
    ]

    @classmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        storage = StorageParams(eta0=params["eta0"], tau_R=params["tau_R"], delta_F=params["delta_F"],
                                p_F1=params["p_F1"], t_off=params["t_off"])
        return np.asarray(storage_efficiency(storage, np.asarray(x) + params["t_off"]), dtype=np.float64)


class DlczDecayModel(BaseFitModel):
    """Heralded read probability p(r|w) versus the site-A storage time t_A."""
    model_id = "dlcz_decay"
    model_name = "DLCZ retrieval decay"
    model_description = "p(r|w)(t_A) with eta_A(t) = eta_A exp(-t^2/tau_DLCZ^2)."
    parameters = [
        FitParameter(name="eta_A", default=0.385, lower=0.0, upper=1.0, description="Retrieval efficiency at t_A = 0."),
        FitParameter(name="tau_dlcz", default=24.0, lower=0.0, unit="us", description="Spin-wave coherence time."),
        FitParameter(name="p_nr", default=1e-3, lower=0.0, upper=1.0, description="Read background per gate."),
        FitParameter(name="eta_r", default=0.1, lower=0.0, upper=1.0, fixed=True, description="Read-path efficiency."),
        FitParameter(name="p", default=0.01, lower=0.0, upper=1.0, fixed=True, description="Excitation probability."),
        FitParameter(name="p_SE", default=0.0, lower=0.0, upper=1.0, fixed=True, description="Random-emission branching."),
    ]

    @classmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        eta_A_t = retrieval_efficiency_at(params["eta_A"], params["tau_dlcz"], np.asarray(x, dtype=np.float64))
        p_w, _, p_wr = detection_probability_arrays(
            params["p"], 1.0, params["eta_r"], eta_A_t, params["p_SE"], 0.0, params["p_nr"]
        )
        return np.asarray(p_wr / p_w, dtype=np.float64)


class SaturationModel(BaseFitModel):
    model_id = "saturation"
    model_name = "Blockade saturation"
    model_description = "N_out = N_max T (1 - exp(-N_in / N_max))."
    parameters = [
        FitParameter(name="n_max", default=68.0, lower=0.0, description="Maximum storable photons."),
        FitParameter(name="t_lin", default=0.0044, lower=0.0, upper=1.0, description="Linear-regime efficiency."),
    ]

    @classmethod
    def evaluate(cls, x: np.ndarray, params: Dict[str, float]) -> np.ndarray:
        sat = SaturationParams(n_max=params["n_max"], t_lin=params["t_lin"])
        return np.asarray(nonlinear_retrieval(np.asarray(x, dtype=np.float64), sat), dtype=np.float64)
