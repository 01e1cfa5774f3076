# app/presets/spectroscopy_presets.py
import math

import numpy as np
import pandas as pd

from .. import models
from ..config import logger
from .. import detection_sim, rydberg_memory
from .base_preset import (BasePreset, PresetOutput, calibrated_scenario, estimate_rows, fit_estimates, fit_summary,
                          model_curve, with_modes)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _window_summary(window: models.EitWindow) -> dict:
    return window.model_dump()


class EitSpectrumPreset(BasePreset):
    """Probe transmission versus detuning with the coupling off and on."""
    preset_id = "sfig2"
    preset_name = "EIT spectrum"
    preset_description = "Transmission vs probe detuning with Gaussian read-out noise; eit_spectrum fits of both traces."
    default_values = np.round(np.linspace(-20.0, 20.0, 161), 6).tolist()
    noise_level = 0.01

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("sfig2")

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        medium = config.medium
        delta = np.asarray(cls.default_values, dtype=np.float64)
        rng = _rng(config.seed)
        sigma = np.full(delta.size, cls.noise_level)
        traces = {
            "coupling_off": medium.model_copy(update={"omega_c": 0.0}),
            "coupling_on": medium,
        }
        frames, fits = [], {}
        for panel, trace_medium in traces.items():
            y = np.asarray(rydberg_memory.transmission(trace_medium, delta)) + rng.normal(0.0, cls.noise_level, delta.size)
            estimates = [models.CorrelationEstimate(quantity="T", value=float(v), sigma=float(s)) for v, s in zip(y, sigma)]
            start = {"od": medium.od, "omega_c": trace_medium.omega_c, "gamma_gR": medium.gamma_gR, "gamma": medium.gamma}
            fixed = ["omega_c", "gamma_gR", "gamma"] if panel == "coupling_off" else None
            fits[panel] = fit_estimates("eit_spectrum", delta, estimates, initial_params=start, fixed=fixed)
            frames.append(estimate_rows(panel, delta, estimates, model_curve(fits[panel], delta)))

        summary = {"figure": cls.preset_id, "noise_level": cls.noise_level,
                   "true": _window_summary(rydberg_memory.eit_window(medium)),
                   "fit_coupling_off": fit_summary(fits["coupling_off"]),
                   "fit_coupling_on": fit_summary(fits["coupling_on"])}
        on = fits["coupling_on"]
        if on is not None and on.params["omega_c"] > 0.0:
            fitted = medium.model_copy(update={k: on.params[k] for k in ("od", "omega_c", "gamma_gR", "gamma")})
            summary["fitted"] = _window_summary(rydberg_memory.eit_window(fitted))
        return PresetOutput(table=pd.concat(frames, ignore_index=True), summary=summary)


class MemoryLinewidthPreset(BasePreset):
    """Heralded retrieval after storage versus coupling detuning."""
    preset_id = "sfig5"
    preset_name = "Memory linewidth"
    preset_description = ("p(r|w) vs coupling detuning: Gaussian of FWHM sqrt(FWHM_EIT^2 + FWHM_r^2), binomial "
                          "sampling of heralded counts, gaussian_line fit and deconvolution of the read linewidth.")
    default_values = np.round(np.linspace(-4.0, 4.0, 17), 6).tolist()

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("sfig5", source={"p": 0.1}, memory={"mode": "storage", "t_B": 0.5},
                                   n_trials=20_000_000)

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        base = with_modes(config, "direct", "storage")
        delta = np.asarray(cls.default_values, dtype=np.float64)
        window = rydberg_memory.eit_window(base.medium)
        fwhm_total = math.hypot(window.fwhm, base.timing.read_linewidth)
        line_sigma = fwhm_total / FWHM_PER_SIGMA
        predicted = detection_sim.predicted_estimates(base)

        rng = _rng(base.seed)
        heralds = int(rng.binomial(base.n_trials, predicted["p_w"]))
        if heralds == 0:
            raise ValueError(f"{cls.preset_id}: no heralds at n_trials={base.n_trials}")
        probability = predicted["p_r_given_w"] * np.exp(-0.5 * (delta / line_sigma) ** 2)
        counts = rng.binomial(heralds, probability)
        estimates = [models.CorrelationEstimate(quantity="p_r_given_w", value=k / heralds,
                                                sigma=math.sqrt(k) / heralds, n_coinc=int(k)) for k in counts]

        y = counts / heralds
        spread = math.sqrt(float(np.sum(y * delta ** 2) / np.sum(y))) if y.sum() > 0 else 1.0
        result = fit_estimates("gaussian_line", delta, estimates,
                               initial_params={"amplitude": float(max(y.max(), 1e-12)), "sigma": max(spread, 1e-3)})
        summary = {"figure": cls.preset_id, "heralds": heralds, "fwhm_eit": window.fwhm,
                   "read_linewidth_true": base.timing.read_linewidth, "fwhm_total_true": fwhm_total,
                   "fit": fit_summary(result)}
        if result is not None:
            fwhm_fit = result.params["sigma"] * FWHM_PER_SIGMA
            summary["fwhm_fit"] = fwhm_fit
            summary["fwhm_fit_sigma"] = result.uncertainties["sigma"] * FWHM_PER_SIGMA
            try:
                summary["read_linewidth_fit"] = rydberg_memory.memory_linewidth_deconvolve(fwhm_fit, window.fwhm)
            except ValueError as e:
                logger.warning(f"{cls.preset_id}: deconvolution failed ({e})")
                summary["read_linewidth_fit"] = None
        table = estimate_rows("retrieval", delta, estimates, model_curve(result, delta))
        return PresetOutput(table=table, summary=summary)
