# app/presets/correlation_presets.py
from typing import Dict

import numpy as np
import pandas as pd

from .. import models
from ..config import logger
from .. import counting_analysis, detection_sim, photon_source
from ..sweeps import simulate_sweep
from .base_preset import (BasePreset, PresetOutput, calibrated_scenario, estimate_rows, fit_estimates, fit_summary,
                          model_curve, read_path_efficiency, safe_estimate, with_modes, write_calibration)


def _g2_fit_start(config: models.ScenarioConfig) -> Dict[str, float]:
    source = config.source
    d2 = config.detectors["D2"]
    background = 1.0 - (1.0 - d2.dark_prob_per_gate) * (1.0 - source.p_nr)
    return {
        "eta_A": photon_source.retrieval_efficiency_at(source.eta_A, source.tau_dlcz, config.timing.t_A),
        "p_SE": min(max(source.p_SE, 0.01), 0.99),
        "p_nr": min(max(background, 1e-6), 0.5),
        "eta_r": read_path_efficiency(config, "D2"),
        "c1": write_calibration(config, "D1"),
        "c2": 0.0,
    }


class AntibunchingPreset(BasePreset):
    """Heralded autocorrelation of the read photon before site B versus p(w)."""
    preset_id = "fig2a"
    preset_name = "Antibunching parameter vs p(w)"
    preset_description = "HBT on the read photon (D3/D4) heralded by D1, site B bypassed; fit alpha(c1 p(w) + c2)."
    sweep_variable = "source.p"
    default_values = [0.004, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4]

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("fig2a", measurement="hbt_read", n_trials=2_000_000)

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        base = with_modes(config, "hbt_read", "bypass")
        points = simulate_sweep(base, cls.sweep_variable, cls.sweep_values(config), threads=threads)
        p_w, alpha, predicted = [], [], []
        for point in points:
            windows = detection_sim.resolve_windows(point.config)
            p_w.append(counting_analysis.click_probability(point.stream, "D1", windows.write_window, "p_w").value)
            alpha.append(safe_estimate("alpha", lambda: counting_analysis.antibunching_estimator(point.stream, windows)))
            predicted.append(detection_sim.predicted_estimates(point.config)["alpha"])
        result = fit_estimates("alpha_vs_pw", p_w, alpha, initial_params={"c1": write_calibration(base, "D1")})
        table = estimate_rows("a", p_w, alpha, model_curve(result, p_w))
        return PresetOutput(table=table, summary={
            "figure": cls.preset_id, "quantity": "alpha", "classical_bound": 1.0,
            "sweep": {"variable": cls.sweep_variable, "values": [pt.value for pt in points]},
            "p_w": p_w, "predicted_alpha": predicted,
            "one_sided": [a.one_sided for a in alpha],
            "fit": fit_summary(result),
        })


class CrossCorrelationPreset(BasePreset):
    """Write-read cross-correlation after site B with no atoms loaded."""
    preset_id = "fig2b"
    preset_name = "Cross-correlation vs p(w) without storage"
    preset_description = "g2_wr(p(w)) on D1/D2 with site B bypassed; fit of the source noise model."
    sweep_variable = "source.p"
    default_values = [0.004, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4]
    memory_mode = "bypass"

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario(cls.preset_id, n_trials=2_000_000)

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        base = with_modes(config, "direct", cls.memory_mode)
        points = simulate_sweep(base, cls.sweep_variable, cls.sweep_values(config), threads=threads)
        p_w, g2, predicted = [], [], []
        for point in points:
            windows = detection_sim.resolve_windows(point.config)
            p_w.append(counting_analysis.click_probability(point.stream, "D1", windows.write_window, "p_w").value)
            g2.append(safe_estimate("g2_wr", lambda: counting_analysis.cross_correlation(point.stream, windows)))
            predicted.append(detection_sim.predicted_estimates(point.config)["g2_wr"])
        start = _g2_fit_start(base)
        result = fit_estimates("g2_vs_pw", p_w, g2, initial_params=start)
        table = estimate_rows("b", p_w, g2, model_curve(result, p_w))
        low = [e.value for e, pw in zip(g2, p_w) if pw == min(p_w)]
        logger.info(f"{cls.preset_id}: g2_wr at lowest p(w)={min(p_w):.4g} is {low[0] if low else float('nan'):.3f}")
        return PresetOutput(table=table, summary={
            "figure": cls.preset_id, "quantity": "g2_wr", "classical_bound": 2.0,
            "memory_mode": cls.memory_mode,
            "sweep": {"variable": cls.sweep_variable, "values": [pt.value for pt in points]},
            "p_w": p_w, "predicted_g2_wr": predicted,
            "eta_A_at_t_A": start["eta_A"], "read_path_efficiency": start["eta_r"],
            "fit": fit_summary(result),
        })


class StoredCorrelationPreset(CrossCorrelationPreset):
    """Cross-correlation after storage and retrieval at site B."""
    preset_id = "fig3b"
    preset_name = "Cross-correlation vs p(w) after storage"
    preset_description = "g2_wr(p(w)) after Rydberg storage for t_B; fit of the source noise model yields eta_A."
    default_values = [0.01, 0.02, 0.05, 0.1, 0.2, 0.4]
    memory_mode = "storage"

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario(cls.preset_id, memory={"mode": "storage", "t_B": 0.5}, n_trials=20_000_000)


class CoincidenceHistogramPreset(BasePreset):
    """Start-stop coincidences between a write click and read clicks k trials later."""
    preset_id = "sfig1"
    preset_name = "Coincidence histogram"
    preset_description = "Peaks C0..CK of the D1-D2 start-stop histogram with the twin's expectation."

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("sfig1", source={"p": 0.05})

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        base = with_modes(config, "direct", config.memory.mode)
        stream = detection_sim.run_trials(base, threads=threads)
        windows = detection_sim.resolve_windows(base)
        histogram = counting_analysis.start_stop_histogram(stream, windows, "D1", "D2")
        predicted = detection_sim.predicted_estimates(base)
        n = stream.trial_count
        k = np.arange(len(histogram.peak_counts))
        expected = np.where(k == 0, n * predicted["p_wr"], (n - k) * predicted["p_w"] * predicted["p_r"])
        counts = np.asarray(histogram.peak_counts, dtype=np.float64)
        table = pd.DataFrame({"panel": "coincidences", "x": k.astype(np.float64), "y": counts,
                              "sigma": np.sqrt(counts), "model": expected})
        g2 = safe_estimate("g2_wr", lambda: counting_analysis.g2_from_histogram(histogram, "g2_wr"))
        return PresetOutput(table=table, summary={
            "figure": cls.preset_id, "peak_counts": histogram.peak_counts, "n_starts": histogram.n_starts,
            "n_trials": n, "g2_wr": g2.model_dump(), "predicted_g2_wr": predicted["g2_wr"],
        })
