# app/presets/memory_presets.py
import math
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from .. import models
from ..config import logger
from .. import counting_analysis, detection_sim, photon_source, rydberg_memory
from ..sweeps import point_seed, simulate_sweep
from .base_preset import (BasePreset, PresetOutput, calibrated_scenario, estimate_rows, fit_estimates, fit_summary,
                          missing_points, model_curve, read_path_efficiency, safe_estimate, try_fit, wide_read_gate,
                          with_modes)

# Histogram span around the pulses, in read-photon FWHMs
PULSE_SPAN_FWHM = 3.0
HISTOGRAM_BIN = 0.02  # µs
SECOND_SWEEP_OFFSET = 1 << 16


def _pulse_span(config: models.ScenarioConfig, *configs: models.ScenarioConfig) -> Tuple[float, float]:
    """From the start of the input read pulse to the end of the latest expected read pulse."""
    timing = config.timing
    lo = max(0.0, timing.write_time + timing.t_A - PULSE_SPAN_FWHM * timing.read_fwhm)
    latest = max(detection_sim.resolve_windows(c).read_window.center for c in configs)
    return lo, latest + PULSE_SPAN_FWHM * timing.read_fwhm


def _histogram_waveform(hist: pd.DataFrame, bin_width: float) -> models.PulseWaveform:
    return models.PulseWaveform.from_arrays(hist["t_us"].to_numpy(), hist["per_herald"].to_numpy(), bin_width)


class StorageExamplePreset(BasePreset):
    """Heralded D2 click-time histograms without atoms, with slow light and after storage."""
    preset_id = "fig3a"
    preset_name = "Single-photon storage example"
    preset_description = "Per-herald D2 counts per time bin for bypass, slow-light and storage runs; eta_B from p(r|w)/p0(r|w)."
    modes = ("bypass", "slow_light", "storage")

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("fig3a", source={"p": 0.27}, memory={"mode": "storage", "t_B": 0.5},
                                   n_trials=2_000_000)

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        configs = {mode: with_modes(config, "direct", mode) for mode in cls.modes}
        lo, hi = _pulse_span(config, *configs.values())
        frames, histograms, retrieval = [], {}, {}
        for k, (mode, mode_config) in enumerate(configs.items()):
            analysis = detection_sim.resolve_windows(mode_config)
            run_config = wide_read_gate(mode_config, lo, hi).model_copy(update={"seed": point_seed(config.seed, k)})
            stream = detection_sim.run_trials(run_config, threads=threads)
            hist = counting_analysis.click_time_histogram(stream, analysis, "D2", bin_width=HISTOGRAM_BIN,
                                                          t_range=(lo, hi))
            histograms[mode] = hist
            retrieval[mode] = safe_estimate("p_r_given_w",
                                            lambda: counting_analysis.conditional_retrieval(stream, analysis))
            frames.append(pd.DataFrame({"panel": mode, "x": hist["t_us"], "y": hist["per_herald"],
                                        "sigma": hist["sigma"], "model": np.nan}))

        summary: Dict[str, Any] = {"figure": cls.preset_id, "t_B_us": config.memory.t_B,
                                   "p_r_given_w": {m: e.model_dump() for m, e in retrieval.items()}}
        if retrieval["bypass"].value > 0.0 and math.isfinite(retrieval["storage"].value):
            summary["eta_B"] = counting_analysis.storage_efficiency_estimate(
                retrieval["storage"], retrieval["bypass"]).model_dump()
        else:
            summary["eta_B"] = None
        t_T = config.memory.t_B + config.storage.t_off
        summary["eta_B_model"] = float(rydberg_memory.storage_efficiency(config.storage, t_T))
        predicted = {m: detection_sim.predicted_estimates(c)["p_r_given_w"] for m, c in configs.items()}
        summary["eta_B_predicted"] = predicted["storage"] / predicted["bypass"]
        try:
            summary["slow_delay_us"] = rydberg_memory.centre_of_mass_delay(
                _histogram_waveform(histograms["bypass"], HISTOGRAM_BIN),
                _histogram_waveform(histograms["slow_light"], HISTOGRAM_BIN))
        except ValueError as e:
            logger.warning(f"{cls.preset_id}: no slow-light delay ({e})")
            summary["slow_delay_us"] = None
        summary["slow_delay_model_us"] = detection_sim.read_pulse_delay(configs["slow_light"])
        return PresetOutput(table=pd.concat(frames, ignore_index=True), summary=summary)


class StorageTimePreset(BasePreset):
    """p(r|w) and g2_wr versus the site-B storage time and the site-A delay."""
    preset_id = "fig4"
    preset_name = "Storage-time dependence"
    preset_description = ("Panels a,b: accidental-subtracted p(r|w), g2_wr vs t_B; panels c,d: p(r|w), g2_wr vs t_A at fixed t_B. "
                          "storage_decay fit on a, dlcz_decay fit on c; panels fitted independently.")
    sweep_variable = "memory.t_B"
    default_values = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 7.0]
    t_A_values = [0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0]

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("fig4", source={"p": 0.016}, memory={"mode": "storage", "t_B": 0.5},
                                   n_trials=10_000_000)

    @classmethod
    def _estimates(cls, points) -> Tuple[List[models.CorrelationEstimate], ...]:
        retrieval, corrected, g2 = [], [], []
        for point in points:
            windows = detection_sim.resolve_windows(point.config)
            r = safe_estimate("p_r_given_w", lambda: counting_analysis.conditional_retrieval(point.stream, windows))
            p_r = counting_analysis.click_probability(point.stream, "D2", windows.read_window, "p_r")
            retrieval.append(r)
            # accidental-subtracted heralded retrieval
            corrected.append(models.CorrelationEstimate(
                quantity="p_r_given_w_corrected", value=r.value - p_r.value,
                sigma=math.hypot(r.sigma, p_r.sigma), n_coinc=r.n_coinc))
            g2.append(safe_estimate("g2_wr", lambda: counting_analysis.cross_correlation(point.stream, windows)))
        return retrieval, corrected, g2

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        base = with_modes(config, "direct", "storage")
        t_B = cls.sweep_values(config, "memory.t_B")
        t_A = config.sweep.values if config.sweep is not None and config.sweep.variable == "timing.t_A" else cls.t_A_values
        storage_points = simulate_sweep(base, "memory.t_B", t_B, threads=threads)
        delay_base = base.model_copy(update={"seed": point_seed(base.seed, SECOND_SWEEP_OFFSET)})
        delay_points = simulate_sweep(delay_base, "timing.t_A", t_A, threads=threads)

        r_b, r_b_corr, g2_b = cls._estimates(storage_points)
        r_a, _, g2_a = cls._estimates(delay_points)
        storage = base.storage
        # p0(r|w) scales the storage efficiency in the heralded retrieval
        p0 = read_path_efficiency(with_modes(base, "direct", "bypass")) * float(
            photon_source.retrieval_efficiency_at(base.source.eta_A, base.source.tau_dlcz, base.timing.t_A))
        decay_fit, decay_status = try_fit("storage_decay", t_B, r_b_corr, initial_params={
            "eta0": min(max(p0 * storage.eta0, 1e-6), 0.99),
            "tau_R": storage.tau_R, "delta_F": storage.delta_F, "p_F1": storage.p_F1, "t_off": storage.t_off,
        })
        d2 = base.detectors["D2"]
        dlcz_fit, dlcz_status = try_fit("dlcz_decay", t_A, r_a, initial_params={
            "eta_A": min(max(base.source.eta_A, 1e-3), 0.999), "tau_dlcz": base.source.tau_dlcz,
            "p_nr": min(max(1.0 - (1.0 - d2.dark_prob_per_gate) * (1.0 - base.source.p_nr), 1e-6), 0.5),
            "eta_r": read_path_efficiency(base), "p": base.source.p, "p_SE": 0.0,
        })
        table = pd.concat([
            estimate_rows("a", t_B, r_b_corr, model_curve(decay_fit, t_B)),
            estimate_rows("b", t_B, g2_b),
            estimate_rows("c", t_A, r_a, model_curve(dlcz_fit, t_A)),
            estimate_rows("d", t_A, g2_a),
        ], ignore_index=True)
        missing = missing_points(table)
        missing_reason = "no heralding write clicks or no accidental coincidences" if missing else None
        if missing:
            logger.warning(f"{cls.preset_id}: no estimate ({missing_reason}) at {missing}")
        return PresetOutput(table=table, summary={
            "figure": cls.preset_id,
            "t_off_us": storage.t_off,
            "revival_period_us": 1e3 / storage.delta_F if storage.delta_F > 0 else None,
            "storage_decay_fit": fit_summary(decay_fit),
            "storage_decay_fit_status": decay_status,
            "dlcz_decay_fit": fit_summary(dlcz_fit),
            "dlcz_decay_fit_status": dlcz_status,
            "missing_points": missing,
            "missing_reason": missing_reason,
            "p_r_given_w_vs_t_B": [e.value for e in r_b],
            "g2_wr_vs_t_B": [e.value for e in g2_b],
            "g2_wr_vs_t_A": [e.value for e in g2_a],
        })


class WeakCoherentStoragePreset(BasePreset):
    """Waveforms of slow light, storage and leakage, and storage efficiency vs t_T for a weak coherent input."""
    preset_id = "sfig3"
    preset_name = "Weak-coherent-state storage"
    preset_description = ("Panel input/slow_light/retrieved/leakage: modelled waveforms; panel b: eta_B vs t_T from "
                          "Poisson-sampled counts, storage_decay fit.")
    sweep_variable = "memory.t_B"
    default_values = [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 5.5, 6.0, 7.0, 8.0]
    mean_photons = 1.0

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("sfig3", memory={"mode": "storage", "t_B": 1.0}, n_trials=200_000)

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        timing, memory, storage = config.timing, config.memory, config.storage
        f_in = rydberg_memory.gaussian_waveform(timing.write_time + timing.t_A, timing.read_fwhm, timing.bin_width)
        waves = {
            "input": f_in,
            "slow_light": rydberg_memory.slow_light_waveform(f_in, config.medium, memory),
            "retrieved": rydberg_memory.retrieved_waveform(f_in, storage, memory.t_B),
            "leakage": rydberg_memory.leakage_waveform(f_in, memory),
        }
        frames = [pd.DataFrame({"panel": name, "x": wf.times, "y": wf.intensities, "sigma": 0.0, "model": np.nan})
                  for name, wf in waves.items()]

        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
        n = config.n_trials
        efficiency = config.detectors["D2"].efficiency
        expected_in = n * efficiency * cls.mean_photons
        counts_in = int(rng.poisson(expected_in))
        reference = models.CorrelationEstimate(quantity="input", value=counts_in / n,
                                               sigma=math.sqrt(counts_in) / n, n_coinc=counts_in)
        t_B = np.asarray(cls.sweep_values(config), dtype=np.float64)
        t_T = t_B + storage.t_off
        counts_out = rng.poisson(expected_in * np.asarray(rydberg_memory.storage_efficiency(storage, t_T)))
        eta_B = [counting_analysis.storage_efficiency_estimate(
                    models.CorrelationEstimate(quantity="retrieved", value=c / n, sigma=math.sqrt(c) / n, n_coinc=int(c)),
                    reference) for c in counts_out]
        result = fit_estimates("storage_decay", t_T, eta_B, initial_params={
            "eta0": min(max(storage.eta0, 1e-6), 0.99), "tau_R": storage.tau_R, "delta_F": storage.delta_F,
            "p_F1": storage.p_F1, "t_off": 0.0,
        })
        frames.append(estimate_rows("b", t_T, eta_B, model_curve(result, t_T)))
        return PresetOutput(table=pd.concat(frames, ignore_index=True), summary={
            "figure": cls.preset_id,
            "t_B_us": memory.t_B,
            "t_T_us": rydberg_memory.centre_of_mass_delay(waves["input"], waves["retrieved"]),
            "eta_slow": waves["slow_light"].mass / waves["input"].mass,
            "eta_B_at_t_B": float(rydberg_memory.storage_efficiency(storage, memory.t_B + storage.t_off)),
            "input_counts": counts_in,
            "fit": fit_summary(result),
        })


class WindowedCorrelationPreset(BasePreset):
    """g2_wr in a short sliding stop window across the slowed read pulse."""
    preset_id = "sfig4"
    preset_name = "Time-windowed slow-light cross-correlation"
    preset_description = ("g2_wr(t_w) in a 123 ns stop window for several p; random-emission noise crosses site B "
                          "unslowed and depresses g2 where it overlaps the slowed pulse. model = exact expectation.")
    sweep_variable = "source.p"
    default_values = [0.05, 0.1, 0.2]
    window_width = counting_analysis.DEFAULT_WINDOWED_WIDTH
    window_step = 0.05  # µs

    @classmethod
    def default_config(cls) -> models.ScenarioConfig:
        return calibrated_scenario("sfig4", source={"p_SE": 0.3}, memory={"mode": "slow_light"}, n_trials=4_000_000)

    @classmethod
    def run(cls, config: models.ScenarioConfig, threads: int = 1) -> PresetOutput:
        base = with_modes(config, "direct", "slow_light")
        lo, hi = _pulse_span(base, base)
        run_base = wide_read_gate(base, lo, hi)
        half = 0.5 * cls.window_width
        t_w = np.round(np.arange(lo + half, hi - half + 1e-9, cls.window_step), 6)
        points = simulate_sweep(run_base, cls.sweep_variable, cls.sweep_values(config), threads=threads)

        frames, noise = [], {}
        for point in points:
            windows = detection_sim.resolve_windows(point.config)
            g2 = [safe_estimate("g2_wr_windowed",
                                lambda: counting_analysis.windowed_g2(point.stream, windows, t, cls.window_width))
                  for t in t_w]
            expected = [detection_sim.predicted_windowed_estimates(
                point.config, models.Window(center=float(t), width=cls.window_width)) for t in t_w]
            model = [e["g2_wr"] for e in expected]
            fractions = [e["noise_fraction"] for e in expected]
            panel = f"p={point.value:g}"
            noise[panel] = fractions
            frames.append(estimate_rows(panel, t_w, g2, model))
        return PresetOutput(table=pd.concat(frames, ignore_index=True), summary={
            "figure": cls.preset_id,
            "window_width_us": cls.window_width,
            "input_center_us": base.timing.write_time + base.timing.t_A,
            "slowed_center_us": detection_sim.resolve_windows(base).read_window.center,
            "t_w_us": t_w.tolist(),
            "noise_fraction": noise,
            "classical_bound": 2.0,
        })
