# test/test_detection_sim.py
import math

import numpy as np
import pandas as pd
import pytest

from app import counting_analysis, detection_sim, photon_source
from app.errors import ConfigError
from app.models import PulseWaveform, TimeTagStream, Window


def _estimate_direct(stream, windows):
    return {
        "p_w": counting_analysis.click_probability(stream, "D1", windows.write_window),
        "p_r": counting_analysis.click_probability(stream, "D2", windows.read_window),
        "g2_wr": counting_analysis.cross_correlation(stream, windows),
        "p_r_given_w": counting_analysis.conditional_retrieval(stream, windows),
    }

# --- Sampling primitives ---

def test_pair_sampling_mean():
    rng = np.random.Generator(np.random.Philox(1))
    n = detection_sim.sample_pairs(0.2, 200_000, rng)
    assert n.min() >= 0
    assert n.mean() == pytest.approx(0.25, abs=5 * math.sqrt(0.2 / 0.8 ** 2 / 200_000))
    a, b = detection_sim.sample_pair(0.2, rng)
    assert a == b


def test_thin_and_darken_edge_cases(make_config):
    rng = np.random.Generator(np.random.Philox(2))
    spd = make_config().detectors["D1"]
    assert detection_sim.thin_and_darken(3, spd, rng) is True
    assert detection_sim.thin_and_darken(0, spd, rng) is False
    dark = spd.model_copy(update={"efficiency": 0.0, "dark_prob_per_gate": 0.999999})
    assert detection_sim.thin_and_darken(0, dark, rng) is True
    with pytest.raises(ValueError):
        detection_sim.thin_and_darken(-1, spd, rng)


def test_waveform_sampler_stays_in_support():
    wf = PulseWaveform.from_arrays(np.array([1.0, 1.1, 1.2]), np.array([0.0, 1.0, 0.0]), 0.1)
    rng = np.random.Generator(np.random.Philox(3))
    draws = detection_sim.waveform_time_sampler(wf, rng, size=1000)
    assert np.all((draws >= 1.05 - 1e-12) & (draws <= 1.15 + 1e-12))
    gated = detection_sim.GatedSampler(wf, 1.1, 2.0)
    assert gated.acceptance == pytest.approx(0.5)

# --- Scenario validation ---

def test_windows_follow_memory_delay(make_config):
    bypass = detection_sim.resolve_windows(make_config())
    storage = detection_sim.resolve_windows(make_config(memory={"mode": "storage", "t_B": 0.5},
                                                        storage={"t_off": 0.47}))
    assert bypass.write_window.center == pytest.approx(0.1)
    assert bypass.read_window.center == pytest.approx(0.6)
    assert storage.read_window.center - bypass.read_window.center == pytest.approx(0.97)


def test_gate_outside_trial_period_is_rejected(make_config):
    config = make_config(timing={"trial_period": 0.5})
    with pytest.raises(ConfigError) as err:
        detection_sim.validate_scenario(config)
    assert any("outside trial period" in line for line in err.value.field_errors)

# --- Monte Carlo determinism ---

def test_same_seed_same_stream(make_config):
    config = make_config(n_trials=5000)
    a = detection_sim.run_trials(config)
    b = detection_sim.run_trials(config)
    pd.testing.assert_frame_equal(a.tags, b.tags)
    assert a.scenario_hash == detection_sim.scenario_hash(config)


def test_different_seed_different_stream(make_config):
    a = detection_sim.run_trials(make_config(n_trials=5000, seed=1))
    b = detection_sim.run_trials(make_config(n_trials=5000, seed=2))
    assert not a.tags.equals(b.tags)


def test_thread_count_does_not_change_output(make_config, small_blocks):
    config = make_config(n_trials=5 * small_blocks + 17, memory={"mode": "storage"})
    one = detection_sim.run_trials(config, threads=1)
    four = detection_sim.run_trials(config, threads=4)
    pd.testing.assert_frame_equal(one.tags, four.tags)
    assert one.trial_count == four.trial_count == config.n_trials


def test_time_tags_inside_gates(make_config):
    config = make_config(n_trials=20_000, source={"p": 0.2, "p_nw": 0.05, "p_nr": 0.05})
    stream = detection_sim.run_trials(config)
    windows = detection_sim.resolve_windows(config)
    for det, window in (("D1", windows.write_window), ("D2", windows.read_window)):
        lo, hi = window.bounds()
        t = stream.tags.loc[stream.tags["detector"] == det, "t_us"]
        assert len(t) > 0
        assert t.min() >= round(lo, 6) and t.max() <= round(hi, 6)
    assert (stream.tags.groupby(["trial", "detector"]).size() == 1).all()


def test_merge_streams_offsets_trials(make_config):
    a = detection_sim.run_trials(make_config(n_trials=1000, seed=1))
    b = detection_sim.run_trials(make_config(n_trials=500, seed=2))
    merged = detection_sim.merge_streams(a, b)
    assert merged.trial_count == 1500
    assert len(merged) == len(a) + len(b)
    assert merged.tags["trial"].max() < 1500

# --- Analytic twin ---

@pytest.mark.parametrize("p", [0.002, 0.01, 0.05])
def test_twin_converges_to_ideal_cross_correlation(make_config, p):
    config = make_config(source={"p": p, "eta_w": 1e-3, "eta_r": 1e-3})
    predicted = detection_sim.predicted_estimates(config)
    assert predicted["g2_wr"] == pytest.approx(photon_source.ideal_cross_correlation(p), rel=5e-3)


@pytest.mark.parametrize("p", [0.01, 0.05, 0.2])
def test_twin_converges_to_ideal_antibunching(make_config, p):
    config = make_config(measurement="hbt_read", source={"p": p, "eta_w": 1e-2, "eta_r": 1e-2})
    predicted = detection_sim.predicted_estimates(config)
    assert predicted["alpha"] == pytest.approx(photon_source.ideal_antibunching(p), rel=5e-2)


def test_twin_autocorrelation_of_thermal_marginal(make_config):
    config = make_config(measurement="hbt_write", source={"p": 0.05, "eta_w": 1e-3, "eta_r": 1e-3})
    assert detection_sim.predicted_estimates(config)["g2_ww"] == pytest.approx(2.0, rel=1e-2)


def test_twin_matches_first_order_noise_model(make_config):
    # wide gates so the pulse acceptance is one
    config = make_config(
        source={"p": 1e-3, "eta_w": 0.3, "eta_r": 0.3, "eta_A": 0.4, "p_SE": 0.2, "p_nw": 0.0, "p_nr": 1e-3},
        timing={"write_time": 2.0, "t_A": 0.5},
        windows={"write_window": {"width": 0.2}, "read_window": {"width": 2.5}},
    )
    predicted = detection_sim.predicted_estimates(config)
    model = photon_source.detection_probabilities(config.source, config.timing.t_A)
    assert predicted["p_w"] == pytest.approx(model.p_w, rel=2e-2)
    assert predicted["p_r"] == pytest.approx(model.p_r, rel=2e-2)
    assert predicted["p_wr"] == pytest.approx(model.p_wr, rel=2e-2)


def test_twin_heralded_probability_is_dark_rate_without_read_path(make_config):
    config = make_config(source={"eta_r": 0.0}, detectors={"D2": {"dark_prob_per_gate": 0.01}})
    assert detection_sim.predicted_estimates(config)["p_r_given_w"] == pytest.approx(0.01, rel=1e-9)


@pytest.mark.parametrize("mode", ["bypass", "slow_light", "storage"])
def test_simulation_matches_twin(make_config, mode):
    config = make_config(
        n_trials=200_000, seed=21,
        source={"p": 0.05, "eta_w": 0.5, "eta_r": 0.8, "p_SE": 0.2, "p_nr": 0.002},
        memory={"mode": mode}, storage={"eta0": 0.5},
    )
    stream = detection_sim.run_trials(config)
    windows = detection_sim.resolve_windows(config)
    measured = _estimate_direct(stream, windows)
    predicted = detection_sim.predicted_estimates(config)
    for quantity in ("p_w", "p_r", "p_r_given_w"):
        estimate = measured[quantity]
        assert abs(estimate.value - predicted[quantity]) <= 4.0 * estimate.sigma, quantity
    g2 = measured["g2_wr"]
    assert abs(g2.value - predicted["g2_wr"]) <= 4.0 * g2.sigma


def test_simulated_antibunching_matches_twin(make_config):
    config = make_config(n_trials=300_000, seed=5, measurement="hbt_read",
                         source={"p": 0.2, "eta_w": 0.5, "eta_r": 0.8})
    stream = detection_sim.run_trials(config)
    alpha = counting_analysis.antibunching_estimator(stream, detection_sim.resolve_windows(config))
    predicted = detection_sim.predicted_estimates(config)["alpha"]
    assert predicted < 1.0
    assert abs(alpha.value - predicted) <= 4.0 * alpha.sigma


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.002, 0.01, 0.05])
def test_large_run_statistics_oracle(make_config, p):
    config = make_config(n_trials=10_000_000, seed=2017, source={"p": p, "eta_w": 0.2, "eta_r": 0.2})
    stream = detection_sim.run_trials(config, threads=4)
    g2 = counting_analysis.cross_correlation(stream, detection_sim.resolve_windows(config))
    assert abs(g2.value - detection_sim.predicted_estimates(config)["g2_wr"]) <= 3.0 * g2.sigma


@pytest.mark.slow
def test_large_run_noise_model_consistency(make_config):
    rng = np.random.Generator(np.random.Philox(99))
    for k in range(5):
        config = make_config(
            n_trials=10_000_000, seed=100 + k,
            source={"p": float(rng.uniform(1e-3, 2e-2)), "eta_w": float(rng.uniform(0.1, 0.5)),
                    "eta_r": float(rng.uniform(0.1, 0.5)), "p_SE": float(rng.uniform(0.0, 0.3)),
                    "p_nw": float(rng.uniform(0.0, 1e-3)), "p_nr": float(rng.uniform(0.0, 1e-3))},
        )
        stream = detection_sim.run_trials(config, threads=4)
        windows = detection_sim.resolve_windows(config)
        predicted = detection_sim.predicted_estimates(config)
        p_wr = counting_analysis.start_stop_histogram(stream, windows).peak_counts[0] / stream.trial_count
        se = math.sqrt(predicted["p_wr"] * (1 - predicted["p_wr"]) / stream.trial_count)
        assert abs(p_wr - predicted["p_wr"]) <= 4.0 * se
        for quantity in ("p_w", "p_r"):
            estimate = _estimate_direct(stream, windows)[quantity]
            assert abs(estimate.value - predicted[quantity]) <= 4.0 * estimate.sigma

# --- Pair-number truncation ---

def test_pair_sampling_respects_truncation():
    rng = np.random.Generator(np.random.Philox(4))
    n = detection_sim.sample_pairs(0.3, 200_000, rng, n_max=2)
    assert n.max() == 2
    assert np.mean(n == 2) == pytest.approx(0.09, abs=5 * math.sqrt(0.09 * 0.91 / 200_000))


def test_truncated_source_matches_twin(make_config):
    config = make_config(n_trials=200_000, seed=13, source={"p": 0.3, "n_max": 2, "eta_w": 0.5, "eta_r": 0.5})
    stream = detection_sim.run_trials(config)
    windows = detection_sim.resolve_windows(config)
    predicted = detection_sim.predicted_estimates(config)
    untruncated = detection_sim.predicted_estimates(make_config(source={"p": 0.3, "eta_w": 0.5, "eta_r": 0.5}))
    assert abs(predicted["p_w"] - untruncated["p_w"]) > 0.003
    assert detection_sim.build_trial_plan(config).n_max == 2
    for quantity, estimate in _estimate_direct(stream, windows).items():
        assert abs(estimate.value - predicted[quantity]) <= 4.0 * estimate.sigma, quantity

# --- Time-windowed cross-correlation ---

def _wide_gate_slow_light(make_config, **source):
    return make_config(
        n_trials=500_000, seed=17, source={"p": 0.05, "eta_w": 0.5, "eta_r": 0.5, "p_SE": 0.3, **source},
        memory={"mode": "slow_light"}, detectors={"D2": {"gate_width": 2.0}}, timing={"write_time": 2.5},
    )


def test_windowed_twin_over_read_window_equals_twin(make_config):
    config = make_config(source={"p": 0.05, "eta_w": 0.5, "eta_r": 0.5, "p_SE": 0.3, "p_nr": 0.01},
                         memory={"mode": "slow_light"}, timing={"write_time": 2.5})
    windowed = detection_sim.predicted_windowed_estimates(config, detection_sim.resolve_windows(config).read_window)
    predicted = detection_sim.predicted_estimates(config)
    for quantity in ("p_w", "p_r", "p_wr", "g2_wr"):
        assert windowed[quantity] == pytest.approx(predicted[quantity], rel=1e-9), quantity


def test_windowed_twin_rejects_swapped_roles(make_config):
    config = _wide_gate_slow_light(make_config)
    windows = detection_sim.resolve_windows(config)
    with pytest.raises(ValueError):
        detection_sim.predicted_windowed_estimates(config, windows.read_window, start_det="D2", stop_det="D1")


def test_windowed_g2_matches_windowed_twin(make_config):
    config = _wide_gate_slow_light(make_config)
    stream = detection_sim.run_trials(config)
    windows = detection_sim.resolve_windows(config)
    for offset in (-0.15, 0.0, 0.15):
        t_w = windows.read_window.center + offset
        estimate = counting_analysis.windowed_g2(stream, windows, t_w)
        predicted = detection_sim.predicted_windowed_estimates(
            config, Window(center=t_w, width=counting_analysis.DEFAULT_WINDOWED_WIDTH))
        assert abs(estimate.value - predicted["g2_wr"]) <= 4.0 * estimate.sigma, offset


def test_windowed_twin_follows_noise_mixture(make_config):
    noisy = _wide_gate_slow_light(make_config, p=0.01, eta_w=0.2, eta_r=0.2, eta_A=0.5, p_SE=0.5)
    clean = _wide_gate_slow_light(make_config, p=0.01, eta_w=0.2, eta_r=0.2, eta_A=0.5, p_SE=0.0)
    windows = detection_sim.resolve_windows(noisy)
    values = []
    for offset in (-0.4, -0.25, -0.1):
        window = Window(center=windows.read_window.center + offset, width=counting_analysis.DEFAULT_WINDOWED_WIDTH)
        mixed = detection_sim.predicted_windowed_estimates(noisy, window)
        signal = detection_sim.predicted_windowed_estimates(clean, window)
        f = mixed["noise_fraction"]
        assert 0.0 < f < 1.0
        assert mixed["g2_wr"] == pytest.approx(1.0 + (1.0 - f) * (signal["g2_wr"] - 1.0), rel=0.05)
        values.append(mixed["g2_wr"])
    assert values == sorted(values)

# --- Estimator statistics ---

def test_shuffled_trials_remove_correlation(make_config):
    config = make_config(n_trials=100_000, seed=31, source={"p": 0.05, "eta_w": 0.5, "eta_r": 0.5})
    stream = detection_sim.run_trials(config)
    windows = detection_sim.resolve_windows(config)
    assert counting_analysis.cross_correlation(stream, windows).value > 5.0
    tags = stream.tags.copy()
    read = (tags["detector"] == "D2").to_numpy()
    perm = np.random.Generator(np.random.Philox(7)).permutation(stream.trial_count)
    tags.loc[read, "trial"] = perm[tags.loc[read, "trial"].to_numpy()]
    shuffled = TimeTagStream(tags, stream.trial_count, stream.trial_period)
    g2 = counting_analysis.cross_correlation(shuffled, windows)
    assert abs(g2.value - 1.0) <= 4.0 * g2.sigma


def test_merged_streams_shrink_sigma(make_config):
    config = make_config(n_trials=50_000, source={"p": 0.05, "eta_w": 0.5, "eta_r": 0.5})
    windows = detection_sim.resolve_windows(config)
    streams = [detection_sim.run_trials(config, seed=100 + k) for k in range(4)]
    single = counting_analysis.cross_correlation(streams[0], windows)
    merged = streams[0]
    for other in streams[1:]:
        merged = detection_sim.merge_streams(merged, other)
    combined = counting_analysis.cross_correlation(merged, windows)
    assert merged.trial_count == 4 * config.n_trials
    assert combined.sigma == pytest.approx(single.sigma / 2.0, rel=0.15)


@pytest.mark.slow
def test_error_bars_cover_seed_scatter(make_config):
    config = make_config(n_trials=20_000, source={"p": 0.05, "eta_w": 0.5, "eta_r": 0.5})
    windows = detection_sim.resolve_windows(config)
    estimates = [counting_analysis.cross_correlation(detection_sim.run_trials(config, seed=seed), windows)
                 for seed in range(1000, 1100)]
    values = np.array([e.value for e in estimates])
    sigmas = np.array([e.sigma for e in estimates])
    assert np.std(values, ddof=1) == pytest.approx(np.mean(sigmas), rel=0.2)
    covered = np.mean(np.abs(values - detection_sim.predicted_estimates(config)["g2_wr"]) <= sigmas)
    assert 0.5 <= covered <= 0.85


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.01, 0.05])
def test_low_efficiency_cross_correlation_reaches_ideal(make_config, p):
    config = make_config(n_trials=10_000_000, seed=41, source={"p": p, "eta_w": 0.05, "eta_r": 0.05})
    stream = detection_sim.run_trials(config, threads=4)
    g2 = counting_analysis.cross_correlation(stream, detection_sim.resolve_windows(config))
    ideal = photon_source.ideal_cross_correlation(p)
    assert abs(g2.value - ideal) <= 4.0 * g2.sigma + 0.03 * ideal


@pytest.mark.slow
def test_low_efficiency_antibunching_reaches_ideal(make_config):
    p = 0.2
    config = make_config(n_trials=10_000_000, seed=43, measurement="hbt_read",
                         source={"p": p, "eta_w": 0.05, "eta_r": 0.05})
    stream = detection_sim.run_trials(config, threads=4)
    alpha = counting_analysis.antibunching_estimator(stream, detection_sim.resolve_windows(config))
    ideal = 2.0 * p * (2.0 + p) / (1.0 + p) ** 2
    assert abs(alpha.value - ideal) <= 4.0 * alpha.sigma + 0.05 * ideal
