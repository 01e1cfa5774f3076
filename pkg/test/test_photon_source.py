# test/test_photon_source.py
import math

import numpy as np
import pytest

from app import photon_source
from app.models import DlczSourceParams


def test_pair_distribution_is_geometric():
    dist = photon_source.pair_number_distribution(0.1, 60)
    assert dist.total == pytest.approx(1.0, abs=1e-12)
    assert dist.mean == pytest.approx(0.1 / 0.9, rel=1e-9)
    assert dist.weights[1] / dist.weights[0] == pytest.approx(0.1)


def test_default_truncation_keeps_tail_below_target():
    for p in (0.002, 0.05, 0.4):
        n_max = photon_source.default_n_max(p)
        assert n_max >= 2
        assert p ** (n_max + 1) < 1e-12


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
def test_pair_distribution_rejects_out_of_range_p(p):
    with pytest.raises(ValueError):
        photon_source.pair_number_distribution(p, 10)


def test_generating_function_limits():
    assert photon_source.pair_generating_function(0.3, 1.0) == pytest.approx(1.0)
    assert photon_source.pair_generating_function(0.3, 0.0) == pytest.approx(0.7)
    x = np.array([0.0, 0.5, 1.0])
    assert np.allclose(photon_source.pair_generating_function(0.3, x), 0.7 / (1.0 - 0.3 * x))


def test_ideal_correlations():
    assert photon_source.ideal_cross_correlation(0.01) == pytest.approx(101.0)
    assert photon_source.ideal_antibunching(0.02) == pytest.approx(2 * 0.02 * 2.02 / 1.02 ** 2)
    assert photon_source.ideal_antibunching(0.0) == 0.0
    with pytest.raises(ValueError):
        photon_source.ideal_cross_correlation(0.0)


def test_noisy_antibunching_rescales_p():
    assert photon_source.noisy_antibunching(0.002, 10.0, 0.0) == pytest.approx(photon_source.ideal_antibunching(0.02))


def test_retrieval_efficiency_decays_to_1_over_e():
    assert photon_source.retrieval_efficiency_at(0.385, 24.0, 24.0) == pytest.approx(0.385 / math.e)
    with pytest.raises(ValueError):
        photon_source.retrieval_efficiency_at(0.385, 24.0, -1.0)


def test_noise_model_without_noise():
    params = DlczSourceParams(p=0.01, eta_w=0.2, eta_r=0.5, eta_A=0.4, p_SE=0.0, p_nw=0.0, p_nr=0.0)
    probs = photon_source.detection_probabilities(params, 0.0)
    assert probs.p_w == pytest.approx(0.002)
    assert probs.p_r == pytest.approx(0.01 * 0.4 * 0.5)
    assert probs.p_r_given_w == pytest.approx(0.2)
    assert probs.g2_wr == pytest.approx(100.0)


def test_heralded_read_probability_includes_background():
    params = DlczSourceParams(p=0.01, eta_A=0.3, eta_r=0.5, p_nr=0.001)
    assert photon_source.heralded_read_probability(params, 0.0) == pytest.approx(0.3 * 0.5 + 0.001)


def test_dlcz_coherence_time():
    tau = photon_source.motional_coherence_time(photon_source.RB87_MASS, 77e-6, photon_source.dlcz_delta_k(3.4))
    assert tau * 1e6 == pytest.approx(24.0, abs=1.0)


def test_rydberg_coherence_time():
    tau = photon_source.motional_coherence_time(photon_source.RB87_MASS, 38e-6, photon_source.rydberg_delta_k())
    assert tau * 1e6 == pytest.approx(3.3, abs=0.15)


def test_coherence_time_rejects_non_positive_inputs():
    with pytest.raises(ValueError):
        photon_source.motional_coherence_time(photon_source.RB87_MASS, 0.0, 1e6)


def test_pair_truncation_default_and_explicit():
    assert photon_source.pair_truncation(DlczSourceParams(p=0.05)) == photon_source.default_n_max(0.05)
    capped = DlczSourceParams(p=0.3, n_max=2)
    assert photon_source.pair_truncation(capped) == 2
    dist = photon_source.source_pair_distribution(capped)
    assert dist.n.tolist() == [0, 1, 2]
    assert dist.weights.tolist() == pytest.approx([0.7, 0.21, 0.09])
    assert dist.total == pytest.approx(1.0)


def test_truncated_generating_function():
    assert photon_source.truncated_generating_function(0.5, 0.5, 2) == pytest.approx(0.6875)
    assert photon_source.truncated_generating_function(0.3, 1.0, 2) == pytest.approx(1.0)
    assert photon_source.truncated_generating_function(0.3, 0.4, 200) == pytest.approx(
        photon_source.pair_generating_function(0.3, 0.4), rel=1e-12)
