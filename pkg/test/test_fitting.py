# test/test_fitting.py
import numpy as np
import pytest

from app import fitting, photon_source, rydberg_memory
from app.models import EitMediumParams, FitDataPoint, FitProblem


def _points(x, y, sigma):
    sigma = np.broadcast_to(sigma, np.shape(x))
    return [FitDataPoint(x=float(a), y=float(b), sigma_y=float(s)) for a, b, s in zip(x, y, sigma)]


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))

# --- Registry ---

def test_registry_lists_all_models():
    ids = {info.id for info in fitting.available_models()}
    assert ids == {"eit_spectrum", "g2_vs_pw", "alpha_vs_pw", "storage_decay", "dlcz_decay",
                   "gaussian_line", "saturation"}


def test_model_eval_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        fitting.model_eval("gaussian_line", [0.0], {"width": 1.0})
    with pytest.raises(ValueError):
        fitting.get_model("lorentzian")


def test_g2_model_without_noise_is_inverse_p():
    g2 = fitting.model_eval("g2_vs_pw", [0.001], {"p_SE": 0.0, "p_nr": 0.0})
    assert g2[0] == pytest.approx(100.0, rel=1e-9)


def test_eit_model_matches_transmission():
    x = np.linspace(-10.0, 10.0, 11)
    medium = EitMediumParams(od=5.4, omega_c=2.66, gamma_gR=0.29)
    assert np.allclose(fitting.model_eval("eit_spectrum", x, {}), rydberg_memory.transmission(medium, x))

# --- Round trips ---

def test_gaussian_line_round_trip():
    x = np.linspace(-5.0, 5.0, 41)
    y = fitting.model_eval("gaussian_line", x, {"amplitude": 2.0, "sigma": 1.5})
    result = fitting.fit(FitProblem(model_id="gaussian_line", data=_points(x, y, 0.01)))
    assert result.converged
    assert result.params["amplitude"] == pytest.approx(2.0, rel=1e-6)
    assert result.params["sigma"] == pytest.approx(1.5, rel=1e-6)
    assert result.chi_square < 1e-8
    assert result.n_dof == 39
    assert result.uncertainties["center"] == 0.0


def test_gaussian_line_round_trip_with_simplex():
    x = np.linspace(-5.0, 5.0, 41)
    y = fitting.model_eval("gaussian_line", x, {"amplitude": 2.0, "sigma": 1.5})
    result = fitting.fit(FitProblem(model_id="gaussian_line", data=_points(x, y, 0.01), method="simplex"))
    assert result.method == "simplex"
    assert result.params["amplitude"] == pytest.approx(2.0, rel=1e-4)
    assert result.params["sigma"] == pytest.approx(1.5, rel=1e-4)


def test_saturation_round_trip():
    n_in = np.array([1.0, 5.0, 10.0, 20.0, 40.0, 80.0, 150.0, 300.0])
    y = fitting.model_eval("saturation", n_in, {"n_max": 68.0, "t_lin": 0.0044})
    problem = FitProblem(model_id="saturation", data=_points(n_in, y, 1e-3 * y),
                         initial_params={"n_max": 50.0, "t_lin": 0.005})
    result = fitting.fit(problem)
    assert result.converged
    assert result.params["n_max"] == pytest.approx(68.0, rel=1e-5)
    assert result.params["t_lin"] == pytest.approx(0.0044, rel=1e-5)


def test_alpha_model_recovers_slope():
    pw = np.linspace(0.001, 0.02, 8)
    y = photon_source.noisy_antibunching(pw, 8.0, 0.0)
    result = fitting.fit(FitProblem(model_id="alpha_vs_pw", data=_points(pw, y, 0.01)))
    assert result.params["c1"] == pytest.approx(8.0, rel=1e-5)


def test_storage_decay_recovers_hyperfine_splitting():
    t_b = np.arange(0.0, 12.0, 0.25)
    truth = {"eta0": 0.05, "tau_R": 3.3, "delta_F": 190.0}
    y = fitting.model_eval("storage_decay", t_b, truth) + _rng(17).normal(0.0, 5e-4, t_b.size)
    result = fitting.fit(FitProblem(model_id="storage_decay", data=_points(t_b, y, 5e-4)))
    assert result.converged
    assert abs(result.params["delta_F"] - 190.0) <= 15.0
    assert result.params["p_F1"] == 0.5


def _eit_problem(seed, truth):
    x = np.linspace(-20.0, 20.0, 161)
    y = fitting.model_eval("eit_spectrum", x, truth) + _rng(seed).normal(0.0, 0.01, x.size)
    return FitProblem(model_id="eit_spectrum", data=_points(x, y, 0.01))


EIT_TRUTH = {"od": 5.0, "omega_c": 2.5, "gamma_gR": 0.3}


def test_eit_spectrum_round_trip_within_uncertainty():
    result = fitting.fit(_eit_problem(3, EIT_TRUTH))
    assert result.converged
    for name, value in EIT_TRUTH.items():
        assert abs(result.params[name] - value) <= 4.0 * result.uncertainties[name], name


@pytest.mark.slow
def test_eit_uncertainties_have_nominal_coverage():
    inside = 0
    for seed in range(100):
        result = fitting.fit(_eit_problem(1000 + seed, EIT_TRUTH))
        inside += abs(result.params["omega_c"] - EIT_TRUTH["omega_c"]) <= result.uncertainties["omega_c"]
    assert 55 <= inside <= 80

# --- Degenerate problems ---

def test_all_fixed_fit_reports_chi_square():
    x = np.array([-1.0, 0.0, 1.0])
    problem = FitProblem(model_id="gaussian_line", data=_points(x, [0.0, 0.0, 0.0], 0.5),
                         fixed=["amplitude", "sigma", "center"])
    result = fitting.fit(problem)
    assert result.converged
    assert result.free_params == []
    assert result.n_dof == 3
    expected = np.sum((fitting.model_eval("gaussian_line", x, {}) / 0.5) ** 2)
    assert result.chi_square == pytest.approx(expected)


def test_too_few_points_rejected():
    with pytest.raises(ValueError):
        fitting.fit(FitProblem(model_id="gaussian_line", data=_points([0.0], [1.0], 0.1)))


def test_initial_value_outside_bounds_rejected():
    problem = FitProblem(model_id="gaussian_line", data=_points([0.0, 1.0, 2.0], [1.0, 0.5, 0.1], 0.1),
                         initial_params={"sigma": -1.0})
    with pytest.raises(ValueError):
        fitting.fit(problem)


def test_unknown_fixed_name_rejected():
    problem = FitProblem(model_id="gaussian_line", data=_points([0.0, 1.0, 2.0], [1.0, 0.5, 0.1], 0.1),
                         fixed=["width"])
    with pytest.raises(ValueError):
        fitting.fit(problem)


def test_unidentifiable_parameter_flags_singular_curvature():
    x = np.zeros(5)
    y = np.full(5, 0.04)
    result = fitting.fit(FitProblem(model_id="dlcz_decay", data=_points(x, y, 0.001)))
    assert not result.converged
    assert "singular" in result.message
    assert result.covariance is None

# --- Uncertainties ---

def test_profile_interval_of_linear_parameter_matches_curvature():
    x = np.linspace(-3.0, 3.0, 25)
    y = fitting.model_eval("gaussian_line", x, {"amplitude": 1.3}) + _rng(9).normal(0.0, 0.05, x.size)
    problem = FitProblem(model_id="gaussian_line", data=_points(x, y, 0.05), fixed=["sigma", "center"])
    result = fitting.fit(problem)
    interval = fitting.profile_uncertainty(problem, result, 0)
    best, unc = result.params["amplitude"], result.uncertainties["amplitude"]
    assert interval.param == "amplitude"
    assert interval.lo == pytest.approx(best - unc, rel=1e-4)
    assert interval.hi == pytest.approx(best + unc, rel=1e-4)
    assert not interval.lo_one_sided and not interval.hi_one_sided


def test_profile_of_fixed_parameter_is_degenerate():
    x = np.linspace(-3.0, 3.0, 25)
    y = fitting.model_eval("gaussian_line", x, {"amplitude": 1.3})
    problem = FitProblem(model_id="gaussian_line", data=_points(x, y, 0.05))
    result = fitting.fit(problem)
    interval = fitting.profile_uncertainty(problem, result, 2)
    assert interval.lo == interval.hi == 0.0
    with pytest.raises(ValueError):
        fitting.profile_uncertainty(problem, result, 7)


def test_numerical_jacobian_of_linear_map():
    a = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]])
    jac = fitting.numerical_jacobian(lambda v: a @ v, [0.3, -0.7])
    assert jac.shape == (3, 2)
    assert np.allclose(jac, a, atol=1e-6)


def test_model_jacobian_of_gaussian_amplitude():
    x = np.linspace(-2.0, 2.0, 9)
    jac = fitting.model_jacobian("gaussian_line", x, {"amplitude": 2.0}, names=["amplitude"])
    assert np.allclose(jac[:, 0], np.exp(-0.5 * x ** 2), atol=1e-6)


def test_poisson_likelihood_fit_of_counts():
    x = np.linspace(-3.0, 3.0, 31)
    exposure = 1000.0
    counts = _rng(12).poisson(exposure * fitting.model_eval("gaussian_line", x, {"amplitude": 0.05}))
    data = [FitDataPoint(x=float(a), y=float(c), exposure=exposure) for a, c in zip(x, counts)]
    result = fitting.fit(FitProblem(model_id="gaussian_line", data=data, likelihood="poisson",
                                    fixed=["sigma", "center"]))
    assert result.converged
    assert abs(result.params["amplitude"] - 0.05) <= 4.0 * result.uncertainties["amplitude"]


def test_residual_table_columns():
    x = np.linspace(-2.0, 2.0, 5)
    y = fitting.model_eval("gaussian_line", x, {})
    problem = FitProblem(model_id="gaussian_line", data=_points(x, y, 0.1))
    result = fitting.fit(problem)
    table = fitting.residual_table(problem, result)
    assert list(table.columns) == ["x", "y", "sigma_y", "model", "residual"]
    assert np.allclose(table["residual"], 0.0, atol=1e-5)
