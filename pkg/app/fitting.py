# app/fitting.py
"""
Weighted nonlinear least-squares engine for the fit-model registry.

Free parameters are optimised in an unconstrained space: logistic for
two-sided bounds, log for one-sided bounds, identity otherwise. Curvature
uncertainties are taken in the natural parameter space at the optimum.
"""
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd
from scipy import optimize, special

from .config import settings, logger
from . import models
from .fit_models.base_fit_model import BaseFitModel
from .fit_models.eit_spectrum import EitSpectrumModel
from .fit_models.correlation_models import G2VsPwModel, AlphaVsPwModel
from .fit_models.memory_models import StorageDecayModel, DlczDecayModel, SaturationModel
from .fit_models.gaussian_line import GaussianLineModel

# Fit model registry
FIT_MODEL_REGISTRY: Dict[str, Type[BaseFitModel]] = {
    "eit_spectrum": EitSpectrumModel,
    "g2_vs_pw": G2VsPwModel,
    "alpha_vs_pw": AlphaVsPwModel,
    "storage_decay": StorageDecayModel,
    "dlcz_decay": DlczDecayModel,
    "gaussian_line": GaussianLineModel,
    "saturation": SaturationModel,
}

SINGULAR_CONDITION = 1e14
PROFILE_MAX_DOUBLINGS = 60
MU_FLOOR = 1e-300


def get_model(model_id: str) -> Type[BaseFitModel]:
    model = FIT_MODEL_REGISTRY.get(model_id)
    if model is None:
        raise ValueError(f"Unknown fit model '{model_id}'. Available: {sorted(FIT_MODEL_REGISTRY)}")
    return model


def available_models() -> List[models.FitModelInfo]:
    return [cls.get_info() for cls in FIT_MODEL_REGISTRY.values()]


def model_eval(model_id: str, x, params: Dict[str, float]) -> np.ndarray:
    model = get_model(model_id)
    unknown = set(params) - set(model.parameter_names())
    if unknown:
        raise ValueError(f"Unknown parameters for '{model_id}': {sorted(unknown)}")
    full = model.default_params()
    full.update(params)
    return model.evaluate(np.asarray(x, dtype=np.float64), full)

# --- Parameter transforms ---

class _Transform:
    def __init__(self, lower: Optional[float], upper: Optional[float]):
        self.lower = -math.inf if lower is None else float(lower)
        self.upper = math.inf if upper is None else float(upper)

    def contains(self, value: float) -> bool:
        lo_ok = self.lower == -math.inf or value > self.lower
        hi_ok = self.upper == math.inf or value < self.upper
        return lo_ok and hi_ok

    def to_internal(self, value: float) -> float:
        lo, hi = self.lower, self.upper
        if math.isfinite(lo) and math.isfinite(hi):
            return float(special.logit((value - lo) / (hi - lo)))
        if math.isfinite(lo):
            return math.log(value - lo)
        if math.isfinite(hi):
            return math.log(hi - value)
        return value

    def to_natural(self, u: float) -> float:
        lo, hi = self.lower, self.upper
        if math.isfinite(lo) and math.isfinite(hi):
            return lo + (hi - lo) * float(special.expit(u))
        if math.isfinite(lo):
            return lo + math.exp(min(u, 700.0))
        if math.isfinite(hi):
            return hi - math.exp(min(u, 700.0))
        return u

    def nudge_inside(self, value: float) -> float:
        """Closest admissible value for evaluating a fixed parameter on its bound."""
        tiny = 1e-12
        if value <= self.lower:
            return self.lower + tiny * max(1.0, abs(self.lower))
        if value >= self.upper:
            return self.upper - tiny * max(1.0, abs(self.upper))
        return value


class _Setup:
    """Resolved problem: parameter values, bounds, free set and residual function."""

    def __init__(self, problem: models.FitProblem):
        self.problem = problem
        self.model = get_model(problem.model_id)
        names = self.model.parameter_names()
        for label, keys in (("initial_params", problem.initial_params), ("bounds", problem.bounds),
                            ("fixed", problem.fixed or [])):
            unknown = set(keys) - set(names)
            if unknown:
                raise ValueError(f"{label} names unknown parameters for '{problem.model_id}': {sorted(unknown)}")
        self.names = names
        self.values = self.model.default_params()
        self.values.update(problem.initial_params)
        bounds = self.model.default_bounds()
        bounds.update(problem.bounds)
        self.transforms = {n: _Transform(*bounds[n]) for n in names}
        fixed = set(self.model.default_fixed() if problem.fixed is None else problem.fixed)
        self.free = [n for n in names if n not in fixed]
        if len(problem.data) < len(self.free):
            raise ValueError(f"{len(problem.data)} data points cannot constrain {len(self.free)} free parameters")
        for n in self.free:
            if not self.transforms[n].contains(self.values[n]):
                raise ValueError(f"initial value {n}={self.values[n]} not strictly inside bounds "
                                 f"({self.transforms[n].lower}, {self.transforms[n].upper})")
        self.x = np.array([d.x for d in problem.data], dtype=np.float64)
        self.y = np.array([d.y for d in problem.data], dtype=np.float64)
        self.sigma = np.array([d.sigma_y for d in problem.data], dtype=np.float64)
        self.exposure = np.array([d.exposure for d in problem.data], dtype=np.float64)

    def params_with(self, free_values: Sequence[float]) -> Dict[str, float]:
        params = dict(self.values)
        params.update(zip(self.free, (float(v) for v in free_values)))
        return params

    def residuals(self, params: Dict[str, float]) -> np.ndarray:
        mu = self.exposure * self.model.evaluate(self.x, params)
        if self.problem.likelihood == "poisson":
            mu = np.maximum(mu, MU_FLOOR)
            y = self.y
            log_term = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0) / mu), 0.0)
            deviance = np.maximum(2.0 * (mu - y + log_term), 0.0)
            return np.sign(y - mu) * np.sqrt(deviance)
        return (self.y - mu) / self.sigma

    def residuals_free(self, free_values: Sequence[float]) -> np.ndarray:
        return self.residuals(self.params_with(free_values))

    def to_internal(self, free_values: Sequence[float]) -> np.ndarray:
        return np.array([self.transforms[n].to_internal(v) for n, v in zip(self.free, free_values)])

    def to_natural(self, u: Sequence[float]) -> np.ndarray:
        return np.array([self.transforms[n].to_natural(v) for n, v in zip(self.free, u)])


def _fd_steps(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.finfo(float).eps) * np.maximum(np.abs(values), 1e-8)


def numerical_jacobian(func: Callable[[np.ndarray], np.ndarray], at: Sequence[float],
                       steps: Optional[np.ndarray] = None) -> np.ndarray:
    """Forward-difference Jacobian d func / d at, shape (len(func(at)), len(at))."""
    at = np.asarray(at, dtype=np.float64)
    steps = _fd_steps(at) if steps is None else np.asarray(steps, dtype=np.float64)
    jac = optimize.approx_fprime(at, func, steps)
    return np.atleast_2d(jac).reshape(-1, at.size)


def model_jacobian(model_id: str, x, params: Dict[str, float], names: Optional[List[str]] = None,
                   steps: Optional[np.ndarray] = None) -> np.ndarray:
    """Numerical derivative of model_eval with respect to the named parameters."""
    model = get_model(model_id)
    names = names or model.parameter_names()
    base = model.default_params()
    base.update(params)

    def func(values: np.ndarray) -> np.ndarray:
        trial = dict(base)
        trial.update(zip(names, (float(v) for v in values)))
        return model_eval(model_id, x, trial)

    return numerical_jacobian(func, [base[n] for n in names], steps)


def _curvature(setup: _Setup, free_values: np.ndarray) -> Tuple[Optional[np.ndarray], Optional[str]]:
    jac = numerical_jacobian(setup.residuals_free, free_values)
    jtj = jac.T @ jac
    try:
        cond = np.linalg.cond(jtj)
        if not np.isfinite(cond) or cond > SINGULAR_CONDITION:
            return None, f"singular curvature (condition number {cond:.3e}); parameters not identifiable"
        return np.linalg.inv(jtj), None
    except np.linalg.LinAlgError as e:
        return None, f"singular curvature: {e}"


def fit(problem: models.FitProblem) -> models.FitResult:
    setup = _Setup(problem)
    logger.info(f"Fitting '{problem.model_id}' ({len(problem.data)} points, free={setup.free}, method={problem.method})")

    if not setup.free:
        r = setup.residuals(setup.values)
        return models.FitResult(model_id=problem.model_id, params=dict(setup.values),
                                uncertainties={n: 0.0 for n in setup.names}, free_params=[],
                                chi_square=float(r @ r), n_dof=len(r), converged=True, n_iterations=0,
                                method=problem.method)

    u0 = setup.to_internal([setup.values[n] for n in setup.free])

    def residual_u(u: np.ndarray) -> np.ndarray:
        return setup.residuals_free(setup.to_natural(u))

    message = None
    try:
        if problem.method == "lm":
            res = optimize.least_squares(
                residual_u, u0, jac=lambda u: numerical_jacobian(residual_u, u), method="lm",
                ftol=settings.FIT_FTOL, xtol=settings.FIT_XTOL, gtol=settings.FIT_FTOL,
                max_nfev=settings.FIT_MAX_NFEV,
            )
            u_hat, converged, n_iter = res.x, bool(res.status > 0), int(res.njev or 0)
            if not converged:
                message = f"least squares stopped: {res.message}"
        else:
            res = optimize.minimize(
                lambda u: float(np.sum(residual_u(u) ** 2)), u0, method="Nelder-Mead",
                options={"xatol": settings.FIT_XTOL, "fatol": settings.FIT_FTOL,
                         "maxfev": settings.FIT_MAX_NFEV, "maxiter": settings.FIT_MAX_NFEV},
            )
            u_hat, converged, n_iter = res.x, bool(res.success), int(res.nit)
            if not converged:
                message = f"simplex stopped: {res.message}"
    except (ValueError, FloatingPointError) as e:
        logger.error(f"Fit of '{problem.model_id}' failed: {e}", exc_info=True)
        r = setup.residuals(setup.values)
        return models.FitResult(model_id=problem.model_id, params=dict(setup.values),
                                uncertainties={n: math.inf for n in setup.free}, free_params=setup.free,
                                chi_square=float(r @ r), n_dof=len(r) - len(setup.free), converged=False,
                                method=problem.method, message=f"evaluation failed: {e}")

    theta_hat = setup.to_natural(u_hat)
    params = setup.params_with(theta_hat)
    r = setup.residuals(params)
    chi_square = float(r @ r)

    cov, curvature_message = _curvature(setup, theta_hat)
    uncertainties = {n: 0.0 for n in setup.names if n not in setup.free}
    if cov is None:
        converged = False
        message = curvature_message if message is None else f"{message}; {curvature_message}"
        uncertainties.update({n: math.inf for n in setup.free})
        covariance = None
    else:
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))
        uncertainties.update({n: float(s) for n, s in zip(setup.free, sig)})
        covariance = cov.tolist()

    result = models.FitResult(
        model_id=problem.model_id, params=params, uncertainties=uncertainties, free_params=setup.free,
        covariance=covariance, chi_square=chi_square, n_dof=len(r) - len(setup.free),
        converged=converged, n_iterations=n_iter, method=problem.method, message=message,
    )
    if converged:
        logger.info(f"Fit '{problem.model_id}' converged: chi2={chi_square:.4g}, dof={result.n_dof}, "
                    f"iterations={n_iter}")
    else:
        logger.warning(f"Fit '{problem.model_id}' not converged: {message}")
    return result


def residual_table(problem: models.FitProblem, result: models.FitResult):
    """Rows (x, y, sigma_y, model, residual) at the fitted parameters."""
    setup = _Setup(problem.model_copy(update={"initial_params": {}}))
    model_y = setup.exposure * setup.model.evaluate(setup.x, result.params)
    return pd.DataFrame({
        "x": setup.x, "y": setup.y, "sigma_y": setup.sigma, "model": model_y,
        "residual": setup.residuals(result.params),
    })


def _profile_chi2(problem: models.FitProblem, result: models.FitResult, name: str, value: float) -> float:
    fixed = set(result.params) - set(result.free_params)
    fixed.add(name)
    initial = dict(result.params)
    initial[name] = value
    sub = problem.model_copy(update={"initial_params": initial, "fixed": sorted(fixed)})
    return fit(sub).chi_square


def profile_uncertainty(problem: models.FitProblem, result: models.FitResult, param_index: int) -> models.ProfileInterval:
    """Parameter values where the profiled chi-square exceeds its minimum by 1."""
    setup = _Setup(problem)
    if not 0 <= param_index < len(setup.names):
        raise ValueError(f"param_index {param_index} out of range for '{problem.model_id}'")
    name = setup.names[param_index]
    best = result.params[name]
    if name not in result.free_params:
        return models.ProfileInterval(param=name, lo=best, hi=best)
    if not result.converged:
        logger.warning(f"Profiling '{name}' around a non-converged fit: {result.message}")

    transform = setup.transforms[name]
    chi_min = result.chi_square
    scale = result.uncertainties.get(name, math.inf)
    if not math.isfinite(scale) or scale <= 0.0:
        scale = 0.1 * max(abs(best), 1e-3)

    def excess(value: float) -> float:
        return _profile_chi2(problem, result, name, transform.nudge_inside(value)) - chi_min - 1.0

    edges = {}
    for direction, bound in ((-1.0, transform.lower), (1.0, transform.upper)):
        inner = best
        one_sided, edge = True, bound
        for k in range(PROFILE_MAX_DOUBLINGS):
            outer = best + direction * scale * 2.0 ** k
            hits_bound = (direction < 0 and outer <= bound) or (direction > 0 and outer >= bound)
            if hits_bound:
                outer = bound
            if excess(outer) >= 0.0:
                a, b = sorted((transform.nudge_inside(inner), transform.nudge_inside(outer)))
                edge = optimize.brentq(excess, a, b, xtol=1e-10 * max(1.0, abs(best)))
                one_sided = False
                break
            if hits_bound:
                break
            inner = outer
        else:
            edge = best + direction * scale * 2.0 ** (PROFILE_MAX_DOUBLINGS - 1)
        edges[direction] = (edge, one_sided)

    lo, lo_open = edges[-1.0]
    hi, hi_open = edges[1.0]
    logger.info(f"Profile interval for '{name}': [{lo:.6g}, {hi:.6g}] (one-sided lo={lo_open}, hi={hi_open})")
    return models.ProfileInterval(param=name, lo=lo, hi=hi, lo_one_sided=lo_open, hi_one_sided=hi_open)
