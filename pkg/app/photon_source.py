# app/photon_source.py
"""
Closed-form DLCZ source model: two-mode-squeezed pair statistics, ideal
correlation functions and the noise-dressed click-probability model.

All functions are pure; numpy arrays are accepted wherever a probability is.
"""
import math
from typing import Union

import numpy as np
from scipy import constants

from .config import logger
from .models import DlczSourceParams, PairNumberDistribution, DetectionProbabilities

ArrayLike = Union[float, np.ndarray]

# CODATA values via scipy.constants
K_B: float = constants.k
ATOMIC_MASS_UNIT: float = constants.physical_constants["atomic mass constant"][0]
RB87_MASS: float = 86.909180520 * ATOMIC_MASS_UNIT  # kg
WAVELENGTH_PROBE: float = 780.241e-9  # m, Rb D2
WAVELENGTH_COUPLING: float = 480.0e-9  # m, 5P3/2 -> nS Rydberg coupling
TAIL_MASS_TARGET: float = 1e-12


def wavenumber(wavelength: float) -> float:
    return 2.0 * math.pi / wavelength


def dlcz_delta_k(angle_deg: float = 3.4, wavelength: float = WAVELENGTH_PROBE) -> float:
    """Spin-wave wavevector for write/read modes at a small angle to the write beam (1/m)."""
    return wavenumber(wavelength) * math.sin(math.radians(angle_deg))


def rydberg_delta_k(probe: float = WAVELENGTH_PROBE, coupling: float = WAVELENGTH_COUPLING) -> float:
    """Counter-propagating probe/coupling: |k_coupling - k_probe| (1/m)."""
    return abs(wavenumber(coupling) - wavenumber(probe))


def default_n_max(p: float) -> int:
    """Smallest truncation whose geometric tail mass p^(n_max+1) stays below 1e-12."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0,1), got {p}")
    return max(2, int(math.ceil(math.log(TAIL_MASS_TARGET) / math.log(p))))


def pair_number_distribution(p: float, n_max: int) -> PairNumberDistribution:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0,1), got {p}")
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    n = np.arange(n_max + 1)
    probs = (1.0 - p) * np.power(p, n)
    return PairNumberDistribution(probs=list(zip(n.tolist(), probs.tolist())))


def pair_truncation(params: DlczSourceParams) -> int:
    """Configured Fock truncation, or the tail-mass default for params.p."""
    return params.n_max if params.n_max is not None else default_n_max(params.p)


def source_pair_distribution(params: DlczSourceParams) -> PairNumberDistribution:
    """Pair numbers as sampled for this source: the tail mass p^n_max sits on n_max."""
    n_max = pair_truncation(params)
    dist = pair_number_distribution(params.p, n_max)
    probs = list(dist.probs)
    probs[-1] = (n_max, float(params.p) ** n_max)
    return PairNumberDistribution(probs=probs)


def pair_generating_function(p: ArrayLike, x: ArrayLike) -> ArrayLike:
    """E[x^n] for P(n) = (1-p) p^n; exact, no truncation."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    result = (1.0 - p) / (1.0 - p * x)
    return result if result.ndim else float(result)


def truncated_generating_function(p: ArrayLike, x: ArrayLike, n_max: int) -> ArrayLike:
    """E[x^n] for pair numbers capped at n_max (the tail mass p^n_max sits on n_max)."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    px_n = np.power(p * x, n_max)
    result = (1.0 - p) * (1.0 - px_n) / (1.0 - p * x) + px_n
    return result if result.ndim else float(result)


def ideal_cross_correlation(p: ArrayLike) -> ArrayLike:
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("p must lie in (0,1)")
    result = 1.0 + 1.0 / p_arr
    return result if result.ndim else float(result)


def ideal_antibunching(p: ArrayLike) -> ArrayLike:
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise ValueError("p must lie in [0,1]")
    result = 2.0 * p_arr * (2.0 + p_arr) / (1.0 + p_arr) ** 2
    return result if result.ndim else float(result)


def noisy_antibunching(p_w: ArrayLike, c1: float, c2: float) -> ArrayLike:
    """Heralded autocorrelation with p replaced by c1*p(w) + c2 (write-arm calibration)."""
    p_eff = np.clip(c1 * np.asarray(p_w, dtype=float) + c2, 0.0, 1.0)
    return ideal_antibunching(p_eff)


def retrieval_efficiency_at(eta_A: float, tau_dlcz: float, t_A: ArrayLike) -> ArrayLike:
    t = np.asarray(t_A, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t_A must be non-negative")
    result = eta_A * np.exp(-(t / tau_dlcz) ** 2)
    return result if result.ndim else float(result)


def detection_probability_arrays(p, eta_w, eta_r, eta_A_t, p_SE, p_nw, p_nr):
    """Vectorised first-order noise model; eta_A_t is the decayed retrieval efficiency."""
    p_w = p * eta_w + p_nw
    p_r = p * eta_A_t * eta_r + p * (1.0 - eta_A_t) * p_SE * eta_r + p_nr
    p_wr = p_w * (eta_A_t * eta_r + p * (1.0 - eta_A_t) * p_SE * eta_r + p_nr)
    return p_w, p_r, p_wr


def detection_probabilities(params: DlczSourceParams, t_A: float) -> DetectionProbabilities:
    if t_A < 0.0:
        raise ValueError(f"t_A must be non-negative, got {t_A}")
    eta_A_t = retrieval_efficiency_at(params.eta_A, params.tau_dlcz, t_A)
    p_w, p_r, p_wr = detection_probability_arrays(
        params.p, params.eta_w, params.eta_r, eta_A_t, params.p_SE, params.p_nw, params.p_nr
    )
    return DetectionProbabilities(p_w=float(p_w), p_r=float(p_r), p_wr=float(p_wr))


def heralded_read_probability(params: DlczSourceParams, t_A: float) -> float:
    """p(r|w) = p(w,r)/p(w)."""
    return detection_probabilities(params, t_A).p_r_given_w


def motional_coherence_time(mass: float, temperature: float, delta_k: float) -> float:
    """Gaussian 1/e coherence time sqrt(m / (k_B T dk^2)) in seconds."""
    if mass <= 0.0 or temperature <= 0.0 or delta_k <= 0.0:
        raise ValueError(
            f"mass, temperature and delta_k must be positive (got {mass}, {temperature}, {delta_k})"
        )
    tau = math.sqrt(mass / (K_B * temperature * delta_k ** 2))
    logger.debug(f"Motional coherence time at T={temperature:.3e} K, dk={delta_k:.4e} 1/m: {tau * 1e6:.3f} us")
    return tau
