# app/rydberg_memory.py
"""
Site-B physics: ladder-EIT susceptibility and transmission, slow-light delay,
storage efficiency with motional dephasing and hyperfine beating, waveform
bookkeeping, linewidth deconvolution and the blockade saturation law.

Rates (gamma, omega_c, gamma_gR, delta) are ordinary frequencies in MHz and
times are in µs unless a docstring says otherwise.
"""
import math
from typing import Union

import numpy as np
from scipy import constants, integrate, optimize

from .config import logger
from .models import EitMediumParams, StorageParams, PulseWaveform, SaturationParams, EitWindow, MemoryStage
from .numba_kernels import collective_retrieval_factor
from .photon_source import K_B, RB87_MASS

ArrayLike = Union[float, np.ndarray]
POLE_TOLERANCE = 1e-30


def _maybe_scalar(value: np.ndarray) -> ArrayLike:
    return value if np.ndim(value) else value.item()


def susceptibility(medium: EitMediumParams, delta: ArrayLike) -> ArrayLike:
    """chi(delta) = OD*Gamma/(2 k_p l) * (delta + i gamma_gR) / [(Gamma/2 - i delta)(gamma_gR - i delta) + (Omega_c/2)^2]."""
    d = np.asarray(delta, dtype=np.float64)
    prefactor = medium.od * medium.gamma / (2.0 * medium.k_p * medium.length)
    if medium.omega_c == 0.0:
        # (delta + i gamma_gR) = i (gamma_gR - i delta) cancels exactly against the Rydberg factor
        chi = 1j * prefactor / (0.5 * medium.gamma - 1j * d)
        return _maybe_scalar(chi)
    denominator = (0.5 * medium.gamma - 1j * d) * (medium.gamma_gR - 1j * d) + (0.5 * medium.omega_c) ** 2
    if np.any(np.abs(denominator) < POLE_TOLERANCE):
        raise ValueError("susceptibility pole: unphysical medium parameters")
    chi = prefactor * (d + 1j * medium.gamma_gR) / denominator
    return _maybe_scalar(chi)


def transmission(medium: EitMediumParams, delta: ArrayLike) -> ArrayLike:
    chi = np.asarray(susceptibility(medium, delta))
    result = np.exp(-medium.k_p * medium.length * chi.imag)
    return _maybe_scalar(result)


def group_delay(medium: EitMediumParams) -> float:
    """Slow-light delay OD*Gamma/Omega_c^2 in angular units, i.e. OD*Gamma/(2*pi*Omega_c^2) µs for MHz inputs."""
    if medium.omega_c <= 0.0:
        raise ValueError("group delay diverges for omega_c = 0")
    return medium.od * medium.gamma / (2.0 * math.pi * medium.omega_c ** 2)


def dark_state_mixing_angle(medium: EitMediumParams) -> float:
    """Polariton mixing angle (rad) with tan^2(theta) = n_gr = c * delay / l."""
    delay_s = group_delay(medium) * 1e-6
    n_gr = constants.c * delay_s / medium.length
    return math.atan(math.sqrt(n_gr))


def eit_window(medium: EitMediumParams) -> EitWindow:
    """Peak transparency and full width of the EIT feature around delta = 0."""
    if medium.omega_c <= 0.0:
        raise ValueError("no transparency window without coupling light")
    peak = float(transmission(medium, 0.0))
    background = math.exp(-medium.od)
    search_hi = max(medium.gamma, 2.0 * medium.omega_c)
    res = optimize.minimize_scalar(lambda d: transmission(medium, d), bounds=(1e-9, search_hi), method="bounded",
                                   options={"xatol": 1e-10})
    delta_min, t_min = float(res.x), float(res.fun)
    half = 0.5 * (peak + t_min)
    half_width = optimize.brentq(lambda d: transmission(medium, d) - half, 0.0, delta_min, xtol=1e-12)
    return EitWindow(peak_transmission=peak, background_transmission=background,
                     fwhm=2.0 * half_width, delta_min=delta_min)


def storage_efficiency(params: StorageParams, t_T: ArrayLike) -> ArrayLike:
    """eta0 * exp(-t^2/tau_R^2) * |p_F1 + (1 - p_F1) exp(-2 pi i dF t)|^2 with dF in kHz and t in µs."""
    t = np.asarray(t_T, dtype=np.float64)
    if np.any(t < 0.0):
        raise ValueError("t_T must be non-negative")
    phase = 2.0 * math.pi * params.delta_F * 1e-3 * t
    beat = np.abs(params.p_F1 + (1.0 - params.p_F1) * np.exp(-1j * phase)) ** 2
    result = params.eta0 * np.exp(-(t / params.tau_R) ** 2) * beat
    return _maybe_scalar(result)


def _centre_of_mass(wf: PulseWaveform) -> float:
    t, f = wf.times, wf.intensities
    if t.size == 1:
        if f[0] <= 0.0:
            raise ValueError("waveform has zero mass")
        return float(t[0])
    mass = integrate.trapezoid(f, t)
    if mass <= 0.0:
        raise ValueError("waveform has zero mass")
    return float(integrate.trapezoid(f * t, t) / mass)


def centre_of_mass_delay(f_in: PulseWaveform, f_out: PulseWaveform) -> float:
    return _centre_of_mass(f_out) - _centre_of_mass(f_in)


def memory_linewidth_deconvolve(fwhm_total: float, fwhm_eit: float) -> float:
    if fwhm_eit <= 0.0 or fwhm_total <= fwhm_eit:
        raise ValueError(f"need fwhm_total > fwhm_eit > 0, got ({fwhm_total}, {fwhm_eit})")
    return math.sqrt(fwhm_total ** 2 - fwhm_eit ** 2)


def nonlinear_retrieval(n_in: ArrayLike, sat: SaturationParams) -> ArrayLike:
    n = np.asarray(n_in, dtype=np.float64)
    if np.any(n < 0.0):
        raise ValueError("n_in must be non-negative")
    result = sat.n_max * sat.t_lin * -np.expm1(-n / sat.n_max)
    return _maybe_scalar(result)


def coherent_input_retrieval(n_mean: ArrayLike, sat: SaturationParams) -> ArrayLike:
    """Mean output for a weak coherent input: E[nonlinear_retrieval(n)] over Poisson n with mean n_mean."""
    n = np.asarray(n_mean, dtype=np.float64)
    if np.any(n < 0.0):
        raise ValueError("n_mean must be non-negative")
    result = sat.n_max * sat.t_lin * -np.expm1(n * np.expm1(-1.0 / sat.n_max))
    return _maybe_scalar(result)


def simulate_collective_dephasing(n_atoms: int, temperature: float, delta_k: float, t: ArrayLike,
                                  rng_seed: int, mass: float = RB87_MASS) -> ArrayLike:
    """
    Monte Carlo retrieval factor |sum_j exp(i dk v_j t)/N|^2 for thermal velocities.
    Times here are in seconds; one velocity sample serves every requested time.
    """
    if n_atoms < 2:
        raise ValueError(f"n_atoms must be >= 2, got {n_atoms}")
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    if n_atoms < 1000:
        logger.warning(f"Collective dephasing with only {n_atoms} atoms; finite-N bias is 1/N.")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng_seed)))
    sigma_v = math.sqrt(K_B * temperature / mass)
    velocities = rng.normal(0.0, sigma_v, size=n_atoms)
    times = np.atleast_1d(np.asarray(t, dtype=np.float64))
    factors = collective_retrieval_factor(velocities, float(delta_k), times)
    return factors if np.ndim(t) else float(factors[0])

# --- Waveforms ---

def gaussian_waveform(center: float, fwhm: float, bin_width: float, span_sigmas: float = 5.0,
                      area: float = 1.0) -> PulseWaveform:
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    half_bins = int(math.ceil(span_sigmas * sigma / bin_width))
    times = center + bin_width * np.arange(-half_bins, half_bins + 1)
    shape = np.exp(-0.5 * ((times - center) / sigma) ** 2)
    return PulseWaveform.from_arrays(times, area * shape / shape.sum(), bin_width)


def shifted_waveform(wf: PulseWaveform, delay: float, scale: float = 1.0) -> PulseWaveform:
    return PulseWaveform.from_arrays(wf.times + delay, wf.intensities * scale, wf.bin_width)


def slow_light_waveform(f_in: PulseWaveform, medium: EitMediumParams, memory: MemoryStage) -> PulseWaveform:
    delay = memory.slow_delay if memory.slow_delay is not None else group_delay(medium)
    return shifted_waveform(f_in, delay, memory.slow_transmission)


def leakage_waveform(f_in: PulseWaveform, memory: MemoryStage) -> PulseWaveform:
    """Part of the slowed pulse leaving the medium before the coupling is switched off."""
    return shifted_waveform(f_in, 0.0, memory.leakage_fraction * memory.slow_transmission)


def retrieved_waveform(f_in: PulseWaveform, storage: StorageParams, t_B: float) -> PulseWaveform:
    t_T = t_B + storage.t_off
    return shifted_waveform(f_in, t_T, float(storage_efficiency(storage, t_T)))
