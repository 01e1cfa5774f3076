# app/numba_kernels.py
import numpy as np
import numba

# Click-flag encoding per trial
NO_CLICK = 0
CLICK = 1


@numba.njit(nogil=True)
def window_click_flags(
    trial_indices: np.ndarray,   # int64, one entry per tag
    times: np.ndarray,           # float64 (µs)
    detector_match: np.ndarray,  # bool, tag belongs to the detector of interest
    lo: float,
    hi: float,
    n_trials: int,
) -> np.ndarray:
    """Per-trial flag: 1 if the detector clicked at least once with lo <= t < hi."""
    flags = np.zeros(n_trials, dtype=np.uint8)
    for j in range(trial_indices.shape[0]):
        if detector_match[j]:
            t = times[j]
            if t >= lo and t < hi:
                flags[trial_indices[j]] = CLICK
    return flags


@numba.njit(nogil=True)
def coincidence_peaks(start_flags: np.ndarray, stop_flags: np.ndarray, n_peaks: int) -> np.ndarray:
    """counts[k] = number of trials i with a start in trial i and a stop in trial i + k."""
    n_trials = start_flags.shape[0]
    counts = np.zeros(n_peaks + 1, dtype=np.int64)
    for i in range(n_trials):
        if start_flags[i] == CLICK:
            for k in range(n_peaks + 1):
                j = i + k
                if j >= n_trials:
                    break
                if stop_flags[j] == CLICK:
                    counts[k] += 1
    return counts


@numba.njit(nogil=True, fastmath=True)
def collective_retrieval_factor(velocities: np.ndarray, delta_k: float, times: np.ndarray) -> np.ndarray:
    """|sum_j exp(i dk v_j t)/N|^2 for every t."""
    n_atoms = velocities.shape[0]
    out = np.empty(times.shape[0], dtype=np.float64)
    for m in range(times.shape[0]):
        re = 0.0
        im = 0.0
        scale = delta_k * times[m]
        for j in range(n_atoms):
            phase = scale * velocities[j]
            re += np.cos(phase)
            im += np.sin(phase)
        re /= n_atoms
        im /= n_atoms
        out[m] = re * re + im * im
    return out
