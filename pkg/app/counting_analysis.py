# app/counting_analysis.py
"""
Coincidence-counting estimators computed from raw time-tag streams:
start-stop histograms, g2 normalised to accidental peaks, heralded
probabilities, the heralded autocorrelation alpha, Cauchy-Schwarz ratio and
sliding-window g2. Uncertainties are first-order Poisson propagations.
"""
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .config import logger
from .errors import InsufficientStatisticsError
from .models import TimeTagStream, WindowSpec, Window, CoincidenceHistogram, CorrelationEstimate, MEASUREMENT_QUANTITIES
from .numba_kernels import window_click_flags, coincidence_peaks

ESTIMATE_COLUMNS = ["quantity", "value", "sigma", "n_coinc", "scenario"]
DEFAULT_WINDOWED_WIDTH = 0.123  # µs


def poisson_upper_limit(k: int, cl: float = 0.68) -> float:
    """One-sided upper limit on a Poisson mean after observing k counts."""
    return 0.5 * float(stats.chi2.ppf(cl, 2 * (k + 1)))


def click_flags(stream: TimeTagStream, detector: str, window: Window) -> np.ndarray:
    """uint8 flag per trial: detector clicked inside the window."""
    lo, hi = window.bounds()
    if lo < 0.0 or hi > stream.trial_period:
        raise ValueError(f"window [{lo}, {hi}] lies outside the trial period {stream.trial_period}")
    tags = stream.tags
    if len(tags) == 0:
        return np.zeros(stream.trial_count, dtype=np.uint8)
    return window_click_flags(
        tags["trial"].to_numpy(np.int64), tags["t_us"].to_numpy(np.float64),
        (tags["detector"] == detector).to_numpy(), lo, hi, stream.trial_count,
    )


def _binomial_estimate(quantity: str, hits: int, trials: int) -> CorrelationEstimate:
    if trials == 0:
        raise InsufficientStatisticsError(f"{quantity}: no trials to normalise by")
    p = hits / trials
    return CorrelationEstimate(quantity=quantity, value=p, sigma=math.sqrt(p * (1.0 - p) / trials), n_coinc=hits)


def click_probability(stream: TimeTagStream, detector: str, window: Window, quantity: str = "") -> CorrelationEstimate:
    flags = click_flags(stream, detector, window)
    return _binomial_estimate(quantity or f"p_{detector}", int(flags.sum()), stream.trial_count)


def start_stop_histogram(stream: TimeTagStream, w: WindowSpec, start_det: str = "D1", stop_det: str = "D2",
                         start_window: Optional[Window] = None, stop_window: Optional[Window] = None) -> CoincidenceHistogram:
    """Peak k counts a start click in trial i and a stop click in trial i + k."""
    start = click_flags(stream, start_det, start_window or w.write_window)
    stop = click_flags(stream, stop_det, stop_window or w.read_window)
    counts = coincidence_peaks(start, stop, w.n_accidental_peaks)
    return CoincidenceHistogram(peak_counts=[int(c) for c in counts], n_starts=int(start.sum()))


def g2_from_histogram(h: CoincidenceHistogram, quantity: str = "g2") -> CorrelationEstimate:
    """C0 over the mean of the accidental peaks C1..CK."""
    c0 = h.peak_counts[0]
    accidentals = h.peak_counts[1:]
    acc_sum = sum(accidentals)
    if not accidentals or acc_sum == 0:
        raise InsufficientStatisticsError(f"{quantity}: no accidental coincidences")
    mean_acc = acc_sum / len(accidentals)
    if c0 == 0:
        upper = poisson_upper_limit(0) / mean_acc
        return CorrelationEstimate(quantity=quantity, value=0.0, sigma=upper, n_coinc=0,
                                   one_sided=True, sigma_upper=upper)
    value = c0 / mean_acc
    sigma = value * math.sqrt(1.0 / c0 + 1.0 / acc_sum)
    return CorrelationEstimate(quantity=quantity, value=value, sigma=sigma, n_coinc=c0)


def cross_correlation(stream: TimeTagStream, w: WindowSpec, start_det: str = "D1", stop_det: str = "D2") -> CorrelationEstimate:
    return g2_from_histogram(start_stop_histogram(stream, w, start_det, stop_det), quantity="g2_wr")


def conditional_retrieval(stream: TimeTagStream, w: WindowSpec, herald_det: str = "D1",
                          read_dets: Sequence[str] = ("D2",)) -> CorrelationEstimate:
    """p(r|w): fraction of heralded trials with a read click in the same trial."""
    heralds = click_flags(stream, herald_det, w.write_window).astype(bool)
    n_heralds = int(heralds.sum())
    if n_heralds == 0:
        raise InsufficientStatisticsError("p_r_given_w: no heralding write clicks")
    read = np.zeros(stream.trial_count, dtype=bool)
    for det in read_dets:
        read |= click_flags(stream, det, w.read_window).astype(bool)
    return _binomial_estimate("p_r_given_w", int((heralds & read).sum()), n_heralds)


def storage_efficiency_estimate(with_memory: CorrelationEstimate, without_memory: CorrelationEstimate) -> CorrelationEstimate:
    """eta_B = p(r|w) / p0(r|w)."""
    if without_memory.value <= 0.0:
        raise InsufficientStatisticsError("eta_B: reference p0(r|w) is zero")
    value = with_memory.value / without_memory.value
    # d(a/b) = sqrt((da/b)^2 + (a db/b^2)^2)
    sigma = math.hypot(with_memory.sigma / without_memory.value,
                       with_memory.value * without_memory.sigma / without_memory.value ** 2)
    return CorrelationEstimate(quantity="eta_B", value=value, sigma=sigma, n_coinc=with_memory.n_coinc)


def antibunching_estimator(stream: TimeTagStream, w: WindowSpec, herald_det: str = "D1",
                           split_dets: Tuple[str, str] = ("D3", "D4")) -> CorrelationEstimate:
    """alpha = p(r3,r4|w) / (p(r3|w) p(r4|w)) = N34 * H / (N3 * N4)."""
    herald = click_flags(stream, herald_det, w.write_window).astype(bool)
    r3 = click_flags(stream, split_dets[0], w.read_window).astype(bool)
    r4 = click_flags(stream, split_dets[1], w.read_window).astype(bool)
    h = int(herald.sum())
    if h == 0:
        raise InsufficientStatisticsError("alpha: no heralding write clicks")
    n3 = int((herald & r3).sum())
    n4 = int((herald & r4).sum())
    n34 = int((herald & r3 & r4).sum())
    if n3 == 0 or n4 == 0:
        raise InsufficientStatisticsError(f"alpha: heralded single counts N3={n3}, N4={n4}")
    scale = h / (n3 * n4)
    if n34 == 0:
        upper = poisson_upper_limit(0) * scale
        return CorrelationEstimate(quantity="alpha", value=0.0, sigma=upper, n_coinc=0,
                                   one_sided=True, sigma_upper=upper)
    value = n34 * scale
    sigma = value * math.sqrt(1.0 / n34 + 1.0 / n3 + 1.0 / n4 + 1.0 / h)
    return CorrelationEstimate(quantity="alpha", value=value, sigma=sigma, n_coinc=n34)


def autocorrelation_estimator(stream: TimeTagStream, w: WindowSpec, detectors: Tuple[str, str] = ("D3", "D4"),
                              role: str = "read") -> CorrelationEstimate:
    """Unheralded g2 of one field split over two detectors, normalised to accidental peaks."""
    window = w.read_window if role == "read" else w.write_window
    h = start_stop_histogram(stream, w, detectors[0], detectors[1], start_window=window, stop_window=window)
    return g2_from_histogram(h, quantity="g2_rr" if role == "read" else "g2_ww")


def cauchy_schwarz(gwr: CorrelationEstimate, gww: CorrelationEstimate, grr: CorrelationEstimate) -> CorrelationEstimate:
    """R = g_wr^2 / (g_ww g_rr); R > 1 violates the classical bound."""
    if gww.value <= 0.0 or grr.value <= 0.0:
        raise ValueError("autocorrelations must be positive")
    value = gwr.value ** 2 / (gww.value * grr.value)
    if gwr.value == 0.0:
        return CorrelationEstimate(quantity="R", value=0.0, sigma=0.0, n_coinc=gwr.n_coinc)
    rel = math.sqrt((2.0 * gwr.sigma / gwr.value) ** 2 + (gww.sigma / gww.value) ** 2 + (grr.sigma / grr.value) ** 2)
    return CorrelationEstimate(quantity="R", value=value, sigma=value * rel, n_coinc=gwr.n_coinc)


def windowed_g2(stream: TimeTagStream, w: WindowSpec, t_w: float, width: float = DEFAULT_WINDOWED_WIDTH,
                start_det: str = "D1", stop_det: str = "D2") -> CorrelationEstimate:
    """g2_wr with the stop window replaced by [t_w - width/2, t_w + width/2]."""
    stop_window = Window(center=t_w, width=width)
    h = start_stop_histogram(stream, w, start_det, stop_det, stop_window=stop_window)
    estimate = g2_from_histogram(h, quantity="g2_wr_windowed")
    logger.debug(f"Windowed g2 at t_w={t_w:.3f} us: {estimate.value:.3f} +/- {estimate.sigma:.3f} ({h.peak_counts})")
    return estimate


def click_time_histogram(stream: TimeTagStream, w: WindowSpec, detector: str = "D2", bin_width: float = 0.02,
                         herald_det: str = "D1", t_range: Optional[Tuple[float, float]] = None) -> pd.DataFrame:
    """Counts per time bin of `detector` in heralded trials, also normalised per herald."""
    heralds = click_flags(stream, herald_det, w.write_window).astype(bool)
    n_heralds = int(heralds.sum())
    if n_heralds == 0:
        raise InsufficientStatisticsError("click-time histogram: no heralding write clicks")
    lo, hi = t_range if t_range is not None else w.read_window.bounds()
    edges = np.arange(lo, hi + 0.5 * bin_width, bin_width)
    tags = stream.tags
    mask = (tags["detector"] == detector).to_numpy() & heralds[tags["trial"].to_numpy()]
    counts, _ = np.histogram(tags["t_us"].to_numpy()[mask], bins=edges)
    return pd.DataFrame({
        "t_us": 0.5 * (edges[:-1] + edges[1:]),
        "counts": counts,
        "per_herald": counts / n_heralds,
        "sigma": np.sqrt(counts) / n_heralds,
    })

# --- Standard estimate sets per measurement mode ---

QUANTITY_ESTIMATORS: Dict[str, Callable[[TimeTagStream, WindowSpec], CorrelationEstimate]] = {
    "p_w": lambda s, w: click_probability(s, "D1", w.write_window, "p_w"),
    "p_r": lambda s, w: click_probability(s, "D2", w.read_window, "p_r"),
    "g2_wr": lambda s, w: cross_correlation(s, w),
    "p_r_given_w": lambda s, w: conditional_retrieval(s, w),
    "alpha": lambda s, w: antibunching_estimator(s, w),
    "g2_rr": lambda s, w: autocorrelation_estimator(s, w, ("D3", "D4"), role="read"),
    "g2_ww": lambda s, w: autocorrelation_estimator(s, w, ("D3", "D4"), role="write"),
}

def standard_estimates(stream: TimeTagStream, w: WindowSpec, measurement: str,
                       strict: bool = False) -> List[CorrelationEstimate]:
    """All estimators meaningful for the measurement mode; insufficient ones become NaN unless strict."""
    if measurement not in MEASUREMENT_QUANTITIES:
        raise ValueError(f"Unknown measurement mode '{measurement}'")
    estimates = []
    for quantity in MEASUREMENT_QUANTITIES[measurement]:
        try:
            estimate = QUANTITY_ESTIMATORS[quantity](stream, w)
        except InsufficientStatisticsError as e:
            if strict:
                raise
            logger.warning(f"Insufficient statistics for '{quantity}' in '{stream.scenario_id}': {e}")
            estimate = CorrelationEstimate(quantity=quantity, value=float("nan"), sigma=0.0, n_coinc=0)
        estimate.quantity = quantity
        estimates.append(estimate)
    return estimates


def estimate_table(estimates: List[CorrelationEstimate], scenario: str) -> pd.DataFrame:
    return pd.DataFrame(
        [[e.quantity, e.value, e.sigma, e.n_coinc, scenario] for e in estimates],
        columns=ESTIMATE_COLUMNS,
    )
