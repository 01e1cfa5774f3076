# app/detection_sim.py
"""
Monte Carlo engine producing raw click streams trial by trial, plus its exact
analytic twin for threshold detectors.

Each trial draws a pair number n, routes the n write photons to the write
detectors and the n read-mode excitations through the DLCZ retrieval, site B
and the read path. Random (spontaneous-emission) read photons come from an
independent pair population, so they carry no correlation with the herald.
Trials are grouped in fixed-size blocks; block b uses a Philox stream keyed by
(seed, b), so any thread count gives the same stream.
"""
import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import settings, logger
from .errors import ConfigError
from .models import (ScenarioConfig, SpdParams, PulseWaveform, TimeTagStream, WindowSpec, Window,
                     DETECTOR_IDS)
from . import photon_source, rydberg_memory

# Detector routing per measurement mode: detector -> beam-splitter share
WRITE_ROUTING: Dict[str, Dict[str, float]] = {
    "direct": {"D1": 1.0},
    "hbt_read": {"D1": 1.0},
    "hbt_write": {"D3": 0.5, "D4": 0.5},
}
READ_ROUTING: Dict[str, Dict[str, float]] = {
    "direct": {"D2": 1.0},
    "hbt_read": {"D3": 0.5, "D4": 0.5},
    "hbt_write": {"D2": 1.0},
}

# --- Sampling primitives ---

def sample_pairs(p: float, size: int, rng: np.random.Generator, n_max: Optional[int] = None) -> np.ndarray:
    """Inverse-CDF draws of n with P(n) = (1-p) p^n, capped at n_max when given."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0,1), got {p}")
    u = 1.0 - rng.random(size)  # (0, 1]
    n = np.floor(np.log(u) / math.log(p)).astype(np.int64)
    return n if n_max is None else np.minimum(n, n_max)


def sample_pair(p: float, rng: np.random.Generator) -> Tuple[int, int]:
    n = int(sample_pairs(p, 1, rng)[0])
    return n, n


def thin_and_darken(n: int, spd: SpdParams, rng: np.random.Generator) -> bool:
    if n < 0:
        raise ValueError("photon number must be non-negative")
    detected = rng.binomial(n, spd.efficiency) >= 1 if n > 0 else False
    dark = rng.random() < spd.dark_prob_per_gate
    return bool(detected or dark)


class GatedSampler:
    """Inverse-CDF sampler of a piecewise-constant waveform restricted to [lo, hi)."""

    def __init__(self, wf: PulseWaveform, lo: float = -math.inf, hi: float = math.inf):
        centers, intensities, bw = wf.times, wf.intensities, wf.bin_width
        left = np.clip(centers - 0.5 * bw, lo, hi)
        right = np.clip(centers + 0.5 * bw, lo, hi)
        weights = intensities * (right - left) / bw
        total = float(intensities.sum())
        if total <= 0.0:
            raise ValueError("waveform has zero mass")
        self.left = left
        self.width = right - left
        self.weights = weights
        self.cdf = np.cumsum(weights)
        self.acceptance = float(self.cdf[-1] / total) if self.cdf.size else 0.0

    def share(self, lo: float, hi: float) -> float:
        """Fraction of the sampled mass inside [lo, hi)."""
        total = float(self.cdf[-1]) if self.cdf.size else 0.0
        if total <= 0.0:
            return 0.0
        overlap = np.clip(np.minimum(self.left + self.width, hi) - np.maximum(self.left, lo), 0.0, None)
        frac = np.divide(overlap, self.width, out=np.zeros_like(overlap), where=self.width > 0.0)
        return float(np.dot(self.weights, frac) / total)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size == 0:
            return np.empty(0, dtype=np.float64)
        if self.cdf[-1] <= 0.0:
            raise ValueError("no waveform mass inside the gate")
        u = rng.random(size) * self.cdf[-1]
        idx = np.searchsorted(self.cdf, u, side="right")
        idx = np.minimum(idx, self.cdf.size - 1)
        return self.left[idx] + rng.random(size) * self.width[idx]


def waveform_time_sampler(shape: PulseWaveform, rng: np.random.Generator, size: Optional[int] = None):
    sampler = GatedSampler(shape)
    draws = sampler.sample(rng, 1 if size is None else size)
    return float(draws[0]) if size is None else draws

# --- Scenario plan shared by the Monte Carlo and the analytic twin ---

@dataclass
class _DetectorPlan:
    detector: str
    role: str                      # "write" or "read"
    gate: Tuple[float, float]
    background: float
    write_prob: float = 0.0
    dir_probs: List[float] = field(default_factory=list)   # one per directional component
    rand_prob: float = 0.0
    dir_samplers: List[GatedSampler] = field(default_factory=list)
    rand_sampler: Optional[GatedSampler] = None
    write_sampler: Optional[GatedSampler] = None

    @property
    def dir_total(self) -> float:
        return float(sum(self.dir_probs))


@dataclass
class TrialPlan:
    p: float
    n_max: int
    detectors: List[_DetectorPlan]
    windows: WindowSpec
    n_components: int

    def by_id(self, detector: str) -> _DetectorPlan:
        for plan in self.detectors:
            if plan.detector == detector:
                return plan
        raise ValueError(f"detector {detector} is not used by this measurement")


def read_pulse_delay(config: ScenarioConfig) -> float:
    """Delay of the expected read photon at D2 relative to the site-A read pulse (µs)."""
    memory = config.memory
    if memory.mode == "slow_light":
        return memory.slow_delay if memory.slow_delay is not None else rydberg_memory.group_delay(config.medium)
    if memory.mode == "storage":
        return memory.t_B + config.storage.t_off
    return 0.0


def resolve_windows(config: ScenarioConfig) -> WindowSpec:
    """Fills unset window centres with the expected write and read pulse times."""
    timing = config.timing
    write_center = config.windows.write_window.center
    if write_center is None:
        write_center = timing.write_time
    read_center = config.windows.read_window.center
    if read_center is None:
        read_center = timing.write_time + timing.t_A + read_pulse_delay(config)
    return WindowSpec(
        write_window=Window(center=write_center, width=config.windows.write_window.width),
        read_window=Window(center=read_center, width=config.windows.read_window.width),
        n_accidental_peaks=config.windows.n_accidental_peaks,
    )


def _gate(config: ScenarioConfig, windows: WindowSpec, detector: str, role: str) -> Tuple[float, float]:
    window = windows.write_window if role == "write" else windows.read_window
    width = config.detectors[detector].gate_width or window.width
    return window.center - 0.5 * width, window.center + 0.5 * width


def validate_scenario(config: ScenarioConfig) -> None:
    """Timing and routing checks that need the derived delays; raises ConfigError."""
    problems = []
    try:
        windows = resolve_windows(config)
    except ValueError as e:
        raise ConfigError("Invalid scenario timing", [f"memory: {e}"])
    period = config.timing.trial_period
    routing = {**{d: "write" for d in WRITE_ROUTING[config.measurement]},
               **{d: "read" for d in READ_ROUTING[config.measurement]}}
    for detector, role in routing.items():
        if detector not in config.detectors:
            problems.append(f"detectors.{detector}: required by measurement '{config.measurement}'")
            continue
        lo, hi = _gate(config, windows, detector, role)
        if lo < 0.0 or hi > period:
            problems.append(f"detectors.{detector}: gate [{lo:.4f}, {hi:.4f}] us outside trial period [0, {period}] us")
    for name, window in (("write_window", windows.write_window), ("read_window", windows.read_window)):
        lo, hi = window.bounds()
        if lo < 0.0 or hi > period:
            problems.append(f"windows.{name}: [{lo:.4f}, {hi:.4f}] us outside trial period [0, {period}] us")
    if config.memory.mode == "storage":
        t_T = config.memory.t_B + config.storage.t_off
        share = float(rydberg_memory.storage_efficiency(config.storage, t_T)) + \
            config.memory.leakage_fraction * config.memory.slow_transmission
        if share > 1.0:
            problems.append(f"memory: retrieved plus leaked share {share:.4f} exceeds 1")
    if problems:
        raise ConfigError("Inconsistent scenario", problems)


def build_trial_plan(config: ScenarioConfig) -> TrialPlan:
    validate_scenario(config)
    windows = resolve_windows(config)
    source, timing, memory = config.source, config.timing, config.memory
    eta_A_t = photon_source.retrieval_efficiency_at(source.eta_A, source.tau_dlcz, timing.t_A)

    write_wf = rydberg_memory.gaussian_waveform(timing.write_time, timing.write_fwhm, timing.bin_width)
    read_in = rydberg_memory.gaussian_waveform(timing.write_time + timing.t_A, timing.read_fwhm, timing.bin_width)
    if memory.mode == "bypass":
        components = [(read_in, 1.0)]
    elif memory.mode == "slow_light":
        slowed = rydberg_memory.slow_light_waveform(read_in, config.medium, memory)
        components = [(slowed, memory.slow_transmission)]
    else:
        retrieved = rydberg_memory.retrieved_waveform(read_in, config.storage, memory.t_B)
        t_T = memory.t_B + config.storage.t_off
        components = [
            (retrieved, float(rydberg_memory.storage_efficiency(config.storage, t_T))),
            (read_in, memory.leakage_fraction * memory.slow_transmission),
        ]

    plans = []
    for detector in DETECTOR_IDS:
        if detector in WRITE_ROUTING[config.measurement]:
            role, share = "write", WRITE_ROUTING[config.measurement][detector]
        elif detector in READ_ROUTING[config.measurement]:
            role, share = "read", READ_ROUTING[config.measurement][detector]
        else:
            continue
        spd = config.detectors[detector]
        gate = _gate(config, windows, detector, role)
        stray = source.p_nw if role == "write" else source.p_nr
        plan = _DetectorPlan(detector=detector, role=role, gate=gate,
                             background=1.0 - (1.0 - spd.dark_prob_per_gate) * (1.0 - stray))
        if role == "write":
            plan.write_sampler = GatedSampler(write_wf, *gate)
            plan.write_prob = source.eta_w * share * spd.efficiency * plan.write_sampler.acceptance
        else:
            path = source.eta_r * share * spd.efficiency
            for wf, weight in components:
                sampler = GatedSampler(wf, *gate)
                plan.dir_samplers.append(sampler)
                plan.dir_probs.append(eta_A_t * weight * path * sampler.acceptance)
            # random emission is off-resonant at site B and crosses it unslowed
            plan.rand_sampler = GatedSampler(read_in, *gate)
            plan.rand_prob = (1.0 - eta_A_t) * source.p_SE * path * plan.rand_sampler.acceptance
        plans.append(plan)
    return TrialPlan(p=source.p, n_max=photon_source.pair_truncation(source), detectors=plans,
                     windows=windows, n_components=len(components))

# --- Analytic twin ---

def _no_click_probability(plan: TrialPlan, subset: Sequence[_DetectorPlan]) -> float:
    """Probability that none of the detectors in `subset` clicks in a trial."""
    write_sum = sum(d.write_prob for d in subset)
    dir_sum = sum(d.dir_total for d in subset)
    rand_sum = sum(d.rand_prob for d in subset)
    background = float(np.prod([1.0 - d.background for d in subset])) if subset else 1.0
    pair_factor = (1.0 - write_sum) * (1.0 - dir_sum)
    return (background * photon_source.truncated_generating_function(plan.p, pair_factor, plan.n_max)
            * photon_source.truncated_generating_function(plan.p, 1.0 - rand_sum, plan.n_max))


def predicted_click_probability(config: ScenarioConfig, detectors: Sequence[str],
                                plan: Optional[TrialPlan] = None) -> float:
    """Exact probability that every listed detector clicks in one trial (inclusion-exclusion)."""
    plan = plan or build_trial_plan(config)
    members = [plan.by_id(d) for d in detectors]
    total = 0.0
    for size in range(len(members) + 1):
        for subset in itertools.combinations(members, size):
            total += (-1) ** size * _no_click_probability(plan, subset)
    return total


def predicted_estimates(config: ScenarioConfig) -> Dict[str, float]:
    """Expected values of the click-level estimators for this scenario."""
    plan = build_trial_plan(config)
    prob = lambda *dets: predicted_click_probability(config, dets, plan)
    out: Dict[str, float] = {}
    if config.measurement == "direct":
        p_w, p_r, p_wr = prob("D1"), prob("D2"), prob("D1", "D2")
        out.update(p_w=p_w, p_r=p_r, p_wr=p_wr, g2_wr=p_wr / (p_w * p_r), p_r_given_w=p_wr / p_w)
    elif config.measurement == "hbt_read":
        p_w = prob("D1")
        p_w3, p_w4, p_w34 = prob("D1", "D3"), prob("D1", "D4"), prob("D1", "D3", "D4")
        p_3, p_4, p_34 = prob("D3"), prob("D4"), prob("D3", "D4")
        out.update(p_w=p_w, alpha=p_w34 * p_w / (p_w3 * p_w4), g2_rr=p_34 / (p_3 * p_4))
    else:
        p_3, p_4, p_34 = prob("D3"), prob("D4"), prob("D3", "D4")
        out.update(p_w=p_3 + p_4 - p_34, p_r=prob("D2"), g2_ww=p_34 / (p_3 * p_4))
    return out


def _uniform_share(gate: Tuple[float, float], lo: float, hi: float) -> float:
    g_lo, g_hi = gate
    return max(0.0, min(g_hi, hi) - max(g_lo, lo)) / (g_hi - g_lo)


def predicted_windowed_estimates(config: ScenarioConfig, stop_window: Window, start_det: str = "D1",
                                 stop_det: str = "D2") -> Dict[str, float]:
    """
    Expected p_w, p_r, p_wr and g2_wr when the stop clicks are cut to `stop_window`
    after gating, as windowed_g2 does on a simulated stream.

    Each detector records one click per gate. The first source that hits, in the
    order write, directional components, random emission, background, sets the click
    time, drawn from that source's gated time distribution. A window cut from a wider
    gate therefore keeps each source's winning probability times its share of the window.
    """
    plan = build_trial_plan(config)
    start, stop = plan.by_id(start_det), plan.by_id(stop_det)
    if start.role != "write" or stop.role != "read":
        raise ValueError(f"{start_det} must detect write photons and {stop_det} read photons")
    G = lambda x: photon_source.truncated_generating_function(plan.p, x, plan.n_max)
    lo, hi = stop_window.bounds()
    w_lo, w_hi = plan.windows.write_window.bounds()

    no_rand = G(1.0 - stop.rand_prob)
    cumulative = np.concatenate([[0.0], np.cumsum(stop.dir_probs)])
    dir_shares = [s.share(lo, hi) for s in stop.dir_samplers]
    rand_share = stop.rand_sampler.share(lo, hi)
    bg_share = _uniform_share(stop.gate, lo, hi)

    def stop_in_window(write_factor: float) -> Tuple[float, float]:
        """P(stop click in window [and no write hit]) and its uncorrelated part."""
        none_before = [G(write_factor * (1.0 - q)) for q in cumulative]
        directional = sum(f * (none_before[c] - none_before[c + 1]) for c, f in enumerate(dir_shares))
        rand = rand_share * none_before[-1] * (1.0 - no_rand)
        background = bg_share * none_before[-1] * no_rand * stop.background
        return directional + rand + background, rand + background

    p_r, noise = stop_in_window(1.0)
    no_write = G(1.0 - start.write_prob)
    stop_without_write, _ = stop_in_window(1.0 - start.write_prob)
    f_write = start.write_sampler.share(w_lo, w_hi)
    f_start_bg = _uniform_share(start.gate, w_lo, w_hi)
    p_w = f_write * (1.0 - no_write) + f_start_bg * start.background * no_write
    p_wr = f_write * (p_r - stop_without_write) + f_start_bg * start.background * stop_without_write
    g2 = p_wr / (p_w * p_r) if p_w > 0.0 and p_r > 0.0 else math.nan
    return {"p_w": p_w, "p_r": p_r, "p_wr": p_wr, "g2_wr": g2,
            "noise_fraction": noise / p_r if p_r > 0.0 else math.nan}

# --- Monte Carlo ---

def _block_rng(seed: int, block_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block_index,))))


def _multinomial(rng: np.random.Generator, counts: np.ndarray, probs: Sequence[float]) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    rest = max(0.0, 1.0 - float(probs.sum()))
    if counts.size == 0:
        return np.zeros((0, probs.size), dtype=np.int64)
    return rng.multinomial(counts, np.append(probs, rest))[:, :probs.size]


def _simulate_block(plan: TrialPlan, seed: int, block_index: int, first_trial: int, size: int) -> pd.DataFrame:
    rng = _block_rng(seed, block_index)
    n = sample_pairs(plan.p, size, rng, plan.n_max)
    n_rand = sample_pairs(plan.p, size, rng, plan.n_max)
    n_det = len(plan.detectors)
    n_comp = plan.n_components

    paired = np.flatnonzero(n > 0)
    write_counts = _multinomial(rng, n[paired], [d.write_prob for d in plan.detectors])
    dir_flat = [d.dir_probs[c] if d.dir_probs else 0.0 for d in plan.detectors for c in range(n_comp)]
    dir_counts = _multinomial(rng, n[paired], dir_flat).reshape(paired.size, n_det, n_comp)
    spont = np.flatnonzero(n_rand > 0)
    rand_counts = _multinomial(rng, n_rand[spont], [d.rand_prob for d in plan.detectors])
    background = rng.random((size, n_det)) < np.array([d.background for d in plan.detectors])

    frames = []
    for j, det in enumerate(plan.detectors):
        # source code per trial: 0..n_comp-1 directional component, n_comp random, n_comp+1 write, -1 none
        source_code = np.full(size, -1, dtype=np.int64)
        source_code[background[:, j]] = n_comp + 2
        rand_hit = spont[rand_counts[:, j] > 0]
        source_code[rand_hit] = n_comp
        for c in reversed(range(n_comp)):
            source_code[paired[dir_counts[:, j, c] > 0]] = c
        source_code[paired[write_counts[:, j] > 0]] = n_comp + 1

        clicked = np.flatnonzero(source_code >= 0)
        times = np.empty(clicked.size, dtype=np.float64)
        codes = source_code[clicked]
        for code in range(n_comp + 3):
            sel = np.flatnonzero(codes == code)
            if sel.size == 0:
                continue
            if code < n_comp:
                times[sel] = det.dir_samplers[code].sample(rng, sel.size)
            elif code == n_comp:
                times[sel] = det.rand_sampler.sample(rng, sel.size)
            elif code == n_comp + 1:
                times[sel] = det.write_sampler.sample(rng, sel.size)
            else:
                lo, hi = det.gate
                times[sel] = lo + rng.random(sel.size) * (hi - lo)
        frames.append(pd.DataFrame({
            "detector": det.detector,
            "trial": clicked + first_trial,
            "t_us": np.round(times, 6),
        }))
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=TimeTagStream.COLUMNS)


def scenario_hash(config: ScenarioConfig) -> str:
    """sha256 of the canonical JSON rendering of the config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_trials(scenario: ScenarioConfig, n_trials: Optional[int] = None, seed: Optional[int] = None,
               threads: int = 1) -> TimeTagStream:
    n_trials = scenario.n_trials if n_trials is None else n_trials
    seed = scenario.seed if seed is None else seed
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    plan = build_trial_plan(scenario)
    block = settings.TRIAL_BLOCK_SIZE
    blocks = [(b, b * block, min(block, n_trials - b * block)) for b in range(math.ceil(n_trials / block))]
    logger.info(f"Simulating '{scenario.scenario_id}': {n_trials} trials in {len(blocks)} blocks "
                f"(seed={seed}, threads={threads}, measurement={scenario.measurement}, memory={scenario.memory.mode})")

    def work(entry):
        b, first, size = entry
        return _simulate_block(plan, seed, b, first, size)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            frames = list(executor.map(work, blocks))
    else:
        frames = [work(entry) for entry in blocks]
    tags = pd.concat(frames, ignore_index=True)
    stream = TimeTagStream(tags, n_trials, scenario.timing.trial_period, seed=seed,
                           scenario_id=scenario.scenario_id, scenario_hash=scenario_hash(scenario))
    logger.info(f"Simulation of '{scenario.scenario_id}' done: {len(stream)} tags, counts {stream.detector_counts()}")
    return stream


def merge_streams(a: TimeTagStream, b: TimeTagStream) -> TimeTagStream:
    """Concatenates b after a; trial indices of b are offset by a.trial_count."""
    if a.trial_period != b.trial_period:
        raise ValueError("cannot merge streams with different trial periods")
    shifted = b.tags.copy()
    shifted["trial"] = shifted["trial"] + a.trial_count
    return TimeTagStream(pd.concat([a.tags, shifted], ignore_index=True), a.trial_count + b.trial_count,
                         a.trial_period, seed=None, scenario_id=a.scenario_id, scenario_hash=a.scenario_hash)
