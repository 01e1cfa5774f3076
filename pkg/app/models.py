# app/models.py
from typing import List, Optional, Dict, Any, Literal, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
import math

import numpy as np
import pandas as pd

DetectorId = Literal["D1", "D2", "D3", "D4"]
DETECTOR_IDS: Tuple[str, ...] = ("D1", "D2", "D3", "D4")

# --- Site A: DLCZ photon-pair source ---

class DlczSourceParams(BaseModel):
    """Effective parameters of the DLCZ write/read source (site A)."""
    model_config = ConfigDict(extra="forbid")

    p: float = Field(0.01, gt=0.0, lt=1.0, description="Spin-wave excitation probability per write pulse.")
    eta_w: float = Field(1.0, ge=0.0, le=1.0, description="Write-photon transmission (total detection efficiency when used standalone).")
    eta_r: float = Field(1.0, ge=0.0, le=1.0, description="Read-path transmission (total detection efficiency when used standalone).")
    eta_A: float = Field(0.385, ge=0.0, le=1.0, description="Intrinsic retrieval efficiency at t_A = 0.")
    p_SE: float = Field(0.0, ge=0.0, le=1.0, description="Branching probability of a non-retrieved excitation into the read mode (random emission).")
    p_nw: float = Field(0.0, ge=0.0, lt=1.0, description="Background click probability per write gate.")
    p_nr: float = Field(0.0, ge=0.0, lt=1.0, description="Background click probability per read gate.")
    tau_dlcz: float = Field(24.0, gt=0.0, description="Spin-wave 1/e coherence time (µs).")
    n_max: Optional[int] = Field(None, ge=2, description="Fock truncation order; None selects the 1e-12 tail-mass default.")


class PairNumberDistribution(BaseModel):
    """Joint photon-number distribution with n_w = n_r = n."""
    probs: List[Tuple[int, float]] = Field(..., description="(n, P(n)) pairs for n = 0..n_max.")

    @property
    def n(self) -> np.ndarray:
        return np.array([k for k, _ in self.probs], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.probs], dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def mean(self) -> float:
        return float(np.dot(self.n, self.weights))


class DetectionProbabilities(BaseModel):
    """Single and joint click probabilities per trial."""
    p_w: float
    p_r: float
    p_wr: float

    @property
    def g2_wr(self) -> float:
        return self.p_wr / (self.p_w * self.p_r)

    @property
    def p_r_given_w(self) -> float:
        return self.p_wr / self.p_w

# --- Site B: Rydberg EIT memory ---

class EitMediumParams(BaseModel):
    """Ladder-EIT medium. All rates are ordinary frequencies in MHz."""
    model_config = ConfigDict(extra="forbid")

    od: float = Field(5.4, gt=0.0, description="Resonant optical depth.")
    gamma: float = Field(6.07, gt=0.0, description="Excited-state linewidth Γ (MHz).")
    omega_c: float = Field(2.66, ge=0.0, description="Coupling Rabi frequency Ω_c (MHz).")
    gamma_gR: float = Field(0.29, ge=0.0, description="Ground-Rydberg dephasing rate γ_gR (MHz).")
    k_p: float = Field(2.0 * math.pi / 780.241e-9, gt=0.0, description="Probe wavenumber (1/m).")
    length: float = Field(1.0e-3, gt=0.0, description="Medium length ℓ (m).")


class StorageParams(BaseModel):
    """Storage-and-retrieval efficiency model with motional dephasing and hyperfine beating."""
    model_config = ConfigDict(extra="forbid")

    eta0: float = Field(0.05, ge=0.0, le=1.0, description="Zero-time storage-and-retrieval efficiency.")
    tau_R: float = Field(3.34, gt=0.0, description="Gaussian 1/e coherence time (µs).")
    delta_F: float = Field(182.3, ge=0.0, description="Hyperfine splitting of the Rydberg level ΔF (kHz).")
    p_F1: float = Field(0.5, ge=0.0, le=1.0, description="Excitation probability of the F=1 hyperfine component.")
    t_off: float = Field(0.47, ge=0.0, description="Delay offset between storage time and centre-of-mass delay (µs).")


class PulseWaveform(BaseModel):
    """Sampled temporal intensity profile; samples are bin centres."""
    samples: List[Tuple[float, float]] = Field(..., description="(t in µs, intensity in counts/bin) pairs.")
    bin_width: float = Field(..., gt=0.0, description="Sample spacing (µs).")

    @field_validator('samples')
    @classmethod
    def samples_must_be_ordered_and_non_negative(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if not v:
            raise ValueError("waveform needs at least one sample")
        times = np.array([t for t, _ in v], dtype=np.float64)
        values = np.array([f for _, f in v], dtype=np.float64)
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("intensities must be finite and non-negative")
        if times.size > 1 and np.any(np.diff(times) <= 0.0):
            raise ValueError("sample times must be strictly increasing")
        return v

    @classmethod
    def from_arrays(cls, times: np.ndarray, intensities: np.ndarray, bin_width: float) -> "PulseWaveform":
        return cls(samples=list(zip(np.asarray(times, dtype=float).tolist(),
                                    np.asarray(intensities, dtype=float).tolist())),
                   bin_width=bin_width)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples], dtype=np.float64)

    @property
    def intensities(self) -> np.ndarray:
        return np.array([f for _, f in self.samples], dtype=np.float64)

    @property
    def mass(self) -> float:
        return float(self.intensities.sum())


class SaturationParams(BaseModel):
    """Effective Rydberg-blockade saturation law."""
    model_config = ConfigDict(extra="forbid")

    n_max: float = Field(68.0, gt=0.0, description="Maximum number of storable photons N_max.")
    t_lin: float = Field(0.0044, ge=0.0, le=1.0, description="Linear-regime storage efficiency T.")

# --- Detection ---

class SpdParams(BaseModel):
    """Threshold single-photon detector."""
    model_config = ConfigDict(extra="forbid")

    efficiency: float = Field(1.0, ge=0.0, le=1.0, description="Detection efficiency (includes fibre coupling).")
    dark_prob_per_gate: float = Field(0.0, ge=0.0, lt=1.0, description="Dark-click probability per gate.")
    gate_width: Optional[float] = Field(None, gt=0.0, description="Gate width (µs); None arms the detector on its analysis window.")


class TimeTag(BaseModel):
    detector_id: DetectorId
    trial_index: int = Field(..., ge=0)
    t: float = Field(..., description="Click time within the trial (µs).")


class TimeTagStream:
    """Per-trial detector clicks held as a DataFrame with columns detector, trial, t_us."""

    COLUMNS = ["detector", "trial", "t_us"]

    def __init__(self, tags: pd.DataFrame, trial_count: int, trial_period: float,
                 seed: Optional[int] = None, scenario_id: str = "", scenario_hash: str = ""):
        frame = tags[self.COLUMNS].copy() if len(tags) else pd.DataFrame(
            {"detector": pd.Series([], dtype=str), "trial": pd.Series([], dtype=np.int64),
             "t_us": pd.Series([], dtype=np.float64)})
        frame["detector"] = frame["detector"].astype(str)
        frame["trial"] = frame["trial"].astype(np.int64)
        frame["t_us"] = frame["t_us"].astype(np.float64)
        if len(frame):
            if frame["trial"].min() < 0 or frame["trial"].max() >= trial_count:
                raise ValueError("trial index outside [0, trial_count)")
            if frame["t_us"].min() < 0.0 or frame["t_us"].max() > trial_period:
                raise ValueError("time tag outside the trial period")
            unknown = set(frame["detector"].unique()) - set(DETECTOR_IDS)
            if unknown:
                raise ValueError(f"Unknown detector ids: {sorted(unknown)}")
        frame = frame.sort_values(["trial", "t_us", "detector"], kind="mergesort").reset_index(drop=True)
        self.tags = frame
        self.trial_count = int(trial_count)
        self.trial_period = float(trial_period)
        self.seed = seed
        self.scenario_id = scenario_id
        self.scenario_hash = scenario_hash

    @classmethod
    def from_tags(cls, tags: List[TimeTag], trial_count: int, trial_period: float, **kwargs) -> "TimeTagStream":
        frame = pd.DataFrame({
            "detector": [tag.detector_id for tag in tags],
            "trial": [tag.trial_index for tag in tags],
            "t_us": [tag.t for tag in tags],
        })
        return cls(frame, trial_count, trial_period, **kwargs)

    def __len__(self) -> int:
        return len(self.tags)

    def detector_counts(self) -> Dict[str, int]:
        counts = self.tags["detector"].value_counts()
        return {det: int(counts.get(det, 0)) for det in DETECTOR_IDS}

    def metadata(self) -> Dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "trial_count": self.trial_count,
            "trial_period_us": self.trial_period,
            "counts": self.detector_counts(),
        }

# --- Counting analysis ---

class Window(BaseModel):
    model_config = ConfigDict(extra="forbid")

    center: Optional[float] = Field(None, description="Window centre within the trial (µs); None places it on the expected pulse.")
    width: float = Field(..., gt=0.0, description="Window width (µs).")

    def bounds(self) -> Tuple[float, float]:
        if self.center is None:
            raise ValueError("window centre not resolved")
        return self.center - 0.5 * self.width, self.center + 0.5 * self.width


class WindowSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    write_window: Window = Field(default_factory=lambda: Window(width=0.06), description="Write detection window (60 ns).")
    read_window: Window = Field(default_factory=lambda: Window(width=0.6), description="Read detection window (600 ns).")
    n_accidental_peaks: int = Field(6, ge=1, description="Number of accidental peaks averaged for normalisation.")


class CoincidenceHistogram(BaseModel):
    peak_counts: List[int] = Field(..., description="Coincidences per trial offset 0..n_accidental_peaks.")
    n_starts: int = Field(0, ge=0)

    @field_validator('peak_counts')
    @classmethod
    def counts_must_be_non_negative(cls, v: List[int]) -> List[int]:
        if any(c < 0 for c in v):
            raise ValueError("peak counts must be non-negative")
        return v

    @property
    def n_accidental_peaks(self) -> int:
        return len(self.peak_counts) - 1


class CorrelationEstimate(BaseModel):
    """Value with one-standard-deviation Poissonian uncertainty."""
    quantity: str = ""
    value: float
    sigma: float = Field(..., ge=0.0)
    n_coinc: int = Field(0, ge=0)
    one_sided: bool = Field(False, description="True when only an upper limit is meaningful (zero coincidences).")
    sigma_upper: Optional[float] = Field(None, ge=0.0, description="One-sided 68% upper error when one_sided.")

# --- Fitting ---

FitModelId = Literal["eit_spectrum", "g2_vs_pw", "alpha_vs_pw", "storage_decay",
                     "dlcz_decay", "gaussian_line", "saturation"]


class FitDataPoint(BaseModel):
    x: float
    y: float
    sigma_y: float = Field(1.0, gt=0.0)
    exposure: float = Field(1.0, gt=0.0, description="Count scale for Poisson-likelihood problems.")


class FitParameter(BaseModel):
    """Metadata of one fit-model parameter."""
    name: str
    default: float
    lower: Optional[float] = None
    upper: Optional[float] = None
    fixed: bool = False
    unit: str = ""
    description: str = ""


class FitModelInfo(BaseModel):
    id: str
    name: str
    description: str
    parameters: List[FitParameter]


class FitProblem(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model_id: FitModelId
    data: List[FitDataPoint]
    initial_params: Dict[str, float] = Field(default_factory=dict, description="Overrides of model defaults.")
    bounds: Dict[str, Tuple[Optional[float], Optional[float]]] = Field(default_factory=dict)
    fixed: Optional[List[str]] = Field(None, description="Fixed parameter names; None keeps the model's defaults.")
    method: Literal["lm", "simplex"] = "lm"
    likelihood: Literal["gaussian", "poisson"] = "gaussian"


class FitResult(BaseModel):
    model_id: str
    params: Dict[str, float]
    uncertainties: Dict[str, float]
    free_params: List[str] = Field(default_factory=list)
    covariance: Optional[List[List[float]]] = None
    chi_square: float = Field(..., ge=0.0)
    n_dof: int
    converged: bool
    n_iterations: int = 0
    method: str = "lm"
    message: Optional[str] = Field(None, description="Diagnostics when the fit is degraded.")


class ProfileInterval(BaseModel):
    param: str
    lo: float
    hi: float
    lo_one_sided: bool = Field(False, description="Profile never rose by 1 below the optimum; lo is the bound.")
    hi_one_sided: bool = Field(False, description="Profile never rose by 1 above the optimum; hi is the bound.")

# --- Scenario configuration ---

class MemoryStage(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["bypass", "slow_light", "storage"] = Field("bypass", description="Site-B configuration.")
    t_B: float = Field(0.5, ge=0.0, description="Storage time (µs).")
    slow_transmission: float = Field(0.23, ge=0.0, le=1.0, description="Transmitted area of the slowed pulse relative to the input.")
    leakage_fraction: float = Field(0.42, ge=0.0, le=1.0, description="Share of the slowed pulse leaking before storage.")
    slow_delay: Optional[float] = Field(None, ge=0.0, description="Slow-light delay (µs); None uses the medium group delay.")


class TimingSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_A: float = Field(0.5, ge=0.0, description="Write-read delay at site A (µs).")
    write_time: float = Field(0.1, ge=0.0, description="Write-photon emission time within the trial (µs).")
    write_fwhm: float = Field(0.02, gt=0.0, description="Write-photon FWHM (µs).")
    read_fwhm: float = Field(0.35, gt=0.0, description="Read-photon FWHM (µs).")
    trial_period: float = Field(100.0, gt=0.0, description="Trial period; bookkeeping only (µs).")
    bin_width: float = Field(0.001, gt=0.0, description="Waveform sample spacing (µs).")
    read_linewidth: float = Field(2.26, gt=0.0, description="Spectral FWHM of the read photon (MHz).")


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variable: str = Field(..., description="Dotted config path, e.g. source.p or memory.t_B.")
    values: List[float] = Field(..., min_length=1)


class ScenarioFit(BaseModel):
    """Fit applied to the estimates of a sweep."""
    model_config = ConfigDict(extra="forbid")

    model_id: FitModelId
    quantity: str = Field(..., description="Estimated quantity used as y, e.g. g2_wr.")
    x: Literal["sweep", "p_w"] = Field("sweep", description="Sweep value or measured p(w) as x.")
    initial_params: Dict[str, float] = Field(default_factory=dict)
    fixed: Optional[List[str]] = None


# Quantities the standard estimator set produces per measurement mode
MEASUREMENT_QUANTITIES: Dict[str, List[str]] = {
    "direct": ["p_w", "p_r", "g2_wr", "p_r_given_w"],
    "hbt_read": ["p_w", "alpha", "g2_rr"],
    "hbt_write": ["p_r", "g2_ww"],
}


def _default_detectors() -> Dict[str, SpdParams]:
    return {det: SpdParams() for det in DETECTOR_IDS}


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario_id: str = Field("scenario", min_length=1)
    source: DlczSourceParams = Field(default_factory=DlczSourceParams)
    medium: EitMediumParams = Field(default_factory=EitMediumParams)
    storage: StorageParams = Field(default_factory=StorageParams)
    saturation: SaturationParams = Field(default_factory=SaturationParams)
    memory: MemoryStage = Field(default_factory=MemoryStage)
    timing: TimingSpec = Field(default_factory=TimingSpec)
    measurement: Literal["direct", "hbt_read", "hbt_write"] = "direct"
    detectors: Dict[DetectorId, SpdParams] = Field(default_factory=_default_detectors)
    windows: WindowSpec = Field(default_factory=WindowSpec)
    sweep: Optional[SweepSpec] = None
    fit: Optional[ScenarioFit] = None
    n_trials: int = Field(100_000, ge=1)
    seed: int = Field(20170101, ge=0)

    @model_validator(mode='after')
    def sweep_and_fit_must_resolve(self) -> "ScenarioConfig":
        if self.sweep is not None:
            value = resolve_config_path(self, self.sweep.variable)
            if isinstance(value, bool) or not isinstance(value, (int, float)) and value is not None:
                raise ValueError(f"sweep variable '{self.sweep.variable}' is not a numeric config field")
        if self.fit is not None:
            available = MEASUREMENT_QUANTITIES[self.measurement]
            if self.fit.quantity not in available:
                raise ValueError(f"fit.quantity: '{self.fit.quantity}' is not estimated in measurement "
                                 f"'{self.measurement}' (available: {', '.join(available)})")
            if self.fit.x == "p_w" and "p_w" not in available:
                raise ValueError(f"fit.x: p_w is not estimated in measurement '{self.measurement}'")
            if self.fit.x == "sweep" and self.sweep is None:
                raise ValueError("fit.x = 'sweep' needs a sweep")
        return self


def resolve_config_path(config: BaseModel, path: str) -> Any:
    node: Any = config
    for part in path.split("."):
        if isinstance(node, BaseModel):
            if part not in type(node).model_fields:
                raise ValueError(f"config path '{path}' does not resolve ('{part}' unknown)")
            node = getattr(node, part)
        elif isinstance(node, dict):
            if part not in node:
                raise ValueError(f"config path '{path}' does not resolve ('{part}' unknown)")
            node = node[part]
        else:
            raise ValueError(f"config path '{path}' does not resolve")
    return node


class RunManifest(BaseModel):
    scenario_id: str
    config: Dict[str, Any]
    config_hash: str
    seed: int
    n_trials: int
    files: Dict[str, str] = Field(default_factory=dict, description="Relative path -> sha256.")


class PresetInfo(BaseModel):
    id: str
    name: str
    description: str


class EitWindow(BaseModel):
    """Transparency feature of an EIT spectrum."""
    peak_transmission: float
    background_transmission: float = Field(..., description="Resonant two-level transmission e^-OD.")
    fwhm: float = Field(..., description="Full width of the transparency peak at half height above the adjacent minimum (MHz).")
    delta_min: float = Field(..., description="Detuning of the absorption minimum beside the peak (MHz).")
