"""Simulated measurement campaign.

The interferometer phase is not stabilized: it drifts linearly, diffuses,
and jitters within each save interval. Every interval yields one coincidence
histogram (Poisson counts per τ-bin drawn from the IRF-smeared G²), the
singles on both detectors, and the two monitoring channels used for
postselection (phonon-sideband rate and laser leakage).

Afterwards the singles are mapped to phases through a fitted fringe reference,
histograms are grouped into equal-width phase bins on [0, π], and each bin
yields a normally ordered variance estimate with bootstrap errors.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from numpy.polynomial.hermite import hermgauss
from scipy.optimize import OptimizeWarning, curve_fit

from core.dynamics import solve_steady_state
from core.errors import CannotBinError, EmptyAcceptanceError, InputError
from core.homodyne import CorrelatorBank, sl_intensity
from core.instrument import convolve_samples, degraded_variance_scan, wandering_nodes
from core.schemas import (
    InstrumentModel,
    LOConfig,
    NuisanceConfig,
    PostselectionThresholds,
    SystemParams,
)

logger = logging.getLogger(__name__)

JITTER_NODES = 12
MIN_VISIBILITY = 1e-6
FRINGE_POINTS = 73
# far half of each histogram sets the uncorrelated coincidence level
FAR_DELAY_FRACTION = 0.5


# ── Fringe reference ──────────────────────────────────────────────


@dataclass
class FringeScan:
    phases: np.ndarray
    rates: np.ndarray  # counts/s per detector
    dwell_s: float


@dataclass(frozen=True)
class FringeReference:
    """Fringe I(φ) = I_min + (I_max − I_min)·cos²((φ − offset)/2) in counts/s."""

    i_min: float
    i_max: float
    offset: float = 0.0

    @property
    def visibility(self) -> float:
        total = self.i_max + self.i_min
        return (self.i_max - self.i_min) / total if total > 0 else 0.0

    def _check(self) -> None:
        if not self.visibility > MIN_VISIBILITY:
            raise CannotBinError(f"fringe visibility {self.visibility:.3g} is too small to infer phases")

    def phase_of(self, intensity) -> np.ndarray:
        """Folded phase in [0, π]; intensities outside the fringe clip to its ends."""
        self._check()
        fraction = np.clip((np.asarray(intensity, dtype=float) - self.i_min) / (self.i_max - self.i_min), 0.0, 1.0)
        return 2.0 * np.arccos(np.sqrt(fraction))

    def intensity_edges(self, n_bins: int) -> np.ndarray:
        """Ascending intensity edges of ``n_bins`` equal-width phase bins on [0, π]."""
        self._check()
        phis = np.linspace(math.pi, 0.0, n_bins + 1)
        return self.i_min + (self.i_max - self.i_min) * np.cos(0.5 * phis) ** 2

    def bin_index(self, intensity, n_bins: int) -> np.ndarray:
        """Phase-bin index (0 holds φ = 0, the fringe maximum) for each intensity."""
        edges = self.intensity_edges(n_bins)
        k = np.searchsorted(edges, np.asarray(intensity, dtype=float), side="right") - 1
        return n_bins - 1 - np.clip(k, 0, n_bins - 1)


def _fringe(phi, i_min, i_max, offset):
    return i_min + (i_max - i_min) * np.cos(0.5 * (phi - offset)) ** 2


def detection_scale(params: SystemParams, lo: LOConfig, model: InstrumentModel) -> float:
    """κ: counts/s per detector per unit model intensity, so the mean SL rate equals ``detector_rate``."""
    if model.detector_rate <= 0:
        raise InputError("detector_rate must be positive")
    mean = solve_steady_state(params).rho_ee + lo.intensity
    if mean <= 0:
        raise InputError("no light reaches the detectors (s = 0 and no LO)")
    return model.detector_rate / mean


def simulate_fringe_scan(params: SystemParams, lo: LOConfig, model: InstrumentModel, phases=None,
                         dwell_s: float = 1.0, seed: int = 0, visibility: float = 1.0) -> FringeScan:
    """Reference fringe recorded while the phase is swept (laser frequency scan)."""
    phases = np.linspace(-math.pi, math.pi, FRINGE_POINTS) if phases is None else np.asarray(phases, dtype=float)
    kappa = detection_scale(params, lo, model)
    # Gaussian jitter within the dwell scales the interference term by exp(-sigma^2/2)
    effective = visibility * math.exp(-0.5 * model.phase_jitter_sigma ** 2)
    expected = np.array([sl_intensity(params, LOConfig(amplitude=lo.amplitude, phase=float(p)), effective)
                         for p in phases])
    rng = np.random.default_rng(seed)
    counts = rng.poisson(kappa * expected * dwell_s)
    return FringeScan(phases=phases, rates=counts / dwell_s, dwell_s=dwell_s)


def fit_fringe_reference(scan: FringeScan) -> FringeReference:
    """Least-squares fit of the cos²(φ/2) fringe, weighted by Poisson errors."""
    rates = np.asarray(scan.rates, dtype=float)
    errors = np.sqrt(np.maximum(rates * scan.dwell_s, 1.0)) / scan.dwell_s
    guess = [rates.min(), rates.max(), float(scan.phases[int(np.argmax(rates))])]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", OptimizeWarning)
            popt, pcov = curve_fit(_fringe, scan.phases, rates, p0=guess, sigma=errors, absolute_sigma=True)
    except (RuntimeError, OptimizeWarning) as exc:
        raise CannotBinError(f"fringe fit failed: {exc}") from exc

    i_min, i_max, offset = (float(v) for v in popt)
    if i_max < i_min:
        i_min, i_max, offset = i_max, i_min, offset + math.pi
    amplitude_err = math.sqrt(max(pcov[0, 0] + pcov[1, 1] - 2 * pcov[0, 1], 0.0))
    if i_max - i_min <= 5.0 * amplitude_err:
        raise CannotBinError(f"fringe amplitude {i_max - i_min:.3g} not resolved (error {amplitude_err:.3g})")
    offset = math.remainder(offset, 2 * math.pi)
    reference = FringeReference(i_min=i_min, i_max=i_max, offset=offset)
    logger.info("fringe reference: I_min=%.1f I_max=%.1f visibility=%.4f offset=%.4f",
                i_min, i_max, reference.visibility, offset)
    return reference


# ── Campaign records ──────────────────────────────────────────────


@dataclass
class IntervalRecord:
    index: int
    time_s: float
    phase: float
    detuning: float
    singles_a: int
    singles_b: int
    psb_counts: int
    leakage_counts: int
    spike: bool
    jump: bool
    counts: np.ndarray
    expected_counts: np.ndarray
    expected_intensity: float


@dataclass
class PhaseBin:
    index: int
    phi_low: float
    phi_high: float
    members: np.ndarray
    counts: np.ndarray

    @property
    def center(self) -> float:
        return 0.5 * (self.phi_low + self.phi_high)

    @property
    def display_phase(self) -> float:
        """N is π-periodic, so bins past π/2 are shown at φ − π."""
        return self.center - math.pi if self.center > math.pi / 2 else self.center

    @property
    def occupancy(self) -> int:
        return int(self.members.size)


@dataclass
class BinnedCampaign:
    n_bins: int
    bins: list[PhaseBin]

    def total_counts(self) -> int:
        return int(sum(b.counts.sum() for b in self.bins))

    def occupancy(self) -> np.ndarray:
        return np.array([b.occupancy for b in self.bins])


@dataclass
class CampaignResult:
    params: SystemParams
    lo: LOConfig
    model: InstrumentModel
    nuisance: NuisanceConfig
    seed: int
    visibility: float
    kappa: float
    tau_grid: np.ndarray
    fringe_scan: FringeScan
    fringe_reference: FringeReference
    intervals: list[IntervalRecord]
    accepted: np.ndarray
    reasons: list[str]
    binned: Optional[BinnedCampaign] = None
    metadata: dict = field(default_factory=dict)

    @property
    def tau_s(self) -> np.ndarray:
        return self.tau_grid * self.model.time_unit_s

    def singles_rates(self) -> np.ndarray:
        period = self.model.histogram_period
        return np.array([(r.singles_a + r.singles_b) / (2.0 * period) for r in self.intervals])

    def psb_rates(self) -> np.ndarray:
        return np.array([r.psb_counts / self.model.histogram_period for r in self.intervals])

    def leakage_fractions(self) -> np.ndarray:
        dwell = self.nuisance.leakage_dwell_s * self.model.detector_rate
        return np.array([r.leakage_counts / dwell for r in self.intervals])

    def total_counts(self) -> int:
        return int(sum(r.counts.sum() for r in self.intervals))

    def rejected_counts(self) -> int:
        return int(sum(r.counts.sum() for r, ok in zip(self.intervals, self.accepted) if not ok))

    def interval_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "interval": [r.index for r in self.intervals],
            "time_s": [r.time_s for r in self.intervals],
            "phase_rad": [r.phase for r in self.intervals],
            "detuning_per_gamma": [r.detuning / self.params.gamma for r in self.intervals],
            "singles_rate_cps": self.singles_rates(),
            "psb_rate_cps": self.psb_rates(),
            "leakage_fraction": self.leakage_fractions(),
            "coincidences": [int(r.counts.sum()) for r in self.intervals],
            "expected_intensity_per_lifetime": [r.expected_intensity for r in self.intervals],
            "leakage_spike": [r.spike for r in self.intervals],
            "detuning_jump": [r.jump for r in self.intervals],
            "accepted": self.accepted.astype(bool),
            "reason": self.reasons,
        })

    def histogram_frame(self, index: int) -> pd.DataFrame:
        return pd.DataFrame({"tau_s": self.tau_s, "counts": self.intervals[index].counts})


# ── Simulation ────────────────────────────────────────────────────


def _jitter_rule(sigma: float) -> tuple[np.ndarray, np.ndarray]:
    if sigma == 0:
        return np.zeros(1), np.ones(1)
    x, w = hermgauss(JITTER_NODES)
    return math.sqrt(2.0) * sigma * x, w / math.sqrt(math.pi)


def simulate_campaign(params: SystemParams, lo: LOConfig, model: InstrumentModel, duration_s: float,
                      seed: int, nuisance: Optional[NuisanceConfig] = None, visibility: float = 1.0,
                      initial_phase: float = 0.0) -> CampaignResult:
    """Simulate ``duration_s`` of unstabilized measurement, one histogram per save interval."""
    nuisance = nuisance or NuisanceConfig()
    if not math.isfinite(duration_s) or duration_s <= 0:
        raise InputError(f"campaign duration must be positive, got {duration_s!r}")
    n_intervals = int(duration_s // model.histogram_period)
    if n_intervals < 1:
        raise InputError(f"duration {duration_s} s is shorter than one histogram period")
    kappa = detection_scale(params, lo, model)

    path_seq, count_seq, monitor_seq, fringe_seq = np.random.SeedSequence(seed).spawn(4)
    path_rng = np.random.default_rng(path_seq)
    count_rng = np.random.default_rng(count_seq)
    monitor_rng = np.random.default_rng(monitor_seq)

    fringe_scan = simulate_fringe_scan(params, lo, model, seed=int(fringe_seq.generate_state(1)[0]),
                                       visibility=visibility)
    reference = fit_fringe_reference(fringe_scan)

    n_tau = int(round(model.histogram_span / model.bin_width)) + 1
    tau_grid = np.arange(n_tau) * model.bin_width
    nominal = solve_steady_state(params)
    nominal_bank = CorrelatorBank(params, tau_grid)
    rotation = nominal_bank.rotation
    banks: dict[float, CorrelatorBank] = {}

    def bank_for(detuning: float) -> CorrelatorBank:
        key = round(detuning, 12)
        if key not in banks:
            bank = nominal_bank if key == round(params.detuning, 12) else CorrelatorBank(
                params.with_detuning(detuning), tau_grid, rotation)
            banks[key] = bank.map_products(lambda v: convolve_samples(v, tau_grid, model))
        return banks[key]

    if model.wandering_sigma > 0:
        node_detunings, node_weights = wandering_nodes(params.detuning, model.wandering_sigma, model.wandering_nodes)
        node_weights = node_weights / node_weights.sum()
    else:
        node_detunings, node_weights = np.array([params.detuning]), np.ones(1)
    jitter_offsets, jitter_weights = _jitter_rule(model.phase_jitter_sigma)

    period = model.histogram_period
    bin_s = model.bin_width * model.time_unit_s
    beta = visibility * lo.amplitude
    stray = (1.0 - visibility ** 2) * lo.intensity
    spike_amplitude = math.sqrt(nuisance.leakage_spike_fraction * nominal.rho_ee)
    spikes = set(nuisance.leakage_spikes)
    leakage_dwell = nuisance.leakage_dwell_s * model.detector_rate

    steps = path_rng.normal(0.0, math.sqrt(model.phase_diffusion * period), n_intervals) \
        if model.phase_diffusion > 0 else np.zeros(n_intervals)
    wiener = np.cumsum(steps)

    intervals: list[IntervalRecord] = []
    for i in range(n_intervals):
        t = (i + 0.5) * period
        phase = initial_phase + model.drift_rate * t + wiener[i]
        detuning = float(node_detunings[path_rng.choice(node_detunings.size, p=node_weights)])
        jump = bool(nuisance.jump_probability > 0 and path_rng.random() < nuisance.jump_probability)
        if jump:
            detuning += nuisance.jump_detuning * params.gamma * (1.0 if path_rng.random() < 0.5 else -1.0)
        spike = i in spikes
        bank = bank_for(detuning)

        g = np.zeros(tau_grid.shape)
        intensity = 0.0
        for offset, weight in zip(jitter_offsets, jitter_weights):
            alpha = beta * complex(math.cos(phase + offset), -math.sin(phase + offset))
            if spike:
                alpha += spike_amplitude
            inner = bank.intensity(alpha)
            g += weight * (bank.total(alpha) + 2.0 * stray * inner + stray ** 2)
            intensity += weight * (inner + stray)

        expected_counts = np.clip(kappa ** 2 * g * bin_s * period, 0.0, None)
        counts = count_rng.poisson(expected_counts).astype(np.int64)
        singles = count_rng.poisson(kappa * intensity * period, size=2)

        psb_mean = nuisance.psb_rate * bank.rho_ee / nominal.rho_ee * period if nominal.rho_ee > 0 else 0.0
        leak_fraction = nuisance.leakage_fraction + (nuisance.leakage_spike_fraction if spike else 0.0)
        psb_counts = int(monitor_rng.poisson(psb_mean))
        leakage_counts = int(monitor_rng.poisson(leak_fraction * leakage_dwell))

        intervals.append(IntervalRecord(
            index=i, time_s=t, phase=math.remainder(phase, 2 * math.pi), detuning=detuning,
            singles_a=int(singles[0]), singles_b=int(singles[1]), psb_counts=psb_counts,
            leakage_counts=leakage_counts, spike=spike, jump=jump, counts=counts,
            expected_counts=expected_counts, expected_intensity=intensity,
        ))

    logger.info("simulated %d intervals (%d detunings, %d jitter nodes), %d coincidences",
                n_intervals, len(banks), jitter_offsets.size, sum(int(r.counts.sum()) for r in intervals))
    return CampaignResult(
        params=params, lo=lo, model=model, nuisance=nuisance, seed=seed, visibility=visibility,
        kappa=kappa, tau_grid=tau_grid, fringe_scan=fringe_scan, fringe_reference=reference,
        intervals=intervals, accepted=np.ones(n_intervals, dtype=bool), reasons=[""] * n_intervals,
    )


# ── Binning and postselection ─────────────────────────────────────


def phase_bin(result: CampaignResult, n_bins: int = 16) -> BinnedCampaign:
    """Group accepted histograms into ``n_bins`` equal-width phase bins on [0, π]."""
    if n_bins < 1:
        raise InputError("n_bins must be at least 1")
    indices = result.fringe_reference.bin_index(result.singles_rates(), n_bins)
    width = math.pi / n_bins
    bins = []
    for k in range(n_bins):
        members = np.flatnonzero((indices == k) & result.accepted)
        counts = (np.sum([result.intervals[m].counts for m in members], axis=0)
                  if members.size else np.zeros(result.tau_grid.shape, dtype=np.int64))
        bins.append(PhaseBin(index=k, phi_low=k * width, phi_high=(k + 1) * width, members=members, counts=counts))
    return BinnedCampaign(n_bins=n_bins, bins=bins)


def postselect(result: CampaignResult, thresholds: PostselectionThresholds) -> CampaignResult:
    """Flag intervals failing the PSB-rate or leakage threshold and re-bin the rest."""
    psb = result.psb_rates()
    leakage = result.leakage_fractions()
    accepted = np.ones(len(result.intervals), dtype=bool)
    reasons = [""] * len(result.intervals)
    for i in range(len(result.intervals)):
        problems = []
        if thresholds.min_psb_rate is not None and psb[i] < thresholds.min_psb_rate:
            problems.append(f"psb_rate {psb[i]:.6g} < {thresholds.min_psb_rate:.6g}")
        if thresholds.max_leakage is not None and leakage[i] > thresholds.max_leakage:
            problems.append(f"leakage {leakage[i]:.6g} > {thresholds.max_leakage:.6g}")
        if problems:
            accepted[i] = False
            reasons[i] = "; ".join(problems)

    if not accepted.any():
        raise EmptyAcceptanceError(f"postselection rejected all {accepted.size} intervals")
    logger.info("postselection accepted %d of %d intervals", int(accepted.sum()), accepted.size)
    selected = dataclasses.replace(result, accepted=accepted, reasons=reasons)
    if result.binned is not None:
        selected.binned = phase_bin(selected, result.binned.n_bins)
    return selected


# ── Estimation ────────────────────────────────────────────────────


@dataclass
class BinEstimate:
    index: int
    phi_low: float
    phi_high: float
    phi_center: float
    display_phase: float
    occupancy: int
    variance: float
    stderr: float
    expected: float
    degraded_model: float


@dataclass
class VarianceEstimates:
    rows: list[BinEstimate]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin": [r.index for r in self.rows],
            "phi_low_rad": [r.phi_low for r in self.rows],
            "phi_high_rad": [r.phi_high for r in self.rows],
            "phi_center_rad": [r.phi_center for r in self.rows],
            "display_phase_rad": [r.display_phase for r in self.rows],
            "intervals": [r.occupancy for r in self.rows],
            "variance_dimensionless": [r.variance for r in self.rows],
            "variance_stderr_dimensionless": [r.stderr for r in self.rows],
            "expected_variance_dimensionless": [r.expected for r in self.rows],
            "degraded_model_variance_dimensionless": [r.degraded_model for r in self.rows],
        })

    def in_phase(self) -> BinEstimate:
        return self.rows[0]


class _VarianceEstimator:
    """N̂ from one histogram: the zero-delay bin against the long-delay level.

    Every term of G² that factorizes into single-time moments is flat in τ,
    so G(0) − Ḡ_far removes the mean field together with any phase noise on
    it. With b the overlapping LO amplitude the estimate is

        [G(0) − Ḡ_far − ΔT0 − b·ΔT1(φ̂)]/(4b²) + Q̄_far(φ̂)

    where ΔTn = Tn(0) − T̄n_far are the IRF-smeared n = 0 and n = 1 terms of
    the nominal model, Q̄_far is the quadrature autocorrelation left in the
    far bins, and the φ-dependent corrections are averaged over the jitter
    rule of the instrument model.
    """

    def __init__(self, result: CampaignResult):
        self.b = result.visibility * result.lo.amplitude
        if self.b <= 0:
            raise InputError("variance estimation needs a local oscillator (beta > 0)")
        n_tau = result.tau_grid.size
        if n_tau < 2:
            raise InputError("variance estimation needs at least two tau bins")
        self.far = slice(max(1, int(n_tau * FAR_DELAY_FRACTION)), None)
        bank = CorrelatorBank(result.params, result.tau_grid)
        self.bank = bank.map_products(lambda v: convolve_samples(v, result.tau_grid, result.model))
        self.offsets, self.weights = _jitter_rule(result.model.phase_jitter_sigma)
        fluorescence = self.bank.terms(0.0)[0]
        self.delta0 = float(fluorescence[0] - fluorescence[self.far].mean())
        self.g_scale = result.kappa ** 2 * result.model.bin_width * result.model.time_unit_s \
            * result.model.histogram_period

    def correction(self, phi: float) -> float:
        """Everything in G(0) − Ḡ_far that is not 4b²·Q(0), at phase ``phi``."""
        total = self.delta0
        for offset, weight in zip(self.offsets, self.weights):
            terms = self.bank.terms(phi + offset)
            quadrature = (terms[2] - self.bank.mean_field_second_order(phi + offset)) / 4.0
            first = terms[1][0] - terms[1][self.far].mean()
            total += weight * (self.b * first - 4.0 * self.b ** 2 * quadrature[self.far].mean())
        return float(total)

    def __call__(self, g: np.ndarray, phi: float) -> float:
        contrast = g[0] - g[self.far].mean()
        return float((contrast - self.correction(phi)) / (4.0 * self.b ** 2))


def estimate_binned_variances(result: CampaignResult, n_bootstrap: int = 200,
                              seed: Optional[int] = None) -> VarianceEstimates:
    """Per-bin in-phase-referenced variance with bootstrap errors over histograms.

    ``expected`` runs the estimator on the noise-free histograms at the true
    interval phases; ``degraded_model`` averages the analytic degraded
    variance over the inferred phases of the bin's members.
    """
    if result.binned is None:
        raise InputError("campaign has not been phase-binned")
    estimator = _VarianceEstimator(result)
    phases = result.fringe_reference.phase_of(result.singles_rates())
    rng = np.random.default_rng(result.seed if seed is None else seed)

    measured = np.array([estimator(r.counts / estimator.g_scale, phases[i]) for i, r in enumerate(result.intervals)])
    expected = np.array([estimator(r.expected_counts / estimator.g_scale, r.phase) for r in result.intervals])
    model_at = degraded_variance_scan(result.params, result.model, phases, result.tau_grid).variance

    n_bins = result.binned.n_bins
    fine = np.linspace(0.0, math.pi, 8 * n_bins + 1)
    window = degraded_variance_scan(result.params, result.model, fine, result.tau_grid).variance

    rows = []
    for b in result.binned.bins:
        if b.occupancy == 0:
            rows.append(BinEstimate(b.index, b.phi_low, b.phi_high, b.center, b.display_phase, 0,
                                    math.nan, math.nan, math.nan,
                                    float(window[8 * b.index: 8 * b.index + 9].mean())))
            continue
        values = measured[b.members]
        if b.occupancy > 1:
            draws = rng.integers(0, b.occupancy, size=(n_bootstrap, b.occupancy))
            stderr = float(values[draws].mean(axis=1).std(ddof=1))
        else:
            stderr = math.nan
        rows.append(BinEstimate(b.index, b.phi_low, b.phi_high, b.center, b.display_phase, b.occupancy,
                                float(values.mean()), stderr, float(expected[b.members].mean()),
                                float(model_at[b.members].mean())))
    return VarianceEstimates(rows)
