"""Pydantic models for every configurable record of the simulator."""

from __future__ import annotations

import math
from typing import Literal, Optional

import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


# ── Emitter and drive ─────────────────────────────────────────────


class SystemParams(_Strict):
    """Emitter and drive parameters.

    Rates share one unit (1/ns when built from ``lifetime_ns``, units of Γ
    otherwise). Either ``rabi`` or the saturation parameter ``s`` (alias
    ``power``) sets the drive; ``s`` is converted with the on-resonance
    convention s = 2Ω²/Γ² and afterwards always holds the nominal value.
    """

    gamma: Optional[float] = Field(None, gt=0)
    lifetime_ns: Optional[float] = Field(None, gt=0)
    rabi: Optional[float] = Field(None, ge=0)
    s: Optional[float] = Field(None, ge=0, validation_alias=AliasChoices("s", "power"))
    detuning: float = 0.0
    dephasing: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def resolve_rates(self):
        from core.dynamics import rabi_from_saturation

        if self.gamma is None:
            self.gamma = 1.0 / self.lifetime_ns if self.lifetime_ns else 1.0
        elif self.lifetime_ns is not None and not math.isclose(self.gamma, 1.0 / self.lifetime_ns, rel_tol=1e-9):
            raise ValueError("gamma and lifetime_ns disagree (gamma must equal 1/lifetime_ns)")

        if self.s is not None:
            rabi = rabi_from_saturation(self.s, self.gamma)
            if self.rabi is not None and not math.isclose(self.rabi, rabi, rel_tol=1e-9, abs_tol=1e-15):
                raise ValueError("rabi and s disagree; give only one of them")
            self.rabi = rabi
        elif self.rabi is None:
            self.rabi = 0.0
        self.s = 2.0 * self.rabi ** 2 / self.gamma ** 2
        return self

    def with_detuning(self, detuning: float) -> "SystemParams":
        return self.model_copy(update={"detuning": float(detuning)})

    def with_saturation(self, s: float) -> "SystemParams":
        return SystemParams(gamma=self.gamma, s=s, detuning=self.detuning, dephasing=self.dephasing)


class LOConfig(_Strict):
    """Local oscillator amplitude β (emitted-field units) and phase φ (radians, dipole frame)."""

    amplitude: float = Field(0.0, ge=0)
    phase: float = 0.0

    @classmethod
    def matched(cls, rho_ee: float, phase: float = 0.0) -> "LOConfig":
        """LO whose intensity β² equals the RF intensity ρ_ee."""
        return cls(amplitude=math.sqrt(max(rho_ee, 0.0)), phase=phase)

    @property
    def intensity(self) -> float:
        return self.amplitude ** 2


# ── Instrument ────────────────────────────────────────────────────


class InstrumentModel(_Strict):
    """Everything between the ideal theory and the recorded histograms.

    Time-like widths (``irf_fwhm``, ``bin_width``) use the same unit as the
    system rates; ``time_unit_s`` converts that unit to seconds. Count rates,
    ``histogram_period`` and ``drift_rate`` are per second.
    """

    irf_fwhm: float = Field(0.0, ge=0)
    irf_kernel: Literal["gaussian"] = "gaussian"
    phase_jitter_sigma: float = Field(0.0, ge=0)
    wandering_sigma: float = Field(0.0, ge=0)
    wandering_nodes: int = Field(16, ge=2, le=200)
    drift_rate: float = Field(math.pi / 1800.0, ge=0)
    phase_diffusion: float = Field(1e-4, ge=0)
    detector_rate: float = Field(1.6e5, ge=0)
    histogram_period: float = Field(60.0, gt=0)
    bin_width: float = Field(0.05, gt=0)
    histogram_span: float = Field(10.0, gt=0)
    time_unit_s: float = Field(1e-9, gt=0)


class NuisanceConfig(_Strict):
    """Exogenous monitoring channels used only for postselection."""

    psb_rate: float = Field(2.0e4, ge=0)
    leakage_fraction: float = Field(0.002, ge=0)
    leakage_dwell_s: float = Field(2.0, gt=0)
    leakage_spikes: list[int] = Field(default_factory=list)
    leakage_spike_fraction: float = Field(0.05, ge=0)
    jump_probability: float = Field(0.0, ge=0, le=1)
    jump_detuning: float = Field(1.0, ge=0)


class PostselectionThresholds(_Strict):
    """``None`` disables a threshold (equivalent to an infinite limit)."""

    min_psb_rate: Optional[float] = Field(None, ge=0)
    max_leakage: Optional[float] = Field(None, ge=0)


# ── Run configuration ─────────────────────────────────────────────


class GridSpec(_Strict):
    start: float
    stop: float
    num: int = Field(ge=1)
    log: bool = False

    @model_validator(mode="after")
    def log_needs_positive(self):
        if self.log and (self.start <= 0 or self.stop <= 0):
            raise ValueError("log-spaced grids need positive start and stop")
        return self

    def values(self) -> np.ndarray:
        if self.log:
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.num)
        return np.linspace(self.start, self.stop, self.num)


class LOSettings(_Strict):
    amplitude: Optional[float] = Field(None, ge=0)
    phase: float = 0.0
    visibility: float = Field(1.0, ge=0, le=1)
    fringe_visibility_target: float = Field(0.738, gt=0, le=1)


class SweepConfig(_Strict):
    s_grid: GridSpec = Field(default_factory=lambda: GridSpec(start=0.01, stop=30.0, num=400, log=True))
    phi_grid: GridSpec = Field(default_factory=lambda: GridSpec(start=-math.pi, stop=math.pi, num=181))
    phase_panels: list[float] = Field(default_factory=lambda: [0.0, math.pi / 2, math.pi])
    power_panels: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.3, 1.0, 3.0])
    tau_span: float = Field(15.0, gt=0)
    tau_points: int = Field(400, ge=8)
    detuning_span: float = Field(5.0, gt=0)
    detuning_points: int = Field(201, ge=3)
    wigner_panels: list[float] = Field(default_factory=lambda: [0.0, 0.36, 10.0, 1e6])
    wigner_extent: float = Field(4.0, ge=4.0)
    wigner_points: int = Field(201, ge=128)
    coherent_reference: bool = False


class CampaignSettings(_Strict):
    duration_s: float = Field(8 * 3600.0, ge=0)
    n_bins: int = Field(16, ge=1)
    n_bootstrap: int = Field(200, ge=10)
    initial_phase: float = 0.0


class CalibrationSettings(_Strict):
    target_variance: float = -0.00775
    s: float = Field(0.1, gt=0)
    free: Literal["phase_jitter_sigma", "irf_fwhm"] = "phase_jitter_sigma"


class OutputConfig(_Strict):
    directory: Optional[str] = None
    formats: list[Literal["csv", "json", "svg"]] = Field(default_factory=lambda: ["csv", "json"])
    seed: int = Field(20160101, ge=0, lt=2 ** 64)


class RunConfig(_Strict):
    system: SystemParams
    lo: LOSettings = Field(default_factory=LOSettings)
    instrument: Optional[InstrumentModel] = None
    nuisance: NuisanceConfig = Field(default_factory=NuisanceConfig)
    thresholds: PostselectionThresholds = Field(default_factory=PostselectionThresholds)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    campaign: CampaignSettings = Field(default_factory=CampaignSettings)
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def grids_not_empty(self):
        if not self.sweep.phase_panels or not self.sweep.wigner_panels or not self.sweep.power_panels:
            raise ValueError("sweep panel lists must not be empty")
        return self
