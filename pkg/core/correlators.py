"""Two-time correlators of the emitted field by the quantum regression theorem.

Every correlator has the form ⟨A(0) B(τ) C(0)⟩ = tr[B · exp(Lτ)(C ρ_ss A)]
with A, B, C drawn from {1, σ⁻, σ⁺, σ⁺σ⁻}. ``RegressionEngine`` caches the
steady state and the propagators for one parameter set and τ-grid so that
many correlators can share them.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from core.dynamics import (
    IDENTITY,
    PROJ_E,
    SIGMA_MINUS,
    SIGMA_PLUS,
    DensityMatrix2,
    build_liouvillian,
    propagator,
    steady_state,
)
from core.errors import InputError
from core.schemas import SystemParams

logger = logging.getLogger(__name__)

DEFAULT_TAU_SPAN = 15.0
DEFAULT_TAU_POINTS = 400


class AtomicOperator(str, enum.Enum):
    IDENTITY = "identity"
    SIGMA_MINUS = "sigma_minus"
    SIGMA_PLUS = "sigma_plus"
    NUMBER = "number"

    @property
    def matrix(self) -> np.ndarray:
        return _OPERATOR_MATRICES[self]


_OPERATOR_MATRICES = {
    AtomicOperator.IDENTITY: IDENTITY,
    AtomicOperator.SIGMA_MINUS: SIGMA_MINUS,
    AtomicOperator.SIGMA_PLUS: SIGMA_PLUS,
    AtomicOperator.NUMBER: PROJ_E,
}


class TraceKind(str, enum.Enum):
    G1 = "g1"
    G2_RF = "g2_rf"
    THIRD_ORDER_LEFT = "third_order_left"
    THIRD_ORDER_RIGHT = "third_order_right"
    ANOMALOUS = "anomalous"
    QUADRATURE_FLUCT = "quadrature_fluct"
    G2_TOTAL = "g2_total"
    DECOMPOSITION_TERM = "decomposition_term"
    GENERIC = "generic"


@dataclass
class CorrelationTrace:
    """Correlator samples on a τ-grid that starts at 0 and strictly increases."""

    tau_grid: np.ndarray
    values: np.ndarray
    kind: TraceKind = TraceKind.GENERIC
    phase: Optional[float] = None
    normalized: bool = False
    beta2: Optional[float] = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.tau_grid = validate_tau_grid(self.tau_grid)
        self.values = np.asarray(self.values)
        if self.values.shape != self.tau_grid.shape:
            raise InputError("trace values and tau grid differ in length")


def validate_tau_grid(tau_grid) -> np.ndarray:
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise InputError("tau grid must be a non-empty 1-D sequence")
    if taus[0] != 0.0:
        raise InputError("tau grid must start at 0")
    if taus.size > 1 and np.any(np.diff(taus) <= 0):
        raise InputError("tau grid must be strictly increasing")
    return taus


def default_tau_grid(params: SystemParams, span: float = DEFAULT_TAU_SPAN,
                     points: int = DEFAULT_TAU_POINTS) -> np.ndarray:
    """Uniform grid over [0, span/Γ]."""
    return np.linspace(0.0, span / params.gamma, points)


def _as_operator(op) -> AtomicOperator:
    try:
        return AtomicOperator(op)
    except ValueError:
        raise InputError(f"unsupported operator id {op!r}; expected one of "
                         f"{[o.value for o in AtomicOperator]}") from None


class RegressionEngine:
    """Steady state and propagators for one (params, τ-grid) pair."""

    def __init__(self, params: SystemParams, tau_grid):
        self.params = params
        self.tau_grid = validate_tau_grid(tau_grid)
        self.liouvillian = build_liouvillian(params)
        self.state: DensityMatrix2 = steady_state(self.liouvillian)
        self._rho = self.state.matrix()
        self._propagators = propagator(self.liouvillian, self.tau_grid)

    def correlate(self, left, mid, right) -> np.ndarray:
        """⟨A(0) B(τ) C(0)⟩ over the τ-grid."""
        a, b, c = (_as_operator(o).matrix for o in (left, mid, right))
        conditioned = (c @ self._rho @ a).reshape(4)
        evolved = self._propagators @ conditioned
        return evolved @ b.T.reshape(4)

    @property
    def rho_ee(self) -> float:
        return self.state.rho_ee

    @property
    def coherence(self) -> complex:
        """⟨σ⁻⟩ at steady state."""
        return self.state.sigma_minus


def two_time_correlator(params: SystemParams, left, mid, right, tau_grid) -> CorrelationTrace:
    engine = RegressionEngine(params, tau_grid)
    values = engine.correlate(left, mid, right)
    ops = [_as_operator(o).value for o in (left, mid, right)]
    return CorrelationTrace(engine.tau_grid, values, TraceKind.GENERIC,
                            metadata={"operators": ops})


def g1(params: SystemParams, tau_grid, normalized: bool = True) -> CorrelationTrace:
    """⟨σ⁺(0)σ⁻(τ)⟩, divided by ρ_ee when ``normalized``."""
    engine = RegressionEngine(params, tau_grid)
    values = engine.correlate(AtomicOperator.SIGMA_PLUS, AtomicOperator.SIGMA_MINUS, AtomicOperator.IDENTITY)
    if normalized:
        if engine.rho_ee == 0.0:
            raise InputError("g1 cannot be normalized without excitation (s = 0)")
        values = values / engine.rho_ee
    return CorrelationTrace(engine.tau_grid, values, TraceKind.G1, normalized=normalized)


def g2_rf(params: SystemParams, tau_grid, normalized: bool = True) -> CorrelationTrace:
    """Intensity autocorrelation of the fluorescence alone."""
    engine = RegressionEngine(params, tau_grid)
    values = engine.correlate(AtomicOperator.SIGMA_PLUS, AtomicOperator.NUMBER, AtomicOperator.SIGMA_MINUS).real
    if normalized:
        if engine.rho_ee == 0.0:
            raise InputError("division by zero: g2 cannot be normalized at s = 0")
        values = values / engine.rho_ee ** 2
    return CorrelationTrace(engine.tau_grid, values, TraceKind.G2_RF, normalized=normalized,
                            metadata={"rho_ee": engine.rho_ee})


def third_order_moment(params: SystemParams, tau_grid, side: str = "left") -> CorrelationTrace:
    """⟨σ⁺(0) σ⁺σ⁻(τ)⟩ (left) or ⟨σ⁺σ⁻(τ) σ⁻(0)⟩ (right)."""
    engine = RegressionEngine(params, tau_grid)
    if side == "left":
        values = engine.correlate(AtomicOperator.SIGMA_PLUS, AtomicOperator.NUMBER, AtomicOperator.IDENTITY)
        kind = TraceKind.THIRD_ORDER_LEFT
    elif side == "right":
        values = engine.correlate(AtomicOperator.IDENTITY, AtomicOperator.NUMBER, AtomicOperator.SIGMA_MINUS)
        kind = TraceKind.THIRD_ORDER_RIGHT
    else:
        raise InputError(f"side must be 'left' or 'right', got {side!r}")
    return CorrelationTrace(engine.tau_grid, values, kind)


# ── Quadrature fluctuations ───────────────────────────────────────


def in_phase_rotation(coherence: complex) -> float:
    """θ with ⟨σ⁻⟩e^{iθ} real and positive (0 when the coherence vanishes)."""
    if coherence == 0:
        return 0.0
    return -math.atan2(coherence.imag, coherence.real)


@dataclass
class FluctuationKernels:
    """Fluctuation correlators in the frame b = σ⁻ e^{iθ}.

    ``anomalous`` = ⟨Δb(τ)Δb(0)⟩ and ``normal`` = ⟨Δb†(0)Δb(τ)⟩; the
    normally and time-ordered quadrature autocorrelation is
    ½·Re[e^{2iφ}·anomalous + normal].
    """

    tau_grid: np.ndarray
    anomalous: np.ndarray
    normal: np.ndarray
    rotation: float

    def quadrature(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        phase = np.exp(2j * phi)[..., None]
        return 0.5 * np.real(phase * self.anomalous + self.normal)

    def scaled(self, weight: float) -> "FluctuationKernels":
        return FluctuationKernels(self.tau_grid, weight * self.anomalous, weight * self.normal, self.rotation)

    def __add__(self, other: "FluctuationKernels") -> "FluctuationKernels":
        return FluctuationKernels(self.tau_grid, self.anomalous + other.anomalous,
                                  self.normal + other.normal, self.rotation)


def fluctuation_kernels(params: SystemParams, tau_grid, rotation: Optional[float] = None) -> FluctuationKernels:
    """Kernels in the in-phase frame of ``params`` unless ``rotation`` pins θ.

    Pinning θ keeps a laboratory phase reference fixed while Δ varies, which
    is what spectral wandering does to a real interferometer.
    """
    engine = RegressionEngine(params, tau_grid)
    mean = engine.coherence
    theta = in_phase_rotation(mean) if rotation is None else rotation
    bb = engine.correlate(AtomicOperator.IDENTITY, AtomicOperator.SIGMA_MINUS, AtomicOperator.SIGMA_MINUS)
    bdb = engine.correlate(AtomicOperator.SIGMA_PLUS, AtomicOperator.SIGMA_MINUS, AtomicOperator.IDENTITY)
    anomalous = np.exp(2j * theta) * (bb - mean ** 2)
    normal = bdb - abs(mean) ** 2
    return FluctuationKernels(engine.tau_grid, anomalous, normal, theta)


def quadrature_fluctuation_autocorrelation(params: SystemParams, phi: float, tau_grid,
                                           rotation: Optional[float] = None) -> CorrelationTrace:
    """⟨:ΔX(φ,0)ΔX(φ,τ):⟩ with φ measured from the mean-dipole phase."""
    kernels = fluctuation_kernels(params, tau_grid, rotation)
    values = kernels.quadrature(phi)
    return CorrelationTrace(kernels.tau_grid, values, TraceKind.QUADRATURE_FLUCT, phase=float(phi),
                            metadata={"rotation": kernels.rotation})
