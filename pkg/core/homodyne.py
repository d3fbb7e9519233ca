"""Superimposed fluorescence + local-oscillator field and its intensity correlations.

The detected field is E⁽⁺⁾ = b + α with b the in-phase-rotated emitter
lowering operator and α = β·e^{−iφ} the classical LO amplitude. Intensities
are in units where the fluorescence gives ⟨b†b⟩ = ρ_ee and the LO gives β².

G²(τ) = ⟨E⁻(0)E⁻(τ)E⁺(τ)E⁺(0)⟩ expands into 16 operator products; each factor
is either its field operator (x = 1) or the c-number (x = 0). A pattern
(x1, x2, x3, x4) contributes

    (α*)^{2−x1−x2} · α^{2−x3−x4} · ⟨(b†)^{x1}(0) [(b†)^{x2} b^{x3}](τ) b^{x4}(0)⟩

and belongs to the |β|ⁿ term with n = 4 − Σx. In closed form:

    n = 4:  1
    n = 3:  4⟨X(φ)⟩
    n = 2:  2ρ_ee + 2Re[e^{2iφ}⟨b⟩²] + 2|⟨b⟩|² + 4·⟨:ΔX(φ,0)ΔX(φ,τ):⟩
    n = 1:  2Re[e^{iφ}(⟨b†(0) b†b(τ)⟩ + ⟨b†(0) b(τ) b(0)⟩)] (τ-dependent)
    n = 0:  ⟨b†(0) b†b(τ) b(0)⟩ = G²_RF(τ)

The LO phase convention e^{−iφ} makes φ = 0 the in-phase quadrature, matching
``core.quadratures``.
"""

from __future__ import annotations

import copy
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from core.correlators import (
    AtomicOperator,
    CorrelationTrace,
    RegressionEngine,
    TraceKind,
    in_phase_rotation,
)
from core.dynamics import solve_steady_state
from core.errors import InputError, NoSolutionError
from core.schemas import LOConfig, SystemParams

logger = logging.getLogger(__name__)

PATTERNS = tuple(itertools.product((0, 1), repeat=4))

_LEFT = {0: AtomicOperator.IDENTITY, 1: AtomicOperator.SIGMA_PLUS}
_RIGHT = {0: AtomicOperator.IDENTITY, 1: AtomicOperator.SIGMA_MINUS}
_MID = {
    (0, 0): AtomicOperator.IDENTITY,
    (1, 0): AtomicOperator.SIGMA_PLUS,
    (0, 1): AtomicOperator.SIGMA_MINUS,
    (1, 1): AtomicOperator.NUMBER,
}


def lo_amplitude(lo: LOConfig) -> complex:
    """α = β·e^{−iφ}."""
    return lo.amplitude * complex(math.cos(lo.phase), -math.sin(lo.phase))


def _check_visibility(visibility: float) -> None:
    if not (0.0 <= visibility <= 1.0) or math.isnan(visibility):
        raise InputError(f"visibility must lie in [0, 1], got {visibility!r}")


class CorrelatorBank:
    """All 16 operator products for one emitter configuration, on one τ-grid.

    ``rotation`` pins the frame b = σ⁻e^{iθ}; by default θ puts ⟨b⟩ on the
    positive real axis. Evaluating G² for a new LO amplitude is then a
    weighted sum with no further propagation.
    """

    def __init__(self, params: SystemParams, tau_grid, rotation: Optional[float] = None):
        engine = RegressionEngine(params, tau_grid)
        self.params = params
        self.tau_grid = engine.tau_grid
        self.rho_ee = engine.rho_ee
        self.rotation = in_phase_rotation(engine.coherence) if rotation is None else float(rotation)
        self.mean_field = engine.coherence * complex(math.cos(self.rotation), math.sin(self.rotation))
        self.products: dict[tuple[int, int, int, int], np.ndarray] = {}
        for pattern in PATTERNS:
            x1, x2, x3, x4 = pattern
            phase = np.exp(1j * self.rotation * (x3 + x4 - x1 - x2))
            self.products[pattern] = phase * engine.correlate(_LEFT[x1], _MID[(x2, x3)], _RIGHT[x4])

    def map_products(self, transform: Callable[[np.ndarray], np.ndarray]) -> "CorrelatorBank":
        """Copy of the bank with every product trace passed through ``transform`` (e.g. an IRF)."""
        clone = copy.copy(self)
        clone.products = {pattern: transform(values) for pattern, values in self.products.items()}
        return clone

    def total(self, alpha: complex) -> np.ndarray:
        """G²(τ) for a coherent amplitude ``alpha`` added to the emitter field."""
        result = np.zeros(self.tau_grid.shape, dtype=complex)
        conj = alpha.conjugate()
        for (x1, x2, x3, x4), product in self.products.items():
            result += conj ** (2 - x1 - x2) * alpha ** (2 - x3 - x4) * product
        return _real(result, "g2_total")

    def intensity(self, alpha: complex) -> float:
        """⟨E⁻E⁺⟩ = ρ_ee + |α|² + 2Re(α*⟨b⟩)."""
        return float(self.rho_ee + abs(alpha) ** 2 + 2.0 * (alpha.conjugate() * self.mean_field).real)

    def terms(self, phi: float) -> np.ndarray:
        """Coefficients of βⁿ for n = 0..4 at LO phase ``phi``; shape (5, len(tau_grid))."""
        result = np.zeros((5,) + self.tau_grid.shape, dtype=complex)
        for (x1, x2, x3, x4), product in self.products.items():
            order = 4 - (x1 + x2 + x3 + x4)
            result[order] += np.exp(1j * phi * (x3 + x4 - x1 - x2)) * product
        return _real(result, "decomposition terms")

    def mean_field_second_order(self, phi: float) -> float:
        """Part of the β² term that factorizes into single-time moments."""
        b = self.mean_field
        return float(2.0 * self.rho_ee + 2.0 * (np.exp(2j * phi) * b * b).real + 2.0 * abs(b) ** 2)


def _real(values: np.ndarray, label: str) -> np.ndarray:
    residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
    scale = max(1.0, float(np.max(np.abs(values.real))) if values.size else 1.0)
    if residue > 1e-9 * scale:
        logger.warning("%s carries imaginary residue %.3e", label, residue)
    return values.real


@dataclass
class HomodyneDecomposition:
    """Split of G²_total by powers of the LO amplitude β.

    ``quadrature_term`` is ⟨:ΔX(φ,0)ΔX(φ,τ):⟩; inside ``terms[2]`` it appears
    multiplied by 4, so in G²_total it carries ``scale`` = 4β².
    """

    terms: list[CorrelationTrace]
    total: CorrelationTrace
    quadrature_term: CorrelationTrace
    scale: float
    beta: float
    metadata: dict = field(default_factory=dict)

    def reconstruct(self) -> np.ndarray:
        return sum(term.values * self.beta ** n for n, term in enumerate(self.terms))


def sl_intensity(params: SystemParams, lo: LOConfig, visibility: float = 1.0) -> float:
    """Single-detector intensity I_RF + I_LO + 2V·β·|⟨σ⁻⟩|·cos φ.

    The coherent part of the fluorescence has amplitude |⟨σ⁻⟩| = sqrt(ρ_ee)·|c|,
    so the cross term equals 2V·sqrt(I_RF·I_LO)·|c|·cos φ.
    """
    _check_visibility(visibility)
    state = solve_steady_state(params)
    return float(state.rho_ee + lo.intensity
                 + 2.0 * visibility * lo.amplitude * abs(state.sigma_minus) * math.cos(lo.phase))


def fringe_visibility(params: SystemParams, lo: LOConfig, visibility: float = 1.0) -> float:
    """(I_max − I_min)/(I_max + I_min) of the fringe swept by φ."""
    _check_visibility(visibility)
    state = solve_steady_state(params)
    mean = state.rho_ee + lo.intensity
    if mean == 0:
        return 0.0
    return float(2.0 * visibility * lo.amplitude * abs(state.sigma_minus) / mean)


def mode_overlap_for_visibility(params: SystemParams, lo: LOConfig, target: float) -> float:
    """Mode-overlap multiplier V that brings the fringe visibility down to ``target``."""
    if not (0.0 < target <= 1.0):
        raise InputError(f"target visibility must lie in (0, 1], got {target!r}")
    ideal = fringe_visibility(params, lo, 1.0)
    if ideal < target:
        raise NoSolutionError("target visibility exceeds the ideal fringe visibility",
                              bracket={"ideal": ideal, "target": target})
    return target / ideal


def g2_total(params: SystemParams, lo: LOConfig, tau_grid, visibility: float = 1.0,
             bank: Optional[CorrelatorBank] = None) -> CorrelationTrace:
    """Unnormalized G²(τ) of the superimposed field.

    With ``visibility`` V < 1 the LO amplitude V·β overlaps the fluorescence
    mode and the remaining intensity (1 − V²)β² arrives in an orthogonal
    mode that adds to the coincidences without interfering.
    """
    _check_visibility(visibility)
    bank = bank or CorrelatorBank(params, tau_grid)
    alpha = visibility * lo_amplitude(lo)
    values = bank.total(alpha)
    if visibility < 1.0:
        stray = (1.0 - visibility ** 2) * lo.intensity
        values = values + 2.0 * stray * bank.intensity(alpha) + stray ** 2
    return CorrelationTrace(bank.tau_grid, values, TraceKind.G2_TOTAL, phase=lo.phase,
                            beta2=lo.intensity, metadata={"visibility": visibility})


def decompose_by_lo_order(params: SystemParams, lo: LOConfig, tau_grid,
                          bank: Optional[CorrelatorBank] = None) -> HomodyneDecomposition:
    bank = bank or CorrelatorBank(params, tau_grid)
    coefficients = bank.terms(lo.phase)
    terms = [
        CorrelationTrace(bank.tau_grid, coefficients[n], TraceKind.DECOMPOSITION_TERM, phase=lo.phase,
                         beta2=lo.intensity, metadata={"order": n})
        for n in range(5)
    ]
    total = g2_total(params, lo, tau_grid, bank=bank)
    payload = (coefficients[2] - bank.mean_field_second_order(lo.phase)) / 4.0
    quadrature_term = CorrelationTrace(bank.tau_grid, payload, TraceKind.QUADRATURE_FLUCT, phase=lo.phase,
                                       beta2=lo.intensity)
    return HomodyneDecomposition(terms=terms, total=total, quadrature_term=quadrature_term,
                                 scale=4.0 * lo.intensity, beta=lo.amplitude,
                                 metadata={"rotation": bank.rotation, "rho_ee": bank.rho_ee})
