"""Driven two-level emitter: Liouvillian, steady state and time propagation.

Basis: index 0 = |g⟩, index 1 = |e⟩. Density matrices are vectorized
row-major, so the vector order is (gg, ge, eg, ee) and
vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ).

Rotating-frame model:
  H = −Δ σ⁺σ⁻ + (Ω/2)(σ⁺ + σ⁻)
  dissipators Γ·D[σ⁻] and (γ_d/2)·D[σ_z]  (coherences decay at Γ/2 + γ_d)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, null_space

from core.errors import InputError, SteadyStateError
from core.schemas import SystemParams

logger = logging.getLogger(__name__)

BASIS_ORDER = ("gg", "ge", "eg", "ee")

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
PROJ_E = SIGMA_PLUS @ SIGMA_MINUS
IDENTITY = np.eye(2, dtype=complex)

_TOL = 1e-12


@dataclass(frozen=True)
class DensityMatrix2:
    """2×2 atomic state. ``rho_ge`` = ⟨g|ρ|e⟩ = ⟨σ⁺⟩; ⟨σ⁻⟩ is its conjugate."""

    rho_gg: float
    rho_ee: float
    rho_ge: complex

    @classmethod
    def from_matrix(cls, rho: np.ndarray, check: bool = True) -> "DensityMatrix2":
        state = cls(float(rho[0, 0].real), float(rho[1, 1].real), complex(rho[0, 1]))
        if check:
            state.validate()
        return state

    @classmethod
    def ground(cls) -> "DensityMatrix2":
        return cls(1.0, 0.0, 0j)

    @classmethod
    def excited(cls) -> "DensityMatrix2":
        return cls(0.0, 1.0, 0j)

    @property
    def rho_eg(self) -> complex:
        return self.rho_ge.conjugate()

    @property
    def sigma_minus(self) -> complex:
        """Steady coherence ⟨σ⁻⟩ = ρ_eg."""
        return self.rho_eg

    @property
    def trace(self) -> float:
        return self.rho_gg + self.rho_ee

    def matrix(self) -> np.ndarray:
        return np.array([[self.rho_gg, self.rho_ge], [self.rho_eg, self.rho_ee]], dtype=complex)

    def vector(self) -> np.ndarray:
        return self.matrix().reshape(4)

    def validate(self) -> None:
        if not all(math.isfinite(v) for v in (self.rho_gg, self.rho_ee, self.rho_ge.real, self.rho_ge.imag)):
            raise InputError("density matrix has non-finite entries")
        if abs(self.trace - 1.0) > _TOL:
            raise InputError(f"density matrix trace {self.trace!r} differs from 1")
        if self.rho_gg < -_TOL or self.rho_ee < -_TOL:
            raise InputError("density matrix has negative populations")
        if self.rho_gg * self.rho_ee < abs(self.rho_ge) ** 2 - _TOL:
            raise InputError("density matrix is not positive semidefinite")


@dataclass(frozen=True)
class Liouvillian:
    """4×4 generator acting on vec(ρ) in ``BASIS_ORDER``."""

    matrix: np.ndarray
    params: SystemParams
    basis_order: tuple[str, ...] = BASIS_ORDER


def _check_finite(params: SystemParams) -> None:
    values = (params.gamma, params.rabi, params.detuning, params.dephasing)
    if any(v is None or not math.isfinite(v) for v in values):
        raise InputError(f"non-finite system parameters: {values}")
    if params.gamma < 0 or params.rabi < 0 or params.dephasing < 0:
        raise InputError("gamma, rabi and dephasing must be non-negative")


def _spre(a: np.ndarray) -> np.ndarray:
    return np.kron(a, IDENTITY)


def _spost(b: np.ndarray) -> np.ndarray:
    return np.kron(IDENTITY, b.T)


def _dissipator(c: np.ndarray) -> np.ndarray:
    cdc = c.conj().T @ c
    return np.kron(c, c.conj()) - 0.5 * (_spre(cdc) + _spost(cdc))


def hamiltonian(params: SystemParams) -> np.ndarray:
    return -params.detuning * PROJ_E + 0.5 * params.rabi * (SIGMA_PLUS + SIGMA_MINUS)


def build_liouvillian(params: SystemParams) -> Liouvillian:
    """Generator of the master equation for ``params``."""
    _check_finite(params)
    h = hamiltonian(params)
    generator = -1j * (_spre(h) - _spost(h))
    generator = generator + params.gamma * _dissipator(SIGMA_MINUS)
    if params.dephasing:
        generator = generator + 0.5 * params.dephasing * _dissipator(SIGMA_Z)
    return Liouvillian(matrix=generator, params=params)


def steady_state(liouvillian: Liouvillian) -> DensityMatrix2:
    """Unique fixed point of the generator, normalized to unit trace."""
    if liouvillian.params.gamma <= 0:
        raise SteadyStateError("no unique steady state without radiative decay (gamma = 0)")
    kernel = null_space(liouvillian.matrix, rcond=1e-13)
    if kernel.shape[1] != 1:
        raise SteadyStateError(f"generator kernel has dimension {kernel.shape[1]}, expected 1")
    vec = kernel[:, 0]
    rho = vec.reshape(2, 2)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    residual = np.linalg.norm(liouvillian.matrix @ rho.reshape(4))
    if residual > 1e-12:
        logger.warning("steady-state residual %.3e above 1e-12", residual)
    return DensityMatrix2.from_matrix(rho)


def propagator(liouvillian: Liouvillian, tau_grid: np.ndarray) -> np.ndarray:
    """exp(L τ) for every τ in ``tau_grid``; shape (len(tau_grid), 4, 4)."""
    taus = np.asarray(tau_grid, dtype=float)
    if np.any(taus < 0) or not np.all(np.isfinite(taus)):
        raise InputError("propagation times must be finite and non-negative")
    return expm(liouvillian.matrix[None, :, :] * taus[:, None, None])


def propagate(liouvillian: Liouvillian, rho0: DensityMatrix2, tau: float) -> DensityMatrix2:
    """Evolve ``rho0`` for a time ``tau`` ≥ 0 with exp(L τ)."""
    if not math.isfinite(tau) or tau < 0:
        raise InputError(f"tau must be finite and non-negative, got {tau!r}")
    if tau == 0:
        return rho0
    vec = expm(liouvillian.matrix * tau) @ rho0.vector()
    rho = vec.reshape(2, 2)
    return DensityMatrix2.from_matrix(0.5 * (rho + rho.conj().T))


def rabi_from_saturation(s: float, gamma: float) -> float:
    """Ω = Γ·sqrt(s/2): the drive at which ρ_ee(Δ=0, γ_d=0) = s/(2(1+s))."""
    if not math.isfinite(s) or s < 0:
        raise InputError(f"saturation parameter must be >= 0, got {s!r}")
    if not math.isfinite(gamma) or gamma <= 0:
        raise InputError(f"gamma must be > 0, got {gamma!r}")
    return gamma * math.sqrt(s / 2.0)


def saturation_from_rabi(rabi: float, gamma: float) -> float:
    return 2.0 * rabi ** 2 / gamma ** 2


def effective_saturation(params: SystemParams) -> float:
    """s reproducing the actual ρ_ee through ρ_ee = s/(2(1+s)), for any Δ and γ_d."""
    rho_ee = steady_state(build_liouvillian(params)).rho_ee
    return 2.0 * rho_ee / (1.0 - 2.0 * rho_ee)


def solve_steady_state(params: SystemParams) -> DensityMatrix2:
    return steady_state(build_liouvillian(params))
