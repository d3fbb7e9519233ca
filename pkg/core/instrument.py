"""Instrument imperfections applied to the ideal theory.

Three effects degrade the measured quadrature statistics:
  * the detector timing response (IRF), a convolution in τ;
  * quasi-static spectral wandering of the emitter, a Gauss–Hermite average
    over the detuning at a fixed laboratory phase reference;
  * interferometer phase jitter, a circular Gaussian smoothing in φ.

``degraded_variance_scan`` chains them in that order: wandering and the IRF
act on the fluctuation kernels before φ is chosen, jitter acts on N(φ).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, TypeVar

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.ndimage import convolve1d
from scipy.optimize import brentq

from core.correlators import (
    CorrelationTrace,
    FluctuationKernels,
    default_tau_grid,
    fluctuation_kernels,
    in_phase_rotation,
)
from core.dynamics import solve_steady_state
from core.errors import AccuracyError, InputError, NoSolutionError
from core.quadratures import QuadratureScan, ScanAxis, variance_power_scan
from core.schemas import InstrumentModel, SystemParams

logger = logging.getLogger(__name__)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
IDEAL_FLOOR = -1.0 / 32.0
MAX_WANDERING_NODES = 256
WANDERING_RTOL = 1e-6
CALIBRATION_XTOL = 1e-10

T = TypeVar("T")


# ── Detector response ─────────────────────────────────────────────


class IRFKernel(Protocol):
    fwhm: float

    def weights(self, step: float) -> np.ndarray:
        """Odd-length, unit-sum sampled kernel centered on its middle element."""
        ...


@dataclass(frozen=True)
class GaussianKernel:
    fwhm: float
    truncate: float = 6.0

    @property
    def sigma(self) -> float:
        return self.fwhm / FWHM_PER_SIGMA

    def weights(self, step: float) -> np.ndarray:
        if self.fwhm == 0:
            return np.ones(1)
        half = max(1, int(math.ceil(self.truncate * self.sigma / step)))
        offsets = np.arange(-half, half + 1) * step
        w = np.exp(-0.5 * (offsets / self.sigma) ** 2)
        return w / w.sum()


KERNELS: dict[str, Callable[[float], IRFKernel]] = {"gaussian": GaussianKernel}


def kernel_for(model: InstrumentModel) -> IRFKernel:
    try:
        return KERNELS[model.irf_kernel](model.irf_fwhm)
    except KeyError:
        raise InputError(f"unknown IRF kernel {model.irf_kernel!r}") from None


def _convolve_even(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Convolve the even extension of ``values`` (τ ≥ 0 samples) and return the τ ≥ 0 half."""
    n = values.size
    full = np.concatenate([values[:0:-1], values])
    if np.iscomplexobj(full):
        out = (convolve1d(full.real, weights, mode="nearest")
               + 1j * convolve1d(full.imag, weights, mode="nearest"))
    else:
        out = convolve1d(full, weights, mode="nearest")
    return out[n - 1:]


def _check_convolvable(tau_grid: np.ndarray, fwhm: float) -> float:
    steps = np.diff(tau_grid)
    if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise InputError("IRF convolution needs a uniform tau grid with at least two points")
    if fwhm > tau_grid[-1]:
        raise AccuracyError(f"IRF FWHM {fwhm} exceeds the trace span {tau_grid[-1]}", defect=fwhm - tau_grid[-1])
    return float(steps[0])


def convolve_samples(values: np.ndarray, tau_grid: np.ndarray, model: InstrumentModel) -> np.ndarray:
    """IRF-convolve raw τ ≥ 0 samples on a uniform ``tau_grid``."""
    kernel = kernel_for(model)
    if kernel.fwhm == 0:
        return values
    step = _check_convolvable(tau_grid, kernel.fwhm)
    return _convolve_even(values, kernel.weights(step))


def convolve_irf(trace: CorrelationTrace, model: InstrumentModel,
                 kernel: Optional[IRFKernel] = None) -> CorrelationTrace:
    """Two-sided detector-response convolution of a τ ≥ 0 trace."""
    kernel = kernel or kernel_for(model)
    if kernel.fwhm == 0:
        return trace
    step = _check_convolvable(trace.tau_grid, kernel.fwhm)
    values = _convolve_even(trace.values, kernel.weights(step))
    metadata = dict(trace.metadata, irf_fwhm=kernel.fwhm)
    return CorrelationTrace(trace.tau_grid, values, trace.kind, trace.phase, trace.normalized,
                            trace.beta2, metadata)


def convolve_kernels(kernels: FluctuationKernels, model: InstrumentModel) -> FluctuationKernels:
    kernel = kernel_for(model)
    if kernel.fwhm == 0:
        return kernels
    step = _check_convolvable(kernels.tau_grid, kernel.fwhm)
    w = kernel.weights(step)
    return FluctuationKernels(kernels.tau_grid, _convolve_even(kernels.anomalous, w),
                              _convolve_even(kernels.normal, w), kernels.rotation)


# ── Spectral wandering ────────────────────────────────────────────


def wandering_nodes(detuning: float, sigma: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Detunings and probability weights of an n-point Gauss–Hermite rule for Normal(Δ₀, σ²)."""
    x, w = hermgauss(nodes)
    return detuning + math.sqrt(2.0) * sigma * x, w / math.sqrt(math.pi)


def _weighted_sum(values: list, weights: np.ndarray):
    if hasattr(values[0], "scaled"):
        total = values[0].scaled(weights[0])
        for value, weight in zip(values[1:], weights[1:]):
            total = total + value.scaled(weight)
        return total
    result = np.tensordot(weights, np.asarray(values), axes=1)
    return float(result) if np.ndim(result) == 0 and not np.iscomplexobj(result) else result


def _distance(a, b) -> tuple[float, float]:
    if isinstance(a, FluctuationKernels):
        a = np.concatenate([a.anomalous, a.normal])
        b = np.concatenate([b.anomalous, b.normal])
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b))), float(np.max(np.abs(a))) if a.size else 0.0


def average_spectral_wandering(evaluator: Callable[[SystemParams], T], params: SystemParams,
                               model: InstrumentModel) -> T:
    """Average ``evaluator`` over Δ ~ Normal(params.detuning, wandering_sigma²).

    The rule starts at ``model.wandering_nodes`` and doubles until two
    successive rules agree; otherwise ``AccuracyError`` carries the last
    difference.
    """
    sigma = model.wandering_sigma
    if sigma == 0:
        return evaluator(params)
    if sigma >= params.gamma:
        logger.warning("wandering sigma %.3g is not sub-linewidth (gamma %.3g)", sigma, params.gamma)

    def rule(n: int):
        detunings, weights = wandering_nodes(params.detuning, sigma, n)
        return _weighted_sum([evaluator(params.with_detuning(d)) for d in detunings], weights)

    n = model.wandering_nodes
    previous = rule(n)
    diff = math.inf
    limit = max(MAX_WANDERING_NODES, 2 * n)
    while 2 * n <= limit:
        n *= 2
        current = rule(n)
        diff, scale = _distance(current, previous)
        if diff <= WANDERING_RTOL * max(scale, 1e-12):
            logger.debug("wandering average converged with %d nodes (diff %.2e)", n, diff)
            return current
        previous = current
    logger.warning("wandering average not converged at %d nodes (diff %.2e)", n, diff)
    raise AccuracyError(f"spectral-wandering average did not converge with {n} nodes", defect=diff)


# ── Phase jitter ──────────────────────────────────────────────────


def _full_period(phis: np.ndarray) -> tuple[float, bool]:
    """Grid step and whether the last point duplicates the first (mod 2π)."""
    if phis.size < 3:
        raise InputError("phase jitter needs a uniform grid over a full period")
    steps = np.diff(phis)
    step = steps[0]
    if not np.allclose(steps, step, rtol=1e-9, atol=1e-12):
        raise InputError("phase jitter needs a uniformly spaced grid")
    span = phis[-1] - phis[0]
    if math.isclose(span, 2 * math.pi, rel_tol=1e-9):
        return step, True
    if math.isclose(span + step, 2 * math.pi, rel_tol=1e-9):
        return step, False
    raise InputError(f"phase grid spans {span:.6f} rad, not a full 2*pi period")


def smooth_circular(values: np.ndarray, step: float, sigma: float) -> np.ndarray:
    """Circular convolution with a wrapped Gaussian of std ``sigma`` (radians)."""
    spectrum = np.fft.rfft(values)
    k = 2.0 * math.pi * np.fft.rfftfreq(values.size, d=step)
    return np.fft.irfft(spectrum * np.exp(-0.5 * (k * sigma) ** 2), n=values.size)


def apply_phase_jitter(scan: QuadratureScan, model: InstrumentModel) -> QuadratureScan:
    sigma = model.phase_jitter_sigma
    if scan.axis is not ScanAxis.PHASE:
        raise InputError("phase jitter applies to phase scans only")
    if sigma == 0:
        return scan
    step, duplicate = _full_period(scan.grid)
    values = scan.variance[:-1] if duplicate else scan.variance
    smoothed = smooth_circular(values, step, sigma)
    if duplicate:
        smoothed = np.append(smoothed, smoothed[0])
    metadata = dict(scan.metadata, phase_jitter_sigma=sigma)
    return QuadratureScan(scan.axis, scan.grid, smoothed, metadata)


# ── Degraded pipeline ─────────────────────────────────────────────


def _pipeline_tau_grid(params: SystemParams, model: InstrumentModel, tau_grid) -> np.ndarray:
    if tau_grid is not None:
        return np.asarray(tau_grid, dtype=float)
    grid = default_tau_grid(params)
    if model.irf_fwhm > 0:
        span = max(grid[-1], 8.0 * model.irf_fwhm)
        step = min(grid[1], model.irf_fwhm / 10.0)
        grid = np.arange(0.0, span + 0.5 * step, step)
    return grid


def degraded_kernels(params: SystemParams, model: InstrumentModel, tau_grid=None) -> FluctuationKernels:
    """Wandering-averaged, IRF-convolved fluctuation kernels at the nominal phase reference."""
    taus = _pipeline_tau_grid(params, model, tau_grid)
    rotation = in_phase_rotation(solve_steady_state(params).sigma_minus)
    averaged = average_spectral_wandering(lambda p: fluctuation_kernels(p, taus, rotation), params, model)
    return convolve_kernels(averaged, model)


def _kernel_variance(kernels: FluctuationKernels, phis, jitter: float) -> np.ndarray:
    """N(φ) from the τ = 0 kernels with exact Gaussian jitter on the 2φ harmonic."""
    anomalous = kernels.anomalous[0] * math.exp(-2.0 * jitter ** 2)
    return 0.5 * np.real(np.exp(2j * np.asarray(phis, dtype=float)) * anomalous + kernels.normal[0])


def degraded_variance_scan(params: SystemParams, model: InstrumentModel, phi_grid, tau_grid=None) -> QuadratureScan:
    phis = np.asarray(phi_grid, dtype=float)
    if phis.ndim != 1 or phis.size == 0:
        raise InputError("phase grid must be a non-empty 1-D sequence")
    kernels = degraded_kernels(params, model, tau_grid)
    scan = QuadratureScan(ScanAxis.PHASE, phis, _kernel_variance(kernels, phis, 0.0),
                          {"params": params.model_dump(), "instrument": model.model_dump()})
    try:
        return apply_phase_jitter(scan, model)
    except InputError:
        # partial grids: the jitter acts on the single 2φ harmonic, so apply it exactly
        scan.variance = _kernel_variance(kernels, phis, model.phase_jitter_sigma)
        scan.metadata["phase_jitter_sigma"] = model.phase_jitter_sigma
        return scan


def degraded_in_phase(params: SystemParams, model: InstrumentModel, tau_grid=None) -> float:
    """Degraded N(0)."""
    kernels = degraded_kernels(params, model, tau_grid)
    return float(_kernel_variance(kernels, [0.0], model.phase_jitter_sigma)[0])


def degraded_power_curve(params: SystemParams, model: InstrumentModel, s_grid) -> tuple[QuadratureScan, QuadratureScan]:
    """Ideal and degraded in-phase variance across ``s_grid``."""
    ideal, _ = variance_power_scan(params, s_grid)
    degraded = np.array([degraded_in_phase(params.with_saturation(float(s)), model) for s in ideal.grid])
    metadata = dict(ideal.metadata, instrument=model.model_dump())
    return ideal, QuadratureScan(ScanAxis.POWER, ideal.grid, degraded, metadata)


# ── Calibration ───────────────────────────────────────────────────


@dataclass
class CalibrationResult:
    model: InstrumentModel
    achieved: float
    target: float
    free: str
    ideal: float
    power_curve: Optional[tuple[QuadratureScan, QuadratureScan]] = None
    bracket: dict = field(default_factory=dict)


def calibrate_imperfections(params: SystemParams, model: InstrumentModel, target: float,
                            free: str = "phase_jitter_sigma", s_grid=None,
                            tolerance: float = 1e-6) -> CalibrationResult:
    """Root-find the ``free`` width so the degraded N(0) equals ``target``.

    The other widths of ``model`` stay pinned. With ``s_grid`` the degraded
    power curve of the calibrated model is attached.
    """
    if free not in ("phase_jitter_sigma", "irf_fwhm"):
        raise InputError(f"free parameter must be phase_jitter_sigma or irf_fwhm, got {free!r}")
    if target < IDEAL_FLOOR - 1e-12:
        raise NoSolutionError("target lies below the ideal squeezing floor of -1/32",
                              bracket={"target": target, "floor": IDEAL_FLOOR})

    ideal = float(_kernel_variance(fluctuation_kernels(params, [0.0]), [0.0], 0.0)[0])
    taus = _pipeline_tau_grid(params, model, None)

    if free == "phase_jitter_sigma":
        kernels = degraded_kernels(params, model.model_copy(update={"phase_jitter_sigma": 0.0}), taus)

        def degraded(width: float) -> float:
            return float(_kernel_variance(kernels, [0.0], width)[0])

        upper = math.pi
    else:
        # room for wide kernels and a fine step for narrow ones
        upper = 0.5 * taus[-1]
        step = upper / 2000.0
        taus = np.arange(0.0, 2.0 * upper + 0.5 * step, step)

        def degraded(width: float) -> float:
            return degraded_in_phase(params, model.model_copy(update={"irf_fwhm": width}), taus)

    start = degraded(0.0)
    if abs(start - target) <= tolerance:
        logger.info("target %.6f already met without %s", target, free)
        calibrated = model.model_copy(update={free: 0.0})
        return _result(params, calibrated, start, target, free, ideal, s_grid, {"lower": 0.0})

    end = degraded(upper)
    bracket = {"free": free, "lower": 0.0, "upper": upper, "value_lower": start, "value_upper": end,
               "target": target}
    if (start - target) * (end - target) > 0:
        raise NoSolutionError(f"target {target} is not reachable by varying {free}", bracket=bracket)

    width = brentq(lambda w: degraded(w) - target, 0.0, upper, xtol=CALIBRATION_XTOL)
    calibrated = model.model_copy(update={free: float(width)})
    achieved = degraded(width)
    logger.info("calibrated %s=%.6g: degraded N(0)=%.6f (target %.6f, ideal %.6f)",
                free, width, achieved, target, ideal)
    return _result(params, calibrated, achieved, target, free, ideal, s_grid, bracket)


def _result(params, model, achieved, target, free, ideal, s_grid, bracket) -> CalibrationResult:
    curve = degraded_power_curve(params, model, s_grid) if s_grid is not None else None
    return CalibrationResult(model=model, achieved=achieved, target=target, free=free, ideal=ideal,
                             power_curve=curve, bracket=bracket)
