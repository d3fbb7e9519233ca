"""Subcommand handlers and the config lookups they share."""

import logging
import math

import numpy as np

from core.correlators import default_tau_grid
from core.dynamics import solve_steady_state
from core.homodyne import mode_overlap_for_visibility
from core.schemas import InstrumentModel, LOConfig, RunConfig, SystemParams

logger = logging.getLogger(__name__)


def instrument_of(config: RunConfig) -> InstrumentModel:
    return config.instrument or InstrumentModel()


def time_unit_s(config: RunConfig) -> float:
    return instrument_of(config).time_unit_s


def tau_grid_of(config: RunConfig, params: SystemParams) -> np.ndarray:
    return default_tau_grid(params, config.sweep.tau_span, config.sweep.tau_points)


def local_oscillator(config: RunConfig, params: SystemParams, phase: float | None = None) -> LOConfig:
    """Configured LO, or one matched to the RF intensity when no amplitude is given."""
    phase = config.lo.phase if phase is None else phase
    if config.lo.amplitude is not None:
        return LOConfig(amplitude=config.lo.amplitude, phase=phase)
    return LOConfig.matched(solve_steady_state(params).rho_ee, phase)


def mode_overlap(config: RunConfig, params: SystemParams, lo: LOConfig) -> float:
    """An explicit visibility below 1 wins; otherwise fit the fringe visibility target."""
    if config.lo.visibility < 1.0:
        return config.lo.visibility
    overlap = mode_overlap_for_visibility(params, lo, config.lo.fringe_visibility_target)
    logger.info("mode overlap %.4f reproduces fringe visibility %.3f", overlap, config.lo.fringe_visibility_target)
    return overlap


def phase_label(phi: float) -> str:
    """File-name friendly phase, e.g. 0.5pi."""
    return f"{phi / math.pi:.3g}pi".replace("-", "m")
