"""Tests for core/instrument.py."""

import math

import numpy as np
import pytest

from core.correlators import g2_rf
from core.dynamics import solve_steady_state
from core.errors import AccuracyError, InputError, NoSolutionError
from core.instrument import (
    GaussianKernel,
    apply_phase_jitter,
    average_spectral_wandering,
    calibrate_imperfections,
    convolve_irf,
    degraded_in_phase,
    degraded_kernels,
    degraded_power_curve,
    degraded_variance_scan,
    wandering_nodes,
)
from core.quadratures import (
    QuadratureScan,
    ScanAxis,
    normally_ordered_variance,
    squeezing_percent,
    variance_phase_scan,
    variance_power_scan,
)
from core.schemas import InstrumentModel, SystemParams

WEAK = SystemParams(gamma=1.0, s=0.1)
FULL_PERIOD = np.linspace(-math.pi, math.pi, 181)


def _ideal_in_phase(params=WEAK):
    return normally_ordered_variance(params, 0.0).normally_ordered_variance


def _jittered_in_phase(params, sigma):
    state = solve_steady_state(params)
    coherence_sq = abs(state.sigma_minus) ** 2
    return 0.5 * state.rho_ee - coherence_sq * 0.5 * (1.0 + math.exp(-2.0 * sigma ** 2))


class TestIRF:
    def test_kernel_is_normalized(self):
        weights = GaussianKernel(0.5).weights(0.01)
        assert weights.sum() == pytest.approx(1.0)
        assert weights.size % 2 == 1

    def test_zero_width_is_identity(self):
        trace = g2_rf(WEAK, np.linspace(0.0, 15.0, 301))
        assert convolve_irf(trace, InstrumentModel()) is trace

    def test_fills_antibunching_dip(self):
        trace = g2_rf(WEAK, np.linspace(0.0, 15.0, 301))
        blurred = convolve_irf(trace, InstrumentModel(irf_fwhm=0.5))
        assert blurred.values[0] > 1e-3
        assert blurred.values[-1] == pytest.approx(trace.values[-1], abs=1e-4)
        assert blurred.metadata["irf_fwhm"] == 0.5

    def test_needs_uniform_grid(self):
        trace = g2_rf(WEAK, [0.0, 0.1, 0.3, 0.6])
        with pytest.raises(InputError):
            convolve_irf(trace, InstrumentModel(irf_fwhm=0.1))

    def test_kernel_wider_than_trace(self):
        trace = g2_rf(WEAK, np.linspace(0.0, 1.0, 21))
        with pytest.raises(AccuracyError):
            convolve_irf(trace, InstrumentModel(irf_fwhm=2.0))


class TestSpectralWandering:
    def test_nodes_are_a_probability_rule(self):
        detunings, weights = wandering_nodes(0.2, 0.1, 16)
        assert weights.sum() == pytest.approx(1.0)
        assert np.dot(weights, detunings) == pytest.approx(0.2)
        assert np.dot(weights, (detunings - 0.2) ** 2) == pytest.approx(0.01)

    def test_zero_width_is_identity(self):
        calls = []

        def evaluator(params):
            calls.append(params)
            return 1.0

        assert average_spectral_wandering(evaluator, WEAK, InstrumentModel()) == 1.0
        assert calls == [WEAK]

    def test_lowers_mean_excitation(self):
        model = InstrumentModel(wandering_sigma=0.3)
        averaged = average_spectral_wandering(lambda p: solve_steady_state(p).rho_ee, WEAK, model)
        assert averaged < solve_steady_state(WEAK).rho_ee

    def test_degrades_in_phase_squeezing(self):
        degraded = degraded_in_phase(WEAK, InstrumentModel(wandering_sigma=0.2))
        assert _ideal_in_phase() < degraded < 0


class TestPhaseJitter:
    def test_exact_on_the_double_angle_harmonic(self):
        scan = apply_phase_jitter(variance_phase_scan(WEAK, FULL_PERIOD), InstrumentModel(phase_jitter_sigma=0.61))
        assert scan.variance[90] == pytest.approx(_jittered_in_phase(WEAK, 0.61), abs=1e-12)
        assert scan.variance[90] == pytest.approx(-0.00775, abs=1e-4)

    def test_preserves_phase_average(self):
        ideal = variance_phase_scan(SystemParams(gamma=1.0, s=0.5), FULL_PERIOD)
        smoothed = apply_phase_jitter(ideal, InstrumentModel(phase_jitter_sigma=0.4))
        assert smoothed.variance[:-1].mean() == pytest.approx(ideal.variance[:-1].mean(), abs=1e-12)
        assert smoothed.variance[0] == smoothed.variance[-1]

    def test_power_scans_rejected(self):
        in_phase, _ = variance_power_scan(WEAK, [0.1, 0.2])
        with pytest.raises(InputError):
            apply_phase_jitter(in_phase, InstrumentModel(phase_jitter_sigma=0.1))

    def test_partial_period_rejected(self):
        scan = variance_phase_scan(WEAK, np.linspace(0.0, 1.0, 11))
        with pytest.raises(InputError):
            apply_phase_jitter(scan, InstrumentModel(phase_jitter_sigma=0.1))


class TestDegradedPipeline:
    def test_ideal_model_reproduces_theory(self):
        scan = degraded_variance_scan(WEAK, InstrumentModel(), FULL_PERIOD)
        expected = variance_phase_scan(WEAK, FULL_PERIOD).variance
        assert np.max(np.abs(scan.variance - expected)) < 1e-12

    def test_partial_grid_matches_full_period(self):
        model = InstrumentModel(phase_jitter_sigma=0.5)
        full = degraded_variance_scan(WEAK, model, FULL_PERIOD)
        partial = degraded_variance_scan(WEAK, model, [0.0, math.pi / 2])
        assert partial.variance[0] == pytest.approx(full.variance[90], abs=1e-12)
        assert partial.metadata["phase_jitter_sigma"] == 0.5

    def test_combined_effects_shrink_squeezing(self):
        model = InstrumentModel(irf_fwhm=0.2, phase_jitter_sigma=0.3, wandering_sigma=0.1)
        assert _ideal_in_phase() < degraded_in_phase(WEAK, model) < 0

    def test_power_curve(self):
        s_grid = [0.05, 0.1, 1 / 3, 1.0]
        ideal, degraded = degraded_power_curve(WEAK, InstrumentModel(phase_jitter_sigma=0.61), s_grid)
        assert np.array_equal(ideal.grid, degraded.grid)
        assert np.all(degraded.variance[:3] > ideal.variance[:3])
        assert degraded.variance[1] == pytest.approx(-0.00775, abs=1e-4)


class TestCalibration:
    def test_jitter_reaches_measured_variance(self):
        result = calibrate_imperfections(WEAK, InstrumentModel(), -0.00775)
        assert result.achieved == pytest.approx(-0.00775, abs=1e-6)
        assert result.model.phase_jitter_sigma == pytest.approx(0.61, abs=0.01)
        assert result.ideal == pytest.approx(-0.018595, abs=1e-6)
        assert result.power_curve is None

    def test_attaches_power_curve(self):
        result = calibrate_imperfections(WEAK, InstrumentModel(), -0.00775, s_grid=[0.05, 0.1, 0.3])
        _, degraded = result.power_curve
        assert degraded.variance[1] == pytest.approx(-0.00775, abs=1e-6)

    def test_irf_width_as_free_parameter(self):
        result = calibrate_imperfections(WEAK, InstrumentModel(), -0.015, free="irf_fwhm")
        assert result.model.irf_fwhm > 0
        assert result.achieved == pytest.approx(-0.015, abs=1e-6)

    def test_target_already_met(self):
        result = calibrate_imperfections(WEAK, InstrumentModel(), _ideal_in_phase())
        assert result.model.phase_jitter_sigma == 0.0

    def test_below_ideal_floor(self):
        with pytest.raises(NoSolutionError) as exc_info:
            calibrate_imperfections(WEAK, InstrumentModel(), -0.05)
        assert exc_info.value.bracket["floor"] == pytest.approx(-1 / 32)

    def test_unreachable_by_jitter(self):
        with pytest.raises(NoSolutionError):
            calibrate_imperfections(WEAK, InstrumentModel(), 0.01)

    def test_unknown_free_parameter(self):
        with pytest.raises(InputError):
            calibrate_imperfections(WEAK, InstrumentModel(), -0.00775, free="wandering_sigma")

    def test_jitter_with_pinned_irf_reaches_measured_variance(self):
        params = SystemParams(lifetime_ns=0.58, s=0.1)
        result = calibrate_imperfections(params, InstrumentModel(irf_fwhm=0.5), -0.00775)
        assert result.model.irf_fwhm == 0.5
        assert result.model.phase_jitter_sigma > 0
        assert squeezing_percent(result.achieved) == pytest.approx(3.1, abs=0.1)
        assert squeezing_percent(result.ideal) == pytest.approx(7.44, abs=0.01)


class TestDegradationBound:
    IRF_WIDTHS = [0.1, 0.25, 0.5, 1.0, 2.0]
    JITTERS = [0.1, 0.3, 0.5, 0.8, 1.2]
    WANDERING = [0.05, 0.1, 0.2, 0.3, 0.5]
    PHASES = np.linspace(-math.pi, math.pi, 64, endpoint=False)

    @pytest.mark.parametrize("wandering", WANDERING)
    @pytest.mark.parametrize("irf", IRF_WIDTHS)
    def test_never_deepens_in_phase_squeezing(self, irf, wandering):
        ideal = _ideal_in_phase()
        kernels = degraded_kernels(WEAK, InstrumentModel(irf_fwhm=irf, wandering_sigma=wandering),
                                   np.linspace(0.0, 10.0, 201))
        scan = QuadratureScan(ScanAxis.PHASE, self.PHASES, kernels.quadrature(self.PHASES)[:, 0])
        for sigma in self.JITTERS:
            jittered = apply_phase_jitter(scan, InstrumentModel(phase_jitter_sigma=sigma))
            # index 32 is phi = 0
            assert abs(jittered.variance[32]) <= abs(ideal)
