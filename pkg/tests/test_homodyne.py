"""Tests for core/homodyne.py."""

import math

import numpy as np
import pytest

from core.correlators import g2_rf, quadrature_fluctuation_autocorrelation
from core.dynamics import solve_steady_state
from core.errors import InputError, NoSolutionError
from core.homodyne import (
    CorrelatorBank,
    decompose_by_lo_order,
    fringe_visibility,
    g2_total,
    lo_amplitude,
    mode_overlap_for_visibility,
    sl_intensity,
)
from core.quadratures import normally_ordered_variance
from core.schemas import LOConfig, SystemParams

WEAK = SystemParams(gamma=1.0, s=0.1)
TAUS = np.linspace(0.0, 10.0, 51)


def _matched(params, phase=0.0):
    return LOConfig.matched(solve_steady_state(params).rho_ee, phase)


@pytest.fixture(scope="module")
def weak_bank():
    return CorrelatorBank(WEAK, TAUS)


class TestLOAmplitude:
    def test_phase_convention(self):
        assert lo_amplitude(LOConfig(amplitude=2.0, phase=math.pi / 2)) == pytest.approx(-2j)

    def test_matched_intensity(self):
        lo = _matched(WEAK)
        assert lo.intensity == pytest.approx(solve_steady_state(WEAK).rho_ee)


class TestDecomposition:
    @pytest.mark.parametrize("phi", [0.0, math.pi / 2, math.pi, 0.7])
    def test_terms_reconstruct_total(self, weak_bank, phi):
        decomposition = decompose_by_lo_order(WEAK, _matched(WEAK, phi), TAUS, bank=weak_bank)
        assert np.max(np.abs(decomposition.reconstruct() - decomposition.total.values)) < 1e-9

    def test_fourth_order_is_unity(self, weak_bank):
        decomposition = decompose_by_lo_order(WEAK, _matched(WEAK), TAUS, bank=weak_bank)
        assert np.allclose(decomposition.terms[4].values, 1.0, atol=1e-12)

    def test_zeroth_order_is_fluorescence_alone(self, weak_bank):
        decomposition = decompose_by_lo_order(WEAK, _matched(WEAK), TAUS, bank=weak_bank)
        expected = g2_rf(WEAK, TAUS, normalized=False).values
        assert np.max(np.abs(decomposition.terms[0].values - expected)) < 1e-12

    @pytest.mark.parametrize("phi", [0.0, math.pi / 2])
    def test_quadrature_term_is_fluctuation_autocorrelation(self, weak_bank, phi):
        decomposition = decompose_by_lo_order(WEAK, _matched(WEAK, phi), TAUS, bank=weak_bank)
        expected = quadrature_fluctuation_autocorrelation(WEAK, phi, TAUS).values
        assert np.max(np.abs(decomposition.quadrature_term.values - expected)) < 1e-9

    def test_quadrature_term_at_zero_delay(self, weak_bank):
        decomposition = decompose_by_lo_order(WEAK, _matched(WEAK), TAUS, bank=weak_bank)
        assert decomposition.quadrature_term.values[0] == pytest.approx(-0.018595, abs=1e-6)
        assert decomposition.scale == pytest.approx(4 * solve_steady_state(WEAK).rho_ee)

    @pytest.mark.parametrize("beta2", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("phi", [0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi])
    def test_orders_rebuild_total_over_lo_strengths(self, phi, beta2):
        taus = np.linspace(0.0, 15.0, 151)
        lo = LOConfig(amplitude=math.sqrt(beta2), phase=phi)
        decomposition = decompose_by_lo_order(WEAK, lo, taus)
        assert np.max(np.abs(decomposition.reconstruct() - decomposition.total.values)) < 1e-9

    def test_quadrature_term_matches_variance_at_random_settings(self):
        rng = np.random.default_rng(2016)
        for _ in range(20):
            params = SystemParams(gamma=1.0, s=float(10 ** rng.uniform(-2.0, 1.5)))
            phi = float(rng.uniform(0.0, 2 * math.pi))
            decomposition = decompose_by_lo_order(params, _matched(params, phi), [0.0, 1.0])
            expected = normally_ordered_variance(params, phi).normally_ordered_variance
            assert decomposition.quadrature_term.values[0] == pytest.approx(expected, abs=1e-9)


class TestG2Total:
    def test_no_lo_is_fluorescence_alone(self, weak_bank):
        total = g2_total(WEAK, LOConfig(amplitude=0.0), TAUS, bank=weak_bank)
        expected = g2_rf(WEAK, TAUS, normalized=False).values
        assert np.max(np.abs(total.values - expected)) < 1e-12

    def test_undriven_emitter_gives_flat_lo_statistics(self):
        lo = LOConfig(amplitude=0.5)
        total = g2_total(SystemParams(gamma=1.0, s=0.0), lo, TAUS)
        assert np.allclose(total.values, lo.intensity ** 2, atol=1e-12)

    def test_long_delay_levels_split_by_phase(self):
        taus = np.array([0.0, 60.0])
        bank = CorrelatorBank(WEAK, taus)
        in_phase = g2_total(WEAK, _matched(WEAK, 0.0), taus, bank=bank).values[-1]
        anti_phase = g2_total(WEAK, _matched(WEAK, math.pi), taus, bank=bank).values[-1]
        assert in_phase / anti_phase > 10
        ratio = sl_intensity(WEAK, _matched(WEAK, 0.0)) / sl_intensity(WEAK, _matched(WEAK, math.pi))
        assert in_phase / anti_phase == pytest.approx(ratio ** 2, rel=1e-6)

    def test_partial_overlap_long_delay_is_intensity_squared(self):
        taus = np.array([0.0, 60.0])
        lo = _matched(WEAK, 0.4)
        total = g2_total(WEAK, lo, taus, visibility=0.6)
        assert total.values[-1] == pytest.approx(sl_intensity(WEAK, lo, 0.6) ** 2, rel=1e-9)
        assert total.metadata["visibility"] == 0.6

    def test_map_products_identity(self, weak_bank):
        alpha = lo_amplitude(_matched(WEAK, 0.3))
        clone = weak_bank.map_products(lambda values: values)
        assert np.array_equal(clone.total(alpha), weak_bank.total(alpha))
        assert clone.products is not weak_bank.products

    def test_visibility_out_of_range(self):
        with pytest.raises(InputError):
            g2_total(WEAK, _matched(WEAK), TAUS, visibility=1.5)


class TestFringe:
    def test_intensity_matches_bank(self, weak_bank):
        lo = _matched(WEAK, 0.9)
        assert sl_intensity(WEAK, lo) == pytest.approx(weak_bank.intensity(lo_amplitude(lo)), abs=1e-12)

    def test_matched_visibility(self):
        assert fringe_visibility(WEAK, _matched(WEAK)) == pytest.approx(math.sqrt(1 / 1.1), abs=1e-10)
        assert fringe_visibility(WEAK, _matched(WEAK)) == pytest.approx(0.9535, abs=1e-4)

    def test_overlap_reaches_target(self):
        lo = _matched(WEAK)
        overlap = mode_overlap_for_visibility(WEAK, lo, 0.738)
        assert overlap == pytest.approx(0.738 / math.sqrt(1 / 1.1), abs=1e-10)
        assert fringe_visibility(WEAK, lo, overlap) == pytest.approx(0.738, abs=1e-12)

    def test_unreachable_target(self):
        strong = SystemParams(gamma=1.0, s=30.0)
        with pytest.raises(NoSolutionError):
            mode_overlap_for_visibility(strong, _matched(strong), 0.5)

    def test_invalid_target(self):
        with pytest.raises(InputError):
            mode_overlap_for_visibility(WEAK, _matched(WEAK), 0.0)
