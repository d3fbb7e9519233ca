"""Tests for core/dynamics.py."""

import math

import numpy as np
import pytest

from core.dynamics import (
    DensityMatrix2,
    Liouvillian,
    build_liouvillian,
    effective_saturation,
    propagate,
    rabi_from_saturation,
    saturation_from_rabi,
    solve_steady_state,
    steady_state,
)
from core.errors import InputError, SteadyStateError
from core.schemas import SystemParams
from tests.bloch_oracle import rk4

VEC_IDENTITY = np.array([1, 0, 0, 1], dtype=complex)


def _random_params(rng):
    return SystemParams(gamma=rng.uniform(0.5, 2.0), s=rng.uniform(0.0, 10.0),
                        detuning=rng.uniform(-3.0, 3.0), dephasing=rng.uniform(0.0, 1.0))


def _random_state(rng):
    direction = rng.normal(size=3)
    r = rng.uniform(0.0, 1.0) * direction / np.linalg.norm(direction)
    rho = 0.5 * np.array([[1 - r[2], r[0] - 1j * r[1]], [r[0] + 1j * r[1], 1 + r[2]]])
    return DensityMatrix2.from_matrix(rho)


class TestBuildLiouvillian:
    def test_trace_preserving_for_random_params(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            generator = build_liouvillian(_random_params(rng))
            assert np.max(np.abs(VEC_IDENTITY @ generator.matrix)) < 1e-12

    def test_basis_order_is_documented(self):
        generator = build_liouvillian(SystemParams(gamma=1.0, s=0.1))
        assert generator.basis_order == ("gg", "ge", "eg", "ee")
        assert generator.matrix.shape == (4, 4)

    def test_undriven_relaxes_to_ground(self):
        state = solve_steady_state(SystemParams(gamma=1.0, rabi=0.0))
        assert state.rho_ee == pytest.approx(0.0, abs=1e-12)
        assert abs(state.rho_ge) < 1e-12

    def test_non_finite_params_rejected(self):
        params = SystemParams.model_construct(gamma=1.0, rabi=math.nan, detuning=0.0, dephasing=0.0,
                                              s=None, lifetime_ns=None)
        with pytest.raises(InputError):
            build_liouvillian(params)

    @pytest.mark.parametrize("tau", [0.5, 3.0])
    def test_matches_rk4_from_excited_state(self, tau):
        generator = build_liouvillian(SystemParams(gamma=1.0, rabi=1.0))
        result = propagate(generator, DensityMatrix2.excited(), tau)
        oracle = rk4(DensityMatrix2.excited().matrix(), tau, gamma=1.0, rabi=1.0)
        assert result.rho_ee == pytest.approx(oracle[1, 1].real, abs=1e-9)
        assert result.rho_ge == pytest.approx(oracle[0, 1], abs=1e-9)

    def test_matches_rk4_detuned_with_dephasing(self):
        params = SystemParams(gamma=1.0, rabi=0.7, detuning=0.8, dephasing=0.3)
        result = propagate(build_liouvillian(params), DensityMatrix2.ground(), 2.0)
        oracle = rk4(DensityMatrix2.ground().matrix(), 2.0, gamma=1.0, rabi=0.7, detuning=0.8, dephasing=0.3)
        assert np.allclose(result.matrix(), oracle, atol=1e-9)


class TestSteadyState:
    @pytest.mark.parametrize("s", [0.05, 0.1, 1 / 3, 1.0, 3.0, 100.0])
    def test_saturation_law(self, s):
        state = solve_steady_state(SystemParams(gamma=1.0, s=s))
        assert state.rho_ee == pytest.approx(s / (2 * (1 + s)), abs=1e-10)

    @pytest.mark.parametrize("s", [0.05, 0.1, 1 / 3, 1.0, 3.0, 100.0])
    def test_coherence_law(self, s):
        state = solve_steady_state(SystemParams(gamma=1.0, s=s))
        assert abs(state.sigma_minus) ** 2 == pytest.approx((s / 2) / (1 + s) ** 2, abs=1e-10)

    def test_half_saturation(self):
        assert solve_steady_state(SystemParams(gamma=1.0, s=1.0)).rho_ee == pytest.approx(0.25, abs=1e-12)

    def test_measured_power(self):
        state = solve_steady_state(SystemParams(lifetime_ns=0.58, s=0.1))
        assert state.rho_ee == pytest.approx(0.1 / 2.2, abs=1e-10)

    def test_residual_below_tolerance(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            generator = build_liouvillian(_random_params(rng))
            state = steady_state(generator)
            assert np.linalg.norm(generator.matrix @ state.vector()) < 1e-12
            state.validate()

    def test_no_decay_has_no_unique_state(self):
        params = SystemParams.model_construct(gamma=0.0, rabi=1.0, detuning=0.0, dephasing=0.0,
                                              s=None, lifetime_ns=None)
        with pytest.raises(SteadyStateError):
            steady_state(Liouvillian(matrix=np.zeros((4, 4), dtype=complex), params=params))


class TestPropagate:
    def test_zero_time_is_identity(self):
        generator = build_liouvillian(SystemParams(gamma=1.0, s=0.5))
        rho0 = DensityMatrix2.excited()
        assert propagate(generator, rho0, 0.0) == rho0

    def test_long_time_reaches_steady_state(self):
        generator = build_liouvillian(SystemParams(gamma=1.0, s=0.1))
        late = propagate(generator, DensityMatrix2.excited(), 60.0)
        assert np.allclose(late.matrix(), steady_state(generator).matrix(), atol=1e-10)

    def test_pure_decay(self):
        generator = build_liouvillian(SystemParams(gamma=1.0, rabi=0.0))
        assert propagate(generator, DensityMatrix2.excited(), 1.0).rho_ee == pytest.approx(math.exp(-1), abs=1e-12)

    def test_negative_time_rejected(self):
        generator = build_liouvillian(SystemParams(gamma=1.0, s=0.1))
        with pytest.raises(InputError):
            propagate(generator, DensityMatrix2.ground(), -0.1)

    def test_trace_and_positivity_preserved(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            generator = build_liouvillian(_random_params(rng))
            result = propagate(generator, _random_state(rng), rng.uniform(0.0, 10.0))
            assert abs(result.trace - 1.0) < 1e-12
            assert np.min(np.linalg.eigvalsh(result.matrix())) > -1e-12

    @pytest.mark.parametrize("tau", [0.0, 1.0, 10.0, 100.0])
    def test_steady_state_is_fixed_point(self, tau):
        generator = build_liouvillian(SystemParams(gamma=1.0, s=2.0, detuning=0.5))
        fixed = steady_state(generator)
        assert np.allclose(propagate(generator, fixed, tau).matrix(), fixed.matrix(), atol=1e-10)


class TestSaturationConvention:
    def test_zero_power(self):
        assert rabi_from_saturation(0.0, 1.0) == 0.0

    def test_two_gives_unit_rabi(self):
        assert rabi_from_saturation(2.0, 1.0) == pytest.approx(1.0)

    def test_optimum_power(self):
        rabi = rabi_from_saturation(1 / 3, 1.0)
        assert rabi == pytest.approx(math.sqrt(1 / 6), abs=1e-12)
        assert solve_steady_state(SystemParams(gamma=1.0, rabi=rabi)).rho_ee == pytest.approx(0.125, abs=1e-12)

    def test_round_trip(self):
        assert saturation_from_rabi(rabi_from_saturation(0.36, 1.7), 1.7) == pytest.approx(0.36)

    def test_negative_power_rejected(self):
        with pytest.raises(InputError):
            rabi_from_saturation(-1.0, 1.0)


class TestEffectiveSaturation:
    def test_resonant_equals_nominal(self):
        assert effective_saturation(SystemParams(gamma=1.0, s=0.36)) == pytest.approx(0.36, abs=1e-10)

    def test_detuning_lorentzian(self):
        params = SystemParams(gamma=1.0, s=0.5, detuning=1.0)
        assert effective_saturation(params) == pytest.approx(0.5 / (1 + 4 * 1.0 ** 2), abs=1e-10)

    def test_dephasing_lowers_excitation(self):
        assert effective_saturation(SystemParams(gamma=1.0, s=0.5, dephasing=0.4)) < 0.5
