"""Tests for core/schemas.py: the validated records behind every run config."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.schemas import (
    GridSpec,
    InstrumentModel,
    LOConfig,
    OutputConfig,
    RunConfig,
    SweepConfig,
    SystemParams,
)


class TestSystemParams:
    def test_lifetime_sets_gamma(self):
        params = SystemParams(lifetime_ns=0.58)
        assert params.gamma == pytest.approx(1 / 0.58)

    def test_defaults_to_unit_gamma_and_no_drive(self):
        params = SystemParams()
        assert params.gamma == 1.0
        assert params.rabi == 0.0
        assert params.s == 0.0

    def test_saturation_converts_to_rabi(self):
        params = SystemParams(gamma=2.0, s=2.0)
        assert params.rabi == pytest.approx(2.0)

    def test_rabi_back_fills_saturation(self):
        assert SystemParams(gamma=1.0, rabi=1.0).s == pytest.approx(2.0)

    def test_gamma_and_lifetime_must_agree(self):
        with pytest.raises(ValidationError, match="disagree"):
            SystemParams(gamma=1.0, lifetime_ns=0.58)

    @pytest.mark.parametrize("field", ["gamma", "lifetime_ns"])
    def test_rates_must_be_positive(self, field):
        with pytest.raises(ValidationError):
            SystemParams(**{field: 0.0})

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            SystemParams(gamma=1.0, detuning=math.inf)

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            SystemParams(gamma=1.0, temperature=4.0)

    def test_with_saturation_keeps_detuning_and_dephasing(self):
        params = SystemParams(gamma=1.0, s=0.1, detuning=0.3, dephasing=0.2).with_saturation(1.0)
        assert params.s == pytest.approx(1.0)
        assert params.detuning == 0.3
        assert params.dephasing == 0.2

    def test_with_detuning(self):
        params = SystemParams(gamma=1.0, s=0.1).with_detuning(-0.5)
        assert params.detuning == -0.5
        assert params.s == pytest.approx(0.1)


class TestLOConfig:
    def test_matched_intensity(self):
        lo = LOConfig.matched(0.04, phase=1.0)
        assert lo.amplitude == pytest.approx(0.2)
        assert lo.intensity == pytest.approx(0.04)
        assert lo.phase == 1.0

    def test_negative_amplitude_rejected(self):
        with pytest.raises(ValidationError):
            LOConfig(amplitude=-1.0)


class TestInstrumentModel:
    def test_defaults(self):
        model = InstrumentModel()
        assert model.detector_rate == 1.6e5
        assert model.histogram_period == 60.0
        assert model.drift_rate == pytest.approx(math.pi / 1800)

    def test_unknown_kernel_rejected(self):
        with pytest.raises(ValidationError):
            InstrumentModel(irf_kernel="lorentzian")


class TestGridSpec:
    def test_linear(self):
        assert np.allclose(GridSpec(start=0.0, stop=1.0, num=3).values(), [0.0, 0.5, 1.0])

    def test_log(self):
        values = GridSpec(start=0.01, stop=30.0, num=400, log=True).values()
        assert values[0] == pytest.approx(0.01)
        assert values[-1] == pytest.approx(30.0)

    def test_log_needs_positive_bounds(self):
        with pytest.raises(ValidationError, match="positive"):
            GridSpec(start=0.0, stop=1.0, num=5, log=True)


class TestRunConfig:
    def test_sweep_defaults(self):
        sweep = SweepConfig()
        assert sweep.wigner_panels == [0.0, 0.36, 10.0, 1e6]
        assert sweep.phase_panels == pytest.approx([0.0, math.pi / 2, math.pi])

    def test_wigner_grid_floor(self):
        with pytest.raises(ValidationError):
            SweepConfig(wigner_points=64)

    def test_empty_panels_rejected(self):
        with pytest.raises(ValidationError, match="panel"):
            RunConfig(system=SystemParams(), sweep=SweepConfig(power_panels=[]))

    def test_output_formats_validated(self):
        with pytest.raises(ValidationError):
            OutputConfig(formats=["csv", "xlsx"])

    def test_seed_range(self):
        with pytest.raises(ValidationError):
            OutputConfig(seed=-1)
