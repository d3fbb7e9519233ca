"""calibrate: fit one imperfection width so the degraded N(0) matches a measured value."""

import logging

import pandas as pd

from cli.handlers import instrument_of
from core.instrument import calibrate_imperfections
from core.quadratures import squeezing_db, squeezing_percent
from core.reports import RunWriter, line_plot
from core.schemas import RunConfig
from core.telemetry import stage_span

logger = logging.getLogger(__name__)


def handle_calibrate(config: RunConfig, writer: RunWriter, args) -> dict:
    settings = config.calibration
    params = config.system.with_saturation(settings.s)
    pinned = instrument_of(config)

    with stage_span("calibrate.solve", free=settings.free, target=settings.target_variance):
        result = calibrate_imperfections(params, pinned, settings.target_variance, free=settings.free,
                                         s_grid=config.sweep.s_grid.values())

    ideal, degraded = result.power_curve
    writer.table("calibrated_power_curve", pd.DataFrame({
        "s_dimensionless": ideal.grid,
        "variance_ideal_dimensionless": ideal.variance,
        "variance_degraded_dimensionless": degraded.variance,
    }))
    writer.json("calibrated_instrument", result.model.model_dump(mode="json"))
    writer.figure("calibrated_power_curve", line_plot(
        {"ideal": (ideal.grid, ideal.variance), "degraded": (degraded.grid, degraded.variance)},
        "s", "<:(dX)^2:>", logx=True, styles={"degraded": "--"}))

    logger.info("%s=%.6g reaches N(0)=%.6f (%.2f%% below vacuum)", result.free,
                getattr(result.model, result.free), result.achieved, squeezing_percent(result.achieved))
    return {
        "free": result.free,
        "value": getattr(result.model, result.free),
        "achieved_variance": result.achieved,
        "target_variance": result.target,
        "ideal_variance": result.ideal,
        "achieved_percent": squeezing_percent(result.achieved),
        "achieved_db": squeezing_db(result.achieved),
        "fraction_of_ideal": result.achieved / result.ideal if result.ideal else None,
        "bracket": result.bracket,
    }
