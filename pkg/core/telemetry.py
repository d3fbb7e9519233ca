"""OpenTelemetry setup for squeezesim runs.

Provides:
  - init_telemetry(service_name): tracer + meter providers, once per process
  - get_tracer(name) / get_meter(name): real instruments or no-op stand-ins
  - safe_span(tracer, name, attributes): span that never lets OTel errors escape
  - stage_span(name, **attributes): span plus a stage-duration histogram sample
  - record_counter / record_histogram / record_span_error / flush_telemetry

Configuration via environment variables:
  OTEL_ENABLED: "true" to enable (default: disabled)
  OTEL_EXPORTER_OTLP_ENDPOINT: OTLP collector endpoint (default: console exporter)
  OTEL_SERVICE_VERSION: service.version attribute (default: package version)
"""

from __future__ import annotations

import logging
import os
import time
from contextlib import contextmanager
from typing import Any, Generator, Optional

logger = logging.getLogger(__name__)

SERVICE_NAME = "squeezesim"
STAGE_HISTOGRAM = "squeezesim.stage_duration_ms"

_tracer_provider = None
_meter_provider = None
_initialised = False
_stage_histogram = None


def _otel_enabled() -> bool:
    return os.environ.get("OTEL_ENABLED", "false").lower() in ("true", "1", "yes")


def _exporters(endpoint: Optional[str]):
    from opentelemetry.sdk.metrics.export import PeriodicExportingMetricReader

    if endpoint:
        from opentelemetry.exporter.otlp.proto.http.metric_exporter import OTLPMetricExporter
        from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
        from opentelemetry.sdk.trace.export import BatchSpanProcessor

        return (BatchSpanProcessor(OTLPSpanExporter(endpoint=endpoint)),
                PeriodicExportingMetricReader(OTLPMetricExporter(endpoint=endpoint)))

    from opentelemetry.sdk.metrics.export import ConsoleMetricExporter
    from opentelemetry.sdk.trace.export import ConsoleSpanExporter, SimpleSpanProcessor

    return SimpleSpanProcessor(ConsoleSpanExporter()), PeriodicExportingMetricReader(ConsoleMetricExporter())


def init_telemetry(service_name: str = SERVICE_NAME, service_version: str = "0.0.0") -> None:
    """Initialise tracing and metrics when OTEL_ENABLED is set.

    Later calls are no-ops. Setup failures are logged and the run continues
    without telemetry.
    """
    global _tracer_provider, _meter_provider, _initialised

    if _initialised:
        return
    _initialised = True

    if not _otel_enabled():
        logger.debug("OpenTelemetry disabled (OTEL_ENABLED != true)")
        return

    try:
        from opentelemetry import metrics, trace
        from opentelemetry.sdk.metrics import MeterProvider
        from opentelemetry.sdk.resources import Resource
        from opentelemetry.sdk.trace import TracerProvider

        resource = Resource.create({
            "service.name": service_name,
            "service.version": os.environ.get("OTEL_SERVICE_VERSION", service_version),
        })
        span_processor, metric_reader = _exporters(os.environ.get("OTEL_EXPORTER_OTLP_ENDPOINT"))

        _tracer_provider = TracerProvider(resource=resource)
        _tracer_provider.add_span_processor(span_processor)
        trace.set_tracer_provider(_tracer_provider)

        _meter_provider = MeterProvider(resource=resource, metric_readers=[metric_reader])
        metrics.set_meter_provider(_meter_provider)

        logger.info("OpenTelemetry initialised for service=%s", service_name)
    except Exception:
        logger.warning("Failed to initialise OpenTelemetry, continuing without telemetry", exc_info=True)
        _tracer_provider = None
        _meter_provider = None


def get_tracer(name: str):
    if _tracer_provider is not None:
        try:
            from opentelemetry import trace
            return trace.get_tracer(name)
        except Exception:
            pass
    return _NoOpTracer()


def get_meter(name: str):
    if _meter_provider is not None:
        try:
            from opentelemetry import metrics
            return metrics.get_meter(name)
        except Exception:
            pass
    return _NoOpMeter()


@contextmanager
def safe_span(tracer, span_name: str, attributes: Optional[dict] = None) -> Generator:
    """Span context manager; OTel failures are swallowed, errors from the body propagate."""
    span = None
    cm = None
    try:
        cm = tracer.start_as_current_span(span_name)
        span = cm.__enter__()
        for key, value in (attributes or {}).items():
            try:
                span.set_attribute(key, value)
            except Exception:
                pass
    except Exception:
        span = None

    try:
        yield span
    except Exception as exc:
        if span is not None:
            record_span_error(span, exc)
        raise
    finally:
        if span is not None:
            try:
                cm.__exit__(None, None, None)
            except Exception:
                pass


@contextmanager
def stage_span(stage: str, **attributes: Any) -> Generator:
    """``safe_span`` named ``squeezesim.<stage>`` that also records its duration."""
    global _stage_histogram
    if _stage_histogram is None:
        _stage_histogram = get_meter(__name__).create_histogram(
            STAGE_HISTOGRAM, unit="ms", description="Wall time per pipeline stage")
    started = time_ms()
    try:
        with safe_span(get_tracer(__name__), f"squeezesim.{stage}", attributes) as span:
            yield span
    finally:
        record_histogram(_stage_histogram, time_ms() - started, {"stage": stage})


def record_counter(counter, amount: int = 1, attributes: Optional[dict] = None) -> None:
    try:
        counter.add(amount, attributes or {})
    except Exception:
        pass


def record_histogram(histogram, value: float, attributes: Optional[dict] = None) -> None:
    try:
        histogram.record(value, attributes or {})
    except Exception:
        pass


def time_ms() -> float:
    """Monotonic clock in milliseconds."""
    return time.monotonic() * 1000


def flush_telemetry(timeout_ms: int = 5000) -> None:
    """Flush pending spans and metrics; called once before the CLI exits."""
    for provider in (_tracer_provider, _meter_provider):
        if provider is not None and hasattr(provider, "force_flush"):
            try:
                provider.force_flush(timeout_ms)
            except Exception:
                pass


def record_span_error(span, exception: Exception) -> None:
    try:
        from opentelemetry.trace import StatusCode
        span.set_status(StatusCode.ERROR, str(exception)[:500])
        span.record_exception(exception)
    except Exception:
        pass


# ── No-op stand-ins used while OTel is disabled ───────────────────


class _NoOpSpan:
    def set_attribute(self, key: str, value: Any) -> None:
        pass

    def add_event(self, name: str, attributes: Optional[dict] = None) -> None:
        pass

    def set_status(self, *args: Any, **kwargs: Any) -> None:
        pass

    def record_exception(self, exception: Any, attributes: Optional[dict] = None) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *args: Any):
        pass


class _NoOpTracer:
    @contextmanager
    def start_as_current_span(self, name: str, **kwargs: Any) -> Generator:
        yield _NoOpSpan()


class _NoOpCounter:
    def add(self, amount: Any, attributes: Any = None) -> None:
        pass


class _NoOpHistogram:
    def record(self, value: Any, attributes: Any = None) -> None:
        pass


class _NoOpMeter:
    def create_counter(self, name: str, **kwargs: Any) -> _NoOpCounter:
        return _NoOpCounter()

    def create_histogram(self, name: str, **kwargs: Any) -> _NoOpHistogram:
        return _NoOpHistogram()
