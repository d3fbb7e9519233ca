"""Shared pytest setup.

Telemetry stays on the no-op path and matplotlib renders off-screen, so the
suite needs neither a collector nor a display.
"""

import os

os.environ.setdefault("OTEL_ENABLED", "false")
os.environ.setdefault("MPLBACKEND", "Agg")
