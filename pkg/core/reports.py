"""Output writers: CSV tables, JSON run manifests and static SVG figures.

Everything written here is a pure function of (config, seed): CSV floats use
a fixed format, manifests carry no timestamps and SVGs are rendered with a
fixed hash salt and no date metadata.
"""

from __future__ import annotations

import json
import logging
import platform
from importlib import metadata
from pathlib import Path
from typing import Callable, Iterable, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from core.config import config_digest, resolved_config  # noqa: E402
from core.correlators import CorrelationTrace  # noqa: E402
from core.errors import ConfigError  # noqa: E402
from core.schemas import RunConfig  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "matplotlib", "contourpy", "pydantic")

plt.rcParams["svg.hashsalt"] = "squeezesim"
plt.rcParams["svg.fonttype"] = "none"


def package_versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def trace_frame(trace: CorrelationTrace, time_unit_s: float = 1e-9) -> pd.DataFrame:
    """Columns tau_s, value, kind, phi, beta2 (phi in radians, beta2 in RF-intensity units)."""
    n = trace.tau_grid.size
    return pd.DataFrame({
        "tau_s": trace.tau_grid * time_unit_s,
        "value": np.real(trace.values),
        "kind": [trace.kind.value] * n,
        "phi": [np.nan if trace.phase is None else trace.phase] * n,
        "beta2": [np.nan if trace.beta2 is None else trace.beta2] * n,
    })


class RunWriter:
    """Collects the files of one run directory and writes its manifest last."""

    def __init__(self, directory: str | Path, formats: Iterable[str] = ("csv", "json")):
        self.directory = Path(directory)
        self.formats = set(formats)
        self.files: list[str] = []
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.directory} is not writable: {exc}") from exc

    def _register(self, path: Path) -> Path:
        self.files.append(path.relative_to(self.directory).as_posix())
        return path

    def table(self, name: str, frame: pd.DataFrame, always: bool = False) -> Optional[Path]:
        """CSV table; ``always`` writes it even when csv is not among the formats."""
        if not always and "csv" not in self.formats:
            return None
        path = self.directory / f"{name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.debug("wrote %s (%d rows)", path, len(frame))
        return self._register(path)

    def json(self, name: str, payload: dict) -> Optional[Path]:
        if "json" not in self.formats:
            return None
        path = self.directory / f"{name}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
        return self._register(path)

    def binary(self, name: str, writer: Callable[[Path], Path]) -> Path:
        return self._register(writer(self.directory / name))

    def figure(self, name: str, draw: Callable[[plt.Axes], None], figsize=(5.0, 3.6)) -> Optional[Path]:
        if "svg" not in self.formats:
            return None
        fig, ax = plt.subplots(figsize=figsize)
        try:
            draw(ax)
            fig.tight_layout()
            path = self.directory / f"{name}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
        return self._register(path)

    def manifest(self, config: RunConfig, command: str, seed: int, extra: Optional[dict] = None) -> Path:
        """manifest.json is always written, whatever the selected formats."""
        payload = {
            "command": command,
            "seed": seed,
            "config": resolved_config(config),
            "config_sha256": config_digest(config),
            "versions": package_versions(),
            "files": sorted(self.files),
        }
        if extra:
            payload.update(extra)
        path = self.directory / "manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
        logger.info("run manifest written to %s (%d files)", path, len(self.files))
        return path


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


# ── Figure helpers ────────────────────────────────────────────────


def line_plot(series: dict[str, tuple[np.ndarray, np.ndarray]], xlabel: str, ylabel: str,
              logx: bool = False, styles: Optional[dict[str, str]] = None) -> Callable[[plt.Axes], None]:
    def draw(ax: plt.Axes) -> None:
        for label, (x, y) in series.items():
            ax.plot(x, y, (styles or {}).get(label, "-"), label=label, linewidth=1.2)
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(fontsize=7, frameon=False)
    return draw


def heatmap_plot(x: np.ndarray, y: np.ndarray, values: np.ndarray, contours: list[np.ndarray],
                 xlabel: str = "X1", ylabel: str = "X2") -> Callable[[plt.Axes], None]:
    def draw(ax: plt.Axes) -> None:
        ax.pcolormesh(x, y, values, shading="auto", cmap="RdBu_r", vmin=-1.0, vmax=1.0, rasterized=False)
        for line in contours:
            ax.plot(line[:, 0], line[:, 1], "k--", linewidth=0.8)
        ax.set_aspect("equal")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
    return draw
