"""Single-mode field state of the fluorescence and its Wigner function.

The emitted mode is identified with the atom under σ⁻ ↔ a, giving a state on
{|0⟩, |1⟩}. Quadratures use X = (a + a†)/2 (vacuum variance 1/4).

Binary layout written by ``write_binary`` (little endian):
  4 bytes  magic ``b"WGN1"``
  uint32   n1 (points along x1), uint32 n2 (points along x2)
  float64  cell_area
  float64  x1_axis[n1], x2_axis[n2]
  float64  values[n2][n1]   (row j is x2 = x2_axis[j])
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import contourpy
import numpy as np
import pandas as pd

from core.dynamics import DensityMatrix2
from core.errors import AccuracyError, InputError

logger = logging.getLogger(__name__)

DEFAULT_EXTENT = 4.0
DEFAULT_POINTS = 201
NORMALIZATION_TOL = 1e-6
_TOL = 1e-12
_MAGIC = b"WGN1"


@dataclass(frozen=True)
class FieldModeState:
    """ρ = p0|0⟩⟨0| + p1|1⟩⟨1| + coh|1⟩⟨0| + h.c.; ``coh`` = ⟨a⟩."""

    p0: float
    p1: float
    coh: complex = 0j

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.p0, self.p1, self.coh.real, self.coh.imag)):
            raise InputError("field state has non-finite entries")
        if abs(self.p0 + self.p1 - 1.0) > _TOL:
            raise InputError(f"p0 + p1 = {self.p0 + self.p1!r}, expected 1")
        if self.p0 < -_TOL or self.p1 < -_TOL:
            raise InputError("Fock populations must be non-negative")
        if abs(self.coh) ** 2 > self.p0 * self.p1 + _TOL:
            raise InputError("|coh|^2 exceeds p0*p1; state is not positive")

    @classmethod
    def vacuum(cls) -> "FieldModeState":
        return cls(1.0, 0.0, 0j)

    def rotated(self, theta: float) -> "FieldModeState":
        return FieldModeState(self.p0, self.p1, self.coh * complex(math.cos(theta), math.sin(theta)))

    def quadrature_variance(self, phi: float = 0.0) -> float:
        """Full variance of X(φ) = (a e^{−iφ} + a† e^{iφ})/2, i.e. along the direction φ in phase space."""
        mean = (self.coh * complex(math.cos(phi), -math.sin(phi))).real
        return 0.25 + 0.5 * self.p1 - mean ** 2


def field_state_from_atom(rho: DensityMatrix2, align: bool = True) -> FieldModeState:
    """Map the atomic state onto the emitted mode.

    With ``align`` the coherence is rotated to the positive real axis, so the
    squeezed quadrature lies along x1.
    """
    try:
        rho.validate()
    except InputError as exc:
        raise InputError(f"invalid atomic state: {exc}") from exc
    coh = rho.sigma_minus
    if align:
        coh = complex(abs(coh), 0.0)
    p1 = min(max(rho.rho_ee, 0.0), 1.0)
    return FieldModeState(p0=1.0 - p1, p1=p1, coh=coh)


def wigner_at(state: FieldModeState, x1, x2) -> np.ndarray:
    """W(x1, x2) from the |0⟩⟨0|, |1⟩⟨1| and |0⟩⟨1| kernels, broadcast over the inputs."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r2 = x1 ** 2 + x2 ** 2
    envelope = np.exp(-2.0 * r2)
    diagonal = (2.0 / math.pi) * (state.p0 + state.p1 * (4.0 * r2 - 1.0))
    cross = (8.0 / math.pi) * (x1 * state.coh.real + x2 * state.coh.imag)
    return (diagonal + cross) * envelope


@dataclass
class WignerGrid:
    x1_axis: np.ndarray
    x2_axis: np.ndarray
    values: np.ndarray  # shape (len(x2_axis), len(x1_axis))
    cell_area: float

    @property
    def total(self) -> float:
        return float(self.values.sum() * self.cell_area)

    @property
    def peak(self) -> float:
        return float(self.values.max())

    def normalized(self) -> np.ndarray:
        """Values divided by the panel maximum (absolute scale in ``peak``)."""
        return self.values / self.peak

    def marginal(self, axis: str = "x1") -> tuple[np.ndarray, np.ndarray]:
        spacing = self.x2_axis[1] - self.x2_axis[0] if axis == "x1" else self.x1_axis[1] - self.x1_axis[0]
        if axis == "x1":
            return self.x1_axis, self.values.sum(axis=0) * spacing
        if axis == "x2":
            return self.x2_axis, self.values.sum(axis=1) * spacing
        raise InputError(f"axis must be 'x1' or 'x2', got {axis!r}")

    def marginal_variance(self, axis: str = "x1") -> float:
        coords, density = self.marginal(axis)
        step = coords[1] - coords[0]
        mass = density.sum() * step
        mean = (coords * density).sum() * step / mass
        return float(((coords - mean) ** 2 * density).sum() * step / mass)

    def to_frame(self) -> pd.DataFrame:
        x1, x2 = np.meshgrid(self.x1_axis, self.x2_axis)
        return pd.DataFrame({"x1": x1.ravel(), "x2": x2.ravel(), "w": self.values.ravel()})


def wigner(state: FieldModeState, extent: float = DEFAULT_EXTENT, points: int = DEFAULT_POINTS) -> WignerGrid:
    """Sample W on the square [−extent, extent]² with ``points`` per axis."""
    if points < 2 or not math.isfinite(extent) or extent <= 0:
        raise InputError("grid needs extent > 0 and at least 2 points per axis")
    axis = np.linspace(-extent, extent, points)
    step = axis[1] - axis[0]
    x1, x2 = np.meshgrid(axis, axis)
    values = wigner_at(state, x1, x2)
    grid = WignerGrid(axis, axis.copy(), values, step * step)

    defect = abs(grid.total - 1.0)
    if defect > NORMALIZATION_TOL:
        logger.warning("Wigner grid ±%.2f with %d points misses normalization by %.3e", extent, points, defect)
        raise AccuracyError("Wigner grid too small to normalize", defect=defect)
    return grid


def half_max_contour(grid: WignerGrid, fraction: float = 0.5) -> list[np.ndarray]:
    """Level-set polylines at ``fraction``·max(W) as (n, 2) arrays of (x1, x2).

    Returns an empty list when W has no positive maximum.
    """
    peak = grid.peak
    if peak <= 0:
        return []
    generator = contourpy.contour_generator(grid.x1_axis, grid.x2_axis, grid.values)
    return [np.asarray(line) for line in generator.lines(fraction * peak) if len(line) > 1]


def contour_extent(lines: list[np.ndarray]) -> tuple[float, float]:
    """Half-widths of the contour set along x1 and x2."""
    if not lines:
        return 0.0, 0.0
    points = np.vstack(lines)
    return float(np.abs(points[:, 0]).max()), float(np.abs(points[:, 1]).max())


# ── Serialization ─────────────────────────────────────────────────


def write_binary(grid: WignerGrid, path: str | Path) -> Path:
    path = Path(path)
    header = _MAGIC + struct.pack("<IId", grid.x1_axis.size, grid.x2_axis.size, grid.cell_area)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in (grid.x1_axis, grid.x2_axis, grid.values))
    path.write_bytes(header + body)
    return path


def read_binary(path: str | Path) -> WignerGrid:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise InputError(f"{path} is not a Wigner grid file")
    n1, n2, cell_area = struct.unpack_from("<IId", raw, 4)
    data = np.frombuffer(raw, dtype="<f8", offset=4 + struct.calcsize("<IId"))
    x1_axis = data[:n1].copy()
    x2_axis = data[n1:n1 + n2].copy()
    values = data[n1 + n2:].reshape(n2, n1).copy()
    return WignerGrid(x1_axis, x2_axis, values, cell_area)
