"""Exception hierarchy shared by the simulator and the CLI.

Every error carries the process exit code the CLI uses when it escapes a
subcommand:
  2: configuration problems
  3: numeric accuracy could not be reached
  4: postselection rejected every interval
  1: anything else raised on purpose by the package
"""

from __future__ import annotations

from typing import Any


class SqueezeSimError(Exception):
    """Base class for all errors raised on purpose by squeezesim."""

    exit_code = 1


class InputError(SqueezeSimError, ValueError):
    """A caller passed a value outside the documented domain."""


class ConfigError(SqueezeSimError):
    """A run configuration could not be parsed or validated.

    ``problems`` lists every violated constraint, not just the first one.
    """

    exit_code = 2

    def __init__(self, message: str, problems: list[str] | None = None):
        self.problems = problems or []
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class SteadyStateError(SqueezeSimError):
    """The generator has no unique fixed point (e.g. Γ = 0)."""


class UndefinedPhaseError(SqueezeSimError):
    """The dipole phase is undefined because the coherence vanishes."""


class AccuracyError(SqueezeSimError):
    """A numeric procedure could not reach its tolerance."""

    exit_code = 3

    def __init__(self, message: str, defect: float | None = None):
        self.defect = defect
        if defect is not None:
            message = f"{message} (measured defect {defect:.3e})"
        super().__init__(message)


class NoSolutionError(SqueezeSimError):
    """A calibration target lies outside what the model can reach."""

    exit_code = 3

    def __init__(self, message: str, bracket: dict[str, Any] | None = None):
        self.bracket = bracket or {}
        if self.bracket:
            details = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                                for k, v in self.bracket.items())
            message = f"{message} [{details}]"
        super().__init__(message)


class CannotBinError(SqueezeSimError):
    """The fringe reference cannot map intensities to phases."""


class EmptyAcceptanceError(SqueezeSimError):
    """Postselection rejected every saved histogram."""

    exit_code = 4
