"""
Exception hierarchy for the oscilla package.

Every error raised on purpose by the toolkit derives from OscillaError. The
command line interface maps the three families to exit codes:
ConfigError -> 2, MeshError / SolverError / CheckError -> 3.
"""

from typing import Iterable, Optional


class OscillaError(Exception):
    """Base class for all oscilla errors."""

    exit_code = 3


class ConfigError(OscillaError):
    """Invalid user input: malformed config, bad parameters, unknown keys."""

    exit_code = 2


class ProfileError(ConfigError):
    """The oscillation profile violates one of its invariants."""


class NonPositiveProfile(ProfileError):
    """g_min <= 0, the strip would be disconnected."""


class TooTall(ProfileError):
    """g1 >= pi/2."""


class BadPeriod(ProfileError):
    """Period divisor a < 1."""


class NonPositiveQ0(ConfigError):
    """The homogenized coefficient must be strictly positive."""


class ResourceLimit(ConfigError):
    """A requested mesh exceeds the configured triangle cap."""


class MeshError(OscillaError):
    """Geometric failure on a triangulation."""


class DegenerateMesh(MeshError):
    """A triangle with non-positive signed area."""


class OutOfDomain(MeshError):
    """A point lies outside the basic cell."""


class MeshMismatch(MeshError):
    """Cell data and strip mesh were built from different profiles."""


class SolverError(OscillaError):
    """Failure of a linear solve or of its preconditions."""


class NoConvergence(SolverError):
    """Conjugate gradients stopped before reaching the requested tolerance."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"CG did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


class IncompatibleRHS(SolverError):
    """A pure-Neumann load does not integrate to zero."""

    def __init__(self, ratio: float, tolerance: float, what: str = "load"):
        self.ratio = ratio
        self.tolerance = tolerance
        super().__init__(
            f"incompatible {what}: relative mean {ratio:.3e} exceeds {tolerance:.1e}"
        )


class NonFiniteWeight(SolverError):
    """A weight or load callback returned NaN or infinity."""


class CheckError(OscillaError):
    """A numerical verification failed."""


class BoundViolated(CheckError):
    """One or more cell-norm scaling bounds failed."""

    def __init__(self, quantities: Iterable[str]):
        self.quantities = list(quantities)
        super().__init__(f"scaling bound violated for: {', '.join(self.quantities)}")


class DegenerateFit(CheckError):
    """A log-log rate fit cannot be performed on the given points."""


class NonDecreasingError(CheckError):
    """An error curve fails to decrease along the epsilon ladder."""

    def __init__(self, curve: str, detail: Optional[str] = None):
        self.curve = curve
        message = f"error curve {curve} is not decreasing"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
