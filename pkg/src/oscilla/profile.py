"""
Oscillation profile module.

This module holds the L-periodic boundary profile g, stored as a real
trigonometric polynomial, and the admissible values of the scale parameter
epsilon.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from oscilla.exceptions import BadPeriod, ConfigError, NonPositiveProfile, TooTall

logger = logging.getLogger(__name__)

SAMPLES_PER_PERIOD = 4096
NEWTON_TOL = 1e-10


@dataclass(frozen=True)
class Mode:
    """One oscillatory mode c cos(2 pi k y / L) + s sin(2 pi k y / L)."""

    k: int
    c: float = 0.0
    s: float = 0.0


@dataclass(frozen=True)
class BoundaryProfile:
    """
    The oscillation profile g(y) = a0 + sum c_k cos(2 pi k y / L) + s_k sin(2 pi k y / L).

    Instances returned by validate() carry the extrema g1 and g_min; a raw
    profile has them unset.
    """

    a0: float
    modes: Tuple[Mode, ...] = ()
    a: int = 1
    g1: Optional[float] = field(default=None, compare=False)
    g_min: Optional[float] = field(default=None, compare=False)

    @property
    def period(self) -> float:
        """The period L = 2 pi / a."""
        return 2.0 * math.pi / self.a

    @property
    def mean(self) -> float:
        """The average g_hat of g over one period, exactly a0."""
        return self.a0

    @property
    def is_constant(self) -> bool:
        return all(m.c == 0.0 and m.s == 0.0 for m in self.modes)

    @property
    def validated(self) -> bool:
        return self.g1 is not None

    def _phases(self, y):
        y = np.asarray(y, dtype=float)
        omega = 2.0 * math.pi / self.period
        return y, omega

    def eval(self, y):
        """Evaluate g at y (scalar or array)."""
        y, omega = self._phases(y)
        out = np.full(y.shape, self.a0, dtype=float)
        for m in self.modes:
            arg = omega * m.k * y
            out = out + m.c * np.cos(arg) + m.s * np.sin(arg)
        return out if out.ndim else float(out)

    def eval_deriv(self, y, order: int = 1):
        """Exact derivative of g of the given order at y."""
        y, omega = self._phases(y)
        out = np.zeros(y.shape, dtype=float)
        for m in self.modes:
            w = omega * m.k
            arg = w * y
            # d^n/dy^n cos = w^n cos(arg + n pi/2), likewise for sin
            shift = order * math.pi / 2.0
            out = out + (w ** order) * (m.c * np.cos(arg + shift) + m.s * np.sin(arg + shift))
        return out if out.ndim else float(out)

    def with_extrema(self, g1: float, g_min: float) -> 'BoundaryProfile':
        return BoundaryProfile(self.a0, self.modes, self.a, g1, g_min)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'a0': self.a0,
            'modes': [{'k': m.k, 'c': m.c, 's': m.s} for m in self.modes],
            'a': self.a,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BoundaryProfile':
        """Build a raw (unvalidated) profile from its JSON form."""
        if not isinstance(data, dict):
            raise ConfigError("profile must be a JSON object")
        unknown = set(data) - {'a0', 'modes', 'a'}
        if unknown:
            raise ConfigError(f"unknown profile keys: {sorted(unknown)}")
        modes = []
        for raw in data.get('modes', []):
            if not isinstance(raw, dict) or set(raw) - {'k', 'c', 's'} or 'k' not in raw:
                raise ConfigError(f"bad profile mode entry: {raw!r}")
            k = raw['k']
            if not isinstance(k, int) or isinstance(k, bool) or k < 1:
                raise ConfigError(f"mode index k must be a positive integer, got {k!r}")
            try:
                modes.append(Mode(k, float(raw.get('c', 0.0)), float(raw.get('s', 0.0))))
            except (TypeError, ValueError):
                raise ConfigError(f"profile mode coefficients must be numbers: {raw!r}")
        a = data.get('a', 1)
        if not isinstance(a, int) or isinstance(a, bool):
            raise ConfigError(f"period divisor a must be an integer, got {a!r}")
        if 'a0' not in data:
            raise ConfigError("profile needs 'a0'")
        try:
            a0 = float(data['a0'])
        except (TypeError, ValueError):
            raise ConfigError(f"profile a0 must be a number, got {data['a0']!r}")
        return cls(a0, tuple(modes), a)


def _refine_extremum(profile: BoundaryProfile, y: float) -> float:
    """Newton iteration on g'(y) = 0 starting from a sampled extremum."""
    for _ in range(50):
        d1 = profile.eval_deriv(y, 1)
        d2 = profile.eval_deriv(y, 2)
        if d2 == 0.0:
            break
        step = d1 / d2
        y -= step
        if abs(step) < NEWTON_TOL:
            break
    return y


def validate(profile: BoundaryProfile) -> BoundaryProfile:
    """
    Check the profile invariants and return a copy carrying g1 and g_min.

    Raises:
        BadPeriod: if a < 1.
        NonPositiveProfile: if min g <= 0.
        TooTall: if max g >= pi / 2.
    """
    if profile.a < 1:
        raise BadPeriod(f"period divisor a must be >= 1, got {profile.a}")
    if profile.is_constant:
        g1 = g_min = profile.a0
    else:
        kmax = max(m.k for m in profile.modes)
        n = max(SAMPLES_PER_PERIOD, 64 * kmax)
        ys = profile.period * np.arange(n) / n
        gs = profile.eval(ys)
        candidates = [float(v) for v in gs]
        # local extrema of the periodic sample sequence
        prev = np.roll(gs, 1)
        nxt = np.roll(gs, -1)
        peaks = np.nonzero(((gs >= prev) & (gs >= nxt)) | ((gs <= prev) & (gs <= nxt)))[0]
        for i in peaks:
            y_star = _refine_extremum(profile, float(ys[i]))
            if abs(y_star - ys[i]) <= profile.period / n * 2:
                candidates.append(profile.eval(y_star))
        g1 = max(candidates)
        g_min = min(candidates)

    if g_min <= 0.0:
        raise NonPositiveProfile(f"profile minimum {g_min:.6g} is not positive")
    if g1 >= math.pi / 2.0:
        raise TooTall(f"profile maximum {g1:.6g} is not below pi/2")
    logger.debug(f"Validated profile: g1={g1:.12g}, g_min={g_min:.12g}")
    return profile.with_extrema(g1, g_min)


def make_profile(a0: float, modes: Sequence[Tuple[int, float, float]] = (), a: int = 1) -> BoundaryProfile:
    """Shorthand: build and validate a profile from (k, c, s) triples."""
    return validate(BoundaryProfile(a0, tuple(Mode(k, c, s) for k, c, s in modes), a))


@dataclass(frozen=True)
class EpsilonValue:
    """The scale parameter epsilon = 1/m."""

    m: int

    def __post_init__(self):
        if not isinstance(self.m, int) or isinstance(self.m, bool) or self.m < 1:
            raise ConfigError(f"epsilon must be 1/m with a positive integer m, got m={self.m!r}")

    @property
    def value(self) -> float:
        return 1.0 / self.m

    def cells(self, profile: BoundaryProfile) -> int:
        """Number of oscillation cells across the strip, 2 pi / (eps L) = a m."""
        return profile.a * self.m

    @classmethod
    def from_float(cls, eps: float) -> 'EpsilonValue':
        """Accept eps given as a float if it is the reciprocal of an integer."""
        if eps <= 0:
            raise ConfigError(f"epsilon must be positive, got {eps}")
        m = round(1.0 / eps)
        if m < 1 or abs(1.0 / m - eps) > 1e-12 * max(1.0, eps):
            raise ConfigError(f"epsilon {eps} is not of the form 1/m")
        return cls(int(m))

    def __str__(self) -> str:
        return f"1/{self.m}"
