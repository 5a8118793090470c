"""
Homogenized one-dimensional problem.

Forcing f and the homogenized solution w0 are real trigonometric polynomials
on (0, 2 pi); the equation -q0 w0'' + w0 = f is solved mode by mode.
"""

import math
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Tuple

import numpy as np

from oscilla.exceptions import ConfigError, NonPositiveQ0

logger = logging.getLogger(__name__)

RESIDUAL_SAMPLES = 1024


@dataclass(frozen=True)
class TrigPoly:
    """
    p(x) = c0 + sum a_k cos(k x) + b_k sin(k x), modes sorted by k without repeats.
    """

    c0: float = 0.0
    modes: Tuple[Tuple[int, float, float], ...] = ()

    @classmethod
    def create(cls, c0: float = 0.0, modes: Iterable[Tuple[int, float, float]] = ()) -> 'TrigPoly':
        merged: Dict[int, Tuple[float, float]] = {}
        for k, a, b in modes:
            if not isinstance(k, (int, np.integer)) or k < 1:
                raise ConfigError(f"mode index k must be a positive integer, got {k!r}")
            a0, b0 = merged.get(int(k), (0.0, 0.0))
            merged[int(k)] = (a0 + float(a), b0 + float(b))
        return cls(float(c0), tuple((k, a, b) for k, (a, b) in sorted(merged.items())))

    @classmethod
    def cos(cls, k: int = 1, amplitude: float = 1.0) -> 'TrigPoly':
        return cls.create(0.0, [(k, amplitude, 0.0)])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.c0)
        for k, a, b in self.modes:
            out = out + a * np.cos(k * x) + b * np.sin(k * x)
        return out if out.ndim else float(out)

    def derivative(self, order: int = 1) -> 'TrigPoly':
        """Exact term-by-term derivative of order 1 to 4."""
        if order not in (1, 2, 3, 4):
            raise ConfigError(f"derivative order must be 1..4, got {order}")
        modes = []
        for k, a, b in self.modes:
            # rotate (a, b) by order quarter turns and scale by k^order
            for _ in range(order):
                a, b = k * b, -k * a
            modes.append((k, a, b))
        return TrigPoly(0.0, tuple(modes))

    def __sub__(self, other: 'TrigPoly') -> 'TrigPoly':
        return TrigPoly.create(self.c0 - other.c0,
                               list(self.modes) + [(k, -a, -b) for k, a, b in other.modes])

    def coefficients(self) -> Dict[int, Tuple[float, float]]:
        out = {0: (self.c0, 0.0)}
        out.update({k: (a, b) for k, a, b in self.modes})
        return out

    def sup_norm(self) -> float:
        """Upper bound |c0| + sum sqrt(a_k^2 + b_k^2) of max |p|."""
        return abs(self.c0) + sum(math.hypot(a, b) for _, a, b in self.modes)

    def is_nonnegative(self) -> bool:
        x = 2.0 * math.pi * np.arange(RESIDUAL_SAMPLES) / RESIDUAL_SAMPLES
        return bool(np.min(self(x)) >= 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {'c0': self.c0, 'modes': [{'k': k, 'a': a, 'b': b} for k, a, b in self.modes]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrigPoly':
        if not isinstance(data, dict):
            raise ConfigError("forcing must be a JSON object")
        unknown = set(data) - {'c0', 'modes'}
        if unknown:
            raise ConfigError(f"unknown forcing keys: {sorted(unknown)}")
        modes = []
        for raw in data.get('modes', []):
            if not isinstance(raw, dict) or set(raw) - {'k', 'a', 'b'} or 'k' not in raw:
                raise ConfigError(f"bad forcing mode entry: {raw!r}")
            k = raw['k']
            if isinstance(k, bool) or not isinstance(k, int):
                raise ConfigError(f"mode index k must be a positive integer, got {k!r}")
            modes.append((k, raw.get('a', 0.0), raw.get('b', 0.0)))
        try:
            return cls.create(data.get('c0', 0.0), modes)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"forcing coefficients must be numbers: {e}")


def solve_homogenized(q0: float, f: TrigPoly) -> TrigPoly:
    """
    Return the 2 pi-periodic solution of -q0 w'' + w = f.

    Raises:
        NonPositiveQ0: if q0 <= 0.
    """
    if not q0 > 0.0:
        raise NonPositiveQ0(f"homogenized coefficient must be positive, got {q0}")
    modes = [(k, a / (1.0 + q0 * k * k), b / (1.0 + q0 * k * k)) for k, a, b in f.modes]
    return TrigPoly(f.c0, tuple(modes))


def residual_check(q0: float, f: TrigPoly, w0: TrigPoly) -> float:
    """Max of |-q0 w0'' + w0 - f| over equispaced sample points."""
    x = 2.0 * math.pi * np.arange(RESIDUAL_SAMPLES) / RESIDUAL_SAMPLES
    r = -q0 * w0.derivative(2)(x) + w0(x) - f(x)
    return float(np.max(np.abs(r)))


def inner(u: TrigPoly, v: TrigPoly) -> float:
    """Exact integral of u v over (0, 2 pi)."""
    cu, cv = u.coefficients(), v.coefficients()
    total = 2.0 * math.pi * cu[0][0] * cv[0][0]
    for k in set(cu) & set(cv) - {0}:
        total += math.pi * (cu[k][0] * cv[k][0] + cu[k][1] * cv[k][1])
    return total


def limit_inner(g_hat: float, u: TrigPoly, v: TrigPoly) -> float:
    """(u, v)_0 = g_hat * integral of u v."""
    return g_hat * inner(u, v)


def limit_form(q0: float, g_hat: float, u: TrigPoly, v: TrigPoly) -> float:
    """a_0(u, v) = g_hat * integral of (q0 u' v' + u v)."""
    return g_hat * (q0 * inner(u.derivative(1), v.derivative(1)) + inner(u, v))
