"""Observation model: images, noise laws and per-pixel probabilities.

An observed pixel is ``Y = Im + noise`` with ``Im`` in {0, 1}. For the
Gaussian kind the noise is ``sigma * eps`` with ``eps ~ N(0, 1)``; for the
general kind the noise has an arbitrary known distribution function
``F_gen`` and every ``F(y / sigma)`` is replaced by ``F_gen(y)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from ._rng import open_uniforms, stream
from .errors import InvalidArgumentError

__all__ = [
    "GrayImage",
    "TrueImage",
    "NoiseKind",
    "NoiseModel",
    "p0_tail",
    "p1_cdf",
    "synthesize",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Observed real-valued image, ``values[row, col]``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise InvalidArgumentError(f"expected a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("image contains NaN or infinite values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return max(self.width, self.height)


@dataclass(frozen=True, eq=False)
class TrueImage:
    """Noise-free black (1) and white (0) picture; also the object/background split."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or m.size == 0:
            raise InvalidArgumentError(f"expected a non-empty 2-D array, got shape {m.shape}")
        if not np.all((m == 0) | (m == 1)):
            raise InvalidArgumentError("mask entries must be 0 or 1")
        object.__setattr__(self, "mask", _frozen(m.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @classmethod
    def blank(cls, width: int, height: Optional[int] = None) -> "TrueImage":
        return cls(np.zeros((height or width, width), dtype=np.uint8))

    @classmethod
    def centered_square(cls, n: int, side: int) -> "TrueImage":
        """n x n screen with a black side x side square in the middle."""
        if not 0 <= side <= n:
            raise InvalidArgumentError(f"square side {side} does not fit a {n}x{n} screen")
        m = np.zeros((n, n), dtype=np.uint8)
        lo = (n - side) // 2
        m[lo:lo + side, lo:lo + side] = 1
        return cls(m)


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    GENERAL = "general"


def _check_unit(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidArgumentError("probability argument outside [0, 1]")
    return p


def _bisect_quantile(cdf, p: float, upper: bool) -> float:
    # lower: inf{y : F(y) >= p};  upper: sup{y : F(y) <= p}
    def left_ok(y):
        return cdf(y) <= p if upper else cdf(y) < p

    lo, hi = -1.0, 1.0
    while not left_ok(lo):
        lo *= 2.0
        if lo < -1e300:
            return -np.inf
    while left_ok(hi):
        hi *= 2.0
        if hi > 1e300:
            return np.inf
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= 1e-13 * max(1.0, abs(mid)):
            break
        if left_ok(mid):
            lo = mid
        else:
            hi = mid
    return lo if upper else hi


@dataclass(frozen=True)
class NoiseModel:
    """Known noise law.

    ``cdf``/``quantile`` refer to the standardized law ``F`` (Gaussian kind)
    or to ``F_gen`` (general kind). The ``noise_*`` methods describe the
    additive noise term itself, i.e. ``F(y / sigma)`` or ``F_gen(y)``; all
    probability formulas are written against those.

    Build instances with :meth:`gaussian`, :meth:`from_table` or
    :meth:`general`.
    """

    kind: NoiseKind
    sigma: float = 1.0
    table_x: Optional[tuple] = None
    table_p: Optional[tuple] = None
    cdf_fn: Optional[Callable] = field(default=None, compare=True)
    quantile_fn: Optional[Callable] = field(default=None, compare=True)

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidArgumentError(f"sigma must be finite and > 0, got {self.sigma}")
        if self.kind is NoiseKind.GENERAL and self.cdf_fn is None and self.table_x is None:
            raise InvalidArgumentError("general noise needs a CDF table or a CDF function")

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseModel":
        return cls(NoiseKind.GAUSSIAN, float(sigma))

    @classmethod
    def from_table(cls, xs, ps) -> "NoiseModel":
        """Piecewise-linear CDF through the points ``(xs[k], ps[k])``.

        Repeating an abscissa encodes a jump (an atom); the CDF takes the
        right-hand value at the jump. ``ps`` must run from 0 to 1.
        """
        xs = np.asarray(xs, dtype=np.float64)
        ps = np.asarray(ps, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ps.shape or xs.size < 2:
            raise InvalidArgumentError("CDF table needs two equal-length 1-D arrays of >= 2 points")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ps))):
            raise InvalidArgumentError("CDF table must be finite")
        if np.any(np.diff(xs) < 0) or np.any(np.diff(ps) < 0):
            raise InvalidArgumentError("CDF table must be non-decreasing in both columns")
        if ps[0] != 0.0 or ps[-1] != 1.0:
            raise InvalidArgumentError("CDF table must start at 0 and end at 1")
        return cls(NoiseKind.GENERAL, 1.0, tuple(xs.tolist()), tuple(ps.tolist()))

    @classmethod
    def general(cls, cdf: Callable, quantile: Optional[Callable] = None) -> "NoiseModel":
        """Analytic ``F_gen``; the quantile is found by bisection when not given."""
        return cls(NoiseKind.GENERAL, 1.0, cdf_fn=cdf, quantile_fn=quantile)

    # -- standardized law -------------------------------------------------

    def cdf(self, y):
        if self.kind is NoiseKind.GAUSSIAN:
            return ndtr(y)
        if self.table_x is not None:
            return self._table_cdf(y)
        return np.vectorize(lambda t: float(self.cdf_fn(t)), otypes=[float])(y)[()]

    def quantile(self, p):
        """``inf{y : cdf(y) >= p}``."""
        p = _check_unit(p)
        if self.kind is NoiseKind.GAUSSIAN:
            return ndtri(p)
        if self.table_x is not None:
            return self._table_quantile(p, upper=False)
        if self.quantile_fn is not None:
            return np.vectorize(lambda t: float(self.quantile_fn(t)), otypes=[float])(p)[()]
        return np.vectorize(lambda t: _bisect_quantile(self.cdf, t, False), otypes=[float])(p)[()]

    def upper_quantile(self, p):
        """``sup{y : cdf(y) <= p}``; equals :meth:`quantile` unless the CDF is flat at ``p``."""
        p = _check_unit(p)
        if self.kind is NoiseKind.GAUSSIAN:
            return ndtri(p)
        if self.table_x is not None:
            return self._table_quantile(p, upper=True)
        return np.vectorize(lambda t: _bisect_quantile(self.cdf, t, True), otypes=[float])(p)[()]

    # -- law of the additive noise term ----------------------------------

    def noise_cdf(self, y):
        if self.kind is NoiseKind.GAUSSIAN:
            return ndtr(np.asarray(y, dtype=np.float64) / self.sigma)[()]
        return self.cdf(y)

    def noise_sf(self, y):
        """``1 - noise_cdf(y)``, accurate in the upper tail for the Gaussian kind."""
        if self.kind is NoiseKind.GAUSSIAN:
            return ndtr(-np.asarray(y, dtype=np.float64) / self.sigma)[()]
        return (1.0 - np.asarray(self.cdf(y)))[()]

    def noise_quantile(self, p):
        if self.kind is NoiseKind.GAUSSIAN:
            return (self.sigma * np.asarray(self.quantile(p)))[()]
        return self.quantile(p)

    def noise_upper_quantile(self, p):
        if self.kind is NoiseKind.GAUSSIAN:
            return (self.sigma * np.asarray(self.upper_quantile(p)))[()]
        return self.upper_quantile(p)

    def describe(self) -> dict:
        d = {"kind": self.kind.value, "sigma": self.sigma}
        if self.table_x is not None:
            d["table_x"] = list(self.table_x)
            d["table_p"] = list(self.table_p)
        elif self.cdf_fn is not None:
            d["cdf"] = getattr(self.cdf_fn, "__name__", repr(self.cdf_fn))
        return d

    # -- tables -----------------------------------------------------------

    def _table_cdf(self, y):
        xs = np.asarray(self.table_x)
        ps = np.asarray(self.table_p)
        y = np.asarray(y, dtype=np.float64)
        k = np.searchsorted(xs, y, side="right")  # number of knots <= y
        out = np.empty(y.shape)
        below = k == 0
        above = k == xs.size
        mid = ~(below | above)
        out[below] = 0.0
        out[above] = 1.0
        km = k[mid]
        x0, x1 = xs[km - 1], xs[km]
        p0, p1 = ps[km - 1], ps[km]
        out[mid] = p0 + (y[mid] - x0) / (x1 - x0) * (p1 - p0)
        return out[()]

    def _table_quantile(self, p, upper):
        xs = np.asarray(self.table_x)
        ps = np.asarray(self.table_p)
        k = np.searchsorted(ps, p, side="right" if upper else "left")
        k = np.clip(k, 1, xs.size - 1)
        x0, x1 = xs[k - 1], xs[k]
        p0, p1 = ps[k - 1], ps[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(p1 > p0, (p - p0) / (p1 - p0), 1.0)
        out = np.where(x1 > x0, x0 + np.clip(frac, 0.0, 1.0) * (x1 - x0), x1)
        if upper:
            out = np.where(p >= 1.0, np.inf, out)
        else:
            out = np.where(p <= 0.0, -np.inf, out)
        return out[()]

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Noise values from uniforms on (0, 1) by inverse transform."""
        return np.asarray(self.noise_quantile(u), dtype=np.float64)


def _finite_arg(y):
    arr = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"argument must be finite, got {y!r}")
    return arr


def p0_tail(model: NoiseModel, y):
    """P(Y >= y) for a background (white) pixel."""
    return model.noise_sf(_finite_arg(y))


def p1_cdf(model: NoiseModel, y):
    """P(Y <= y) for an object (black) pixel."""
    return model.noise_cdf(_finite_arg(y) - 1.0)


def synthesize(truth: TrueImage, model: NoiseModel, seed: int) -> GrayImage:
    """Draw a noisy observation of ``truth``.

    Pixel ``(i, j)`` uses the ``i * width + j``-th uniform of the Philox
    stream keyed by ``seed``, pushed through the noise quantile.
    """
    u = open_uniforms(stream(seed), truth.mask.size).reshape(truth.mask.shape)
    return GrayImage(truth.mask + model.sample(u))
