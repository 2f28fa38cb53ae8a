"""Threshold selection and binarization.

A threshold ``theta`` is admissible when thresholding makes background
pixels black with probability ``p_out < p_c`` and object pixels black with
probability ``p_im > p_c``, where ``p_c`` is the critical probability for
site percolation on the square lattice.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cluster import BinaryImage
from .errors import InfeasibleNoiseError, InvalidArgumentError
from .model import GrayImage, NoiseModel

__all__ = [
    "P_C_SITE",
    "ThresholdRule",
    "ThresholdConfig",
    "ThresholdSelection",
    "theta_from_alpha0",
    "feasible_interval",
    "separation_objective",
    "select_theta_eq10",
    "select_theta_eq11",
    "select_theta",
    "apply_threshold",
]

P_C_SITE = 0.592746

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ThresholdRule(str, enum.Enum):
    EQ10 = "eq10"  # maximize squared distance of p_out, p_im from p_c
    EQ11 = "eq11"  # midpoint of the admissible interval
    MANUAL = "manual"


@dataclass(frozen=True)
class ThresholdConfig:
    p_c_site: float = P_C_SITE
    rule: ThresholdRule = ThresholdRule.EQ10
    manual_theta: Optional[float] = None
    grid_resolution: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "rule", ThresholdRule(self.rule))
        if not 0.0 < self.p_c_site < 1.0:
            raise InvalidArgumentError(f"p_c_site must lie in (0, 1), got {self.p_c_site}")
        if not self.grid_resolution > 0:
            raise InvalidArgumentError("grid_resolution must be > 0")
        if self.rule is ThresholdRule.MANUAL:
            if self.manual_theta is None or not math.isfinite(self.manual_theta):
                raise InvalidArgumentError("manual rule needs a finite manual_theta")


@dataclass(frozen=True)
class ThresholdSelection:
    theta: float
    p_out: float
    p_im: float
    feasible_interval: Optional[tuple]
    objective_value: float
    alpha0: float
    rule: ThresholdRule

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "p_out": self.p_out,
            "p_im": self.p_im,
            "feasible_interval": list(self.feasible_interval) if self.feasible_interval else None,
            "objective_value": self.objective_value,
            "alpha0": self.alpha0,
            "rule": self.rule.value,
        }


def theta_from_alpha0(model: NoiseModel, alpha0: float) -> float:
    """Smallest theta with ``P0(Y >= theta) <= alpha0``."""
    if not 0.0 < alpha0 < 1.0:
        raise InvalidArgumentError(f"alpha0 must lie in (0, 1), got {alpha0}")
    theta = float(model.noise_quantile(1.0 - alpha0))
    if not math.isfinite(theta):
        raise InfeasibleNoiseError("noise quantile undefined", alpha0=alpha0, theta=theta)
    return theta


def feasible_interval(model: NoiseModel, cfg: ThresholdConfig = ThresholdConfig()) -> tuple:
    """Open interval of thetas keeping the background sub- and the object supercritical.

    With ``q = 1 - p_c``: ``p_out < p_c`` iff theta lies above
    ``sup{y : F(y) <= q}`` and ``p_im > p_c`` iff ``theta - 1`` lies below
    ``inf{y : F(y) >= q}``. For a continuous, strictly increasing law both
    bounds coincide and the interval has length exactly 1.
    """
    q = 1.0 - cfg.p_c_site
    low = float(model.noise_upper_quantile(q))
    high = 1.0 + float(model.noise_quantile(q))
    if not (math.isfinite(low) and math.isfinite(high)) or not low < high:
        raise InfeasibleNoiseError(
            "noise level is not small enough: no threshold separates the regimes",
            low=low,
            high=high,
            p_c_site=cfg.p_c_site,
            noise=model.describe(),
        )
    return low, high


def _probs(model: NoiseModel, theta):
    p_out = model.noise_sf(theta)
    q_im = model.noise_cdf(np.asarray(theta) - 1.0)
    return p_out, q_im


def separation_objective(model: NoiseModel, theta, p_c: float = P_C_SITE):
    """``(p_out - p_c)^2 + (p_im - p_c)^2``."""
    p_out, q_im = _probs(model, theta)
    return (p_out - p_c) ** 2 + (1.0 - q_im - p_c) ** 2


def _objective_shift(model, theta, p_c):
    # objective minus its constant part p_c^2 + (1 - p_c)^2; keeps full relative
    # precision when p_out and 1 - p_im are both tiny
    p_out, q_im = _probs(model, theta)
    return p_out * p_out + q_im * q_im - 2.0 * p_c * p_out - 2.0 * (1.0 - p_c) * q_im


def _golden_max(f, a, b, tol):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _selection(model, cfg, theta, interval, rule, objective=None):
    theta = float(theta)
    p_out = float(model.noise_sf(theta))
    p_im = float(1.0 - model.noise_cdf(theta - 1.0))
    if objective is None:
        objective = float(separation_objective(model, theta, cfg.p_c_site))
    return ThresholdSelection(theta, p_out, p_im, interval, objective, p_out, rule)


@functools.lru_cache(maxsize=256)
def select_theta_eq10(model: NoiseModel, cfg: ThresholdConfig = ThresholdConfig()) -> ThresholdSelection:
    """Maximize the separation objective over the admissible interval.

    Grid scan at ``cfg.grid_resolution`` on the interval shrunk by one step
    at each end, then golden-section refinement to 1e-8 around the best
    grid point. Flat plateaus (objective saturated in floating point)
    resolve to the plateau centre.
    """
    low, high = feasible_interval(model, cfg)
    step = cfg.grid_resolution
    a, b = low + step, high - step
    if not a < b:
        a = b = 0.5 * (low + high)
    grid = np.linspace(a, b, max(2, int(math.ceil((b - a) / step)) + 1))
    vals = _objective_shift(model, grid, cfg.p_c_site)
    best = np.flatnonzero(vals == vals.max())
    k = int(best[len(best) // 2])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    if best.size > 1 or lo == hi:
        theta = float(grid[k])
    else:
        theta = _golden_max(lambda t: float(_objective_shift(model, t, cfg.p_c_site)), lo, hi, 1e-8)
        if _objective_shift(model, theta, cfg.p_c_site) < vals[k]:
            theta = float(grid[k])
    return _selection(model, cfg, theta, (low, high), ThresholdRule.EQ10)


@functools.lru_cache(maxsize=256)
def select_theta_eq11(model: NoiseModel, cfg: ThresholdConfig = ThresholdConfig()) -> ThresholdSelection:
    """Midpoint of the admissible interval, where the sign objective equals 2."""
    low, high = feasible_interval(model, cfg)
    return _selection(model, cfg, 0.5 * (low + high), (low, high), ThresholdRule.EQ11, 2.0)


def select_theta(model: NoiseModel, cfg: ThresholdConfig = ThresholdConfig()) -> ThresholdSelection:
    """Dispatch on ``cfg.rule``. A manual theta skips the admissibility check."""
    if cfg.rule is ThresholdRule.EQ10:
        return select_theta_eq10(model, cfg)
    if cfg.rule is ThresholdRule.EQ11:
        return select_theta_eq11(model, cfg)
    try:
        interval = feasible_interval(model, cfg)
    except InfeasibleNoiseError:
        interval = None
    return _selection(model, cfg, float(cfg.manual_theta), interval, ThresholdRule.MANUAL)


def apply_threshold(img: GrayImage, theta: float) -> BinaryImage:
    """Black (1) where ``Y >= theta``, white (0) elsewhere."""
    return BinaryImage(img.values >= theta)
