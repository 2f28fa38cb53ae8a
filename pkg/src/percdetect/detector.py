"""Percolation-based object detection.

Tests ``H0: the true image is all white`` against ``H1: some pixel is
black``: threshold the observation, search black clusters depth-first and
declare an object as soon as one cluster reaches ``phi`` pixels.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cluster import search_until
from .errors import InvalidArgumentError
from .model import GrayImage, NoiseModel
from .thresholding import ThresholdConfig, ThresholdSelection, select_theta

__all__ = ["PhiRule", "DetectionConfig", "DetectionReport", "default_phi", "detect"]


class PhiRule(str, enum.Enum):
    EXPLICIT = "explicit"
    LOG_SQUARED = "log_squared"


def default_phi(n: int, alpha: float) -> int:
    """Minimum evidence cluster size for an n-pixel-wide screen.

    ``max(ceil(ln(n)^2), ceil(ln(1/alpha)) + 1)`` clamped to ``n``: grows
    faster than ``log n`` and dominates ``log(1/alpha)``.
    """
    if n < 2:
        raise InvalidArgumentError(f"screen size must be >= 2, got {n}")
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    phi = max(math.ceil(math.log(n) ** 2), math.ceil(math.log(1.0 / alpha)) + 1)
    return min(phi, n)


@dataclass(frozen=True)
class DetectionConfig:
    model: NoiseModel
    threshold: ThresholdConfig = ThresholdConfig()
    alpha: float = 0.05
    phi: Optional[int] = None
    phi_rule: Optional[PhiRule] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        rule = self.phi_rule
        if rule is None:
            rule = PhiRule.LOG_SQUARED if self.phi is None else PhiRule.EXPLICIT
        object.__setattr__(self, "phi_rule", PhiRule(rule))
        if self.phi_rule is PhiRule.EXPLICIT:
            if self.phi is None or int(self.phi) != self.phi or self.phi < 1:
                raise InvalidArgumentError(f"explicit phi must be an integer >= 1, got {self.phi}")

    def resolve_phi(self, n: int) -> int:
        if self.phi_rule is PhiRule.LOG_SQUARED:
            return default_phi(n, self.alpha)
        if self.phi > n:
            raise InvalidArgumentError(f"phi={self.phi} exceeds the screen size {n}")
        return int(self.phi)


@dataclass(frozen=True)
class DetectionReport:
    detected: bool
    theta_used: float
    phi_used: int
    largest_cluster_size: int
    witness_pixels: np.ndarray = field(repr=False, compare=False)
    p_out: float
    p_im: float
    selection: ThresholdSelection
    truncated: bool
    elapsed_s: float = field(compare=False)
    pixels: int

    @property
    def decision(self) -> str:
        return "object_detected" if self.detected else "no_object"


def detect(img: GrayImage, cfg: DetectionConfig) -> DetectionReport:
    if img.width < 2 or img.height < 2:
        raise InvalidArgumentError(f"image must be at least 2x2, got {img.width}x{img.height}")
    t0 = time.perf_counter()
    phi = cfg.resolve_phi(img.n)
    selection = select_theta(cfg.model, cfg.threshold)
    # thresholding fused with a search that needs no label array: same
    # clusters and discovery order as apply_threshold + label_clusters
    mask = np.greater_equal(img.values, selection.theta).view(np.uint8)
    largest, truncated, witness = search_until(mask, phi)
    detected = largest >= phi
    elapsed = time.perf_counter() - t0
    return DetectionReport(
        detected=detected,
        theta_used=selection.theta,
        phi_used=phi,
        largest_cluster_size=largest,
        witness_pixels=witness,
        p_out=selection.p_out,
        p_im=selection.p_im,
        selection=selection,
        truncated=truncated,
        elapsed_s=elapsed,
        pixels=img.values.size,
    )
