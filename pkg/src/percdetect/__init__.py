"""Object detection in noisy images through site percolation."""
from .cluster import BinaryImage, ClusterLabeling, label_clusters, max_cluster_size
from .detector import DetectionConfig, DetectionReport, PhiRule, default_phi, detect
from .errors import ImageParseError, InfeasibleNoiseError, InvalidArgumentError, InvalidRegimeError
from .model import GrayImage, NoiseKind, NoiseModel, TrueImage, p0_tail, p1_cdf, synthesize
from .thresholding import (
    P_C_SITE,
    ThresholdConfig,
    ThresholdRule,
    ThresholdSelection,
    apply_threshold,
    feasible_interval,
    select_theta,
    select_theta_eq10,
    select_theta_eq11,
    theta_from_alpha0,
)

__version__ = "0.1.0"
