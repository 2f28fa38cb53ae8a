import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percdetect import (
    DetectionConfig,
    GrayImage,
    InfeasibleNoiseError,
    InvalidArgumentError,
    NoiseModel,
    P_C_SITE,
    PhiRule,
    ThresholdConfig,
    ThresholdRule,
    TrueImage,
    default_phi,
    detect,
    synthesize,
)
from percdetect.lab import trial_seed

G02 = NoiseModel.gaussian(0.2)


def test_default_phi_n100():
    assert math.log(100) ** 2 == pytest.approx(21.2076, abs=1e-4)
    assert default_phi(100, 0.05) == 22


def test_default_phi_n2():
    assert default_phi(2, 0.5) == 2


def test_default_phi_alpha_floor():
    # ceil(ln(1e9)) + 1 = 22 exceeds ceil(ln(10)^2) = 6
    assert default_phi(10, 1e-9) == 10
    assert default_phi(1000, 1e-9) == max(math.ceil(math.log(1000) ** 2), 22)


def test_default_phi_clamped():
    assert all(default_phi(n, 0.05) <= n for n in range(2, 10_001))


def test_default_phi_rejects_tiny_screen():
    with pytest.raises(InvalidArgumentError):
        default_phi(1, 0.05)


def test_noiseless_white():
    rep = detect(GrayImage(np.zeros((100, 100))), DetectionConfig(G02))
    assert not rep.detected
    assert rep.largest_cluster_size == 0
    assert rep.witness_pixels.shape == (0, 2)
    assert rep.decision == "no_object"


def test_noiseless_black_stops_at_phi():
    rep = detect(GrayImage(np.ones((100, 100))), DetectionConfig(G02, phi=22))
    assert rep.detected and rep.truncated
    assert rep.largest_cluster_size == 22
    assert len(rep.witness_pixels) == 22
    assert rep.phi_used == 22


def test_default_phi_used():
    rep = detect(GrayImage(np.zeros((100, 100))), DetectionConfig(G02))
    assert rep.phi_used == 22


def test_phi_bounds():
    img = GrayImage(np.zeros((10, 10)))
    with pytest.raises(InvalidArgumentError):
        detect(img, DetectionConfig(G02, phi=11))
    with pytest.raises(InvalidArgumentError):
        DetectionConfig(G02, phi=0)
    with pytest.raises(InvalidArgumentError):
        DetectionConfig(G02, phi_rule=PhiRule.EXPLICIT)
    with pytest.raises(InvalidArgumentError):
        DetectionConfig(G02, alpha=1.0)


def test_too_small_image():
    with pytest.raises(InvalidArgumentError):
        detect(GrayImage(np.zeros((1, 5))), DetectionConfig(G02, phi=1))


def test_infeasible_noise_without_manual_theta():
    q = 1 - P_C_SITE
    m = NoiseModel.from_table([-1, -1, 1, 1], [0, q, q, 1])
    img = GrayImage(np.zeros((10, 10)))
    with pytest.raises(InfeasibleNoiseError):
        detect(img, DetectionConfig(m, phi=3))
    cfg = DetectionConfig(m, ThresholdConfig(rule=ThresholdRule.MANUAL, manual_theta=0.5), phi=3)
    assert not detect(img, cfg).detected


def test_report_invariants_and_determinism():
    img = synthesize(TrueImage.centered_square(64, 20), G02, 9)
    for phi in (1, 5, 22, 64):
        a = detect(img, DetectionConfig(G02, phi=phi))
        b = detect(img, DetectionConfig(G02, phi=phi))
        assert a.detected == (a.largest_cluster_size >= a.phi_used)
        if a.detected:
            assert len(a.witness_pixels) == a.largest_cluster_size
        assert a == b  # elapsed time is excluded from equality
        assert np.array_equal(a.witness_pixels, b.witness_pixels)


@given(st.integers(0, 2**32), st.integers(1, 40), st.integers(1, 40))
@settings(max_examples=40, deadline=None)
def test_fires_for_smaller_phi(seed, phi1, phi2):
    lo, hi = sorted((phi1, phi2))
    img = synthesize(TrueImage.centered_square(40, 6), NoiseModel.gaussian(0.45), seed)
    if detect(img, DetectionConfig(G02, phi=hi)).detected:
        assert detect(img, DetectionConfig(G02, phi=lo)).detected


@given(st.integers(0, 2**32), st.floats(-1e3, 1e3, allow_nan=False), st.floats(0.2, 0.8))
@settings(max_examples=40, deadline=None)
def test_shift_equivariance(seed, shift, theta):
    img = synthesize(TrueImage.centered_square(30, 8), NoiseModel.gaussian(0.3), seed)
    base = detect(img, DetectionConfig(G02, ThresholdConfig(rule="manual", manual_theta=theta), phi=10))
    moved = detect(
        GrayImage(img.values + shift),
        DetectionConfig(G02, ThresholdConfig(rule="manual", manual_theta=theta + shift), phi=10),
    )
    # exact unless a pixel sits within rounding distance of the threshold
    margin = np.min(np.abs(img.values - theta))
    if margin > 1e-9 * (1 + abs(shift)):
        assert moved.detected == base.detected
        assert moved.largest_cluster_size == base.largest_cluster_size


def _rate(truth, trials=1000, seed=2024):
    cfg = DetectionConfig(G02, phi=22)
    return sum(detect(synthesize(truth, G02, trial_seed(seed, t)), cfg).detected for t in range(trials)) / trials


def test_h0_false_detection_rate():
    assert _rate(TrueImage.blank(100)) <= 0.05


def test_h1_detection_rate():
    assert _rate(TrueImage.centered_square(100, 30)) >= 0.99
