"""Monte Carlo laboratory for the detector's error bounds.

Every trial draws its randomness from a stream keyed by
``(master_seed, trial_index)`` and results are aggregated in trial order,
so outputs are identical for any number of worker threads.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from ._rng import stream
from .cluster import BinaryImage, label_clusters
from .detector import DetectionConfig, detect
from .errors import InvalidArgumentError, InvalidRegimeError
from .model import NoiseModel, TrueImage, synthesize
from .thresholding import P_C_SITE, ThresholdConfig, apply_threshold, select_theta

__all__ = [
    "WORKERS_ENV",
    "trial_seed",
    "wilson_interval",
    "PercolationSample",
    "TailEstimate",
    "CrossingStats",
    "CurveRow",
    "CalibrationResult",
    "sample_lattice",
    "cluster_size_trials",
    "estimate_cluster_tail",
    "left_right_crossing",
    "max_disjoint_crossings",
    "estimate_crossings",
    "fpr_power_curve",
    "calibrate_phi",
]

WORKERS_ENV = "PERCDETECT_WORKERS"
Z95 = 1.959963984540054


def _workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def _run_trials(fn: Callable[[int], object], trials: int, workers: Optional[int]) -> list:
    workers = _workers(workers)
    if workers == 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials), chunksize=64))


def trial_seed(master_seed: int, trial: int) -> int:
    """64-bit seed for one trial, a hash of (master_seed, trial)."""
    ss = np.random.SeedSequence(int(master_seed) & ((1 << 64) - 1), spawn_key=(int(trial),))
    return int(ss.generate_state(1, np.uint64)[0])


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple:
    if trials <= 0:
        raise InvalidArgumentError("trials must be positive")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _check_p(p):
    if not 0.0 < p < 1.0:
        raise InvalidArgumentError(f"p must lie in (0, 1), got {p}")


def _check_trials(trials, minimum=100):
    if trials < minimum:
        raise InvalidArgumentError(f"need at least {minimum} trials, got {trials}")


# -- site percolation -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PercolationSample:
    n: int
    p: float
    seed: int
    grid: BinaryImage


def _lattice_bits(n: int, p: float, seed: int) -> np.ndarray:
    # site k = row * n + col is open iff the k-th uniform of the stream is < p
    return (stream(seed).random(n * n) < p).reshape(n, n)


def sample_lattice(n: int, p: float, seed: int) -> PercolationSample:
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    _check_p(p)
    return PercolationSample(n, p, seed, BinaryImage(_lattice_bits(n, p, seed)))


@dataclass(frozen=True)
class TailEstimate:
    """Survival of cluster sizes under subcritical site percolation.

    ``log_survival[k]`` is ln P(|C(centre)| >= thresholds[k]), ``screen_*``
    the same for the largest cluster anywhere on the screen. The fit is
    ``log_survival ~ intercept + slope * s`` with ``fitted_rate = -slope``.
    """

    thresholds: np.ndarray
    origin_counts: np.ndarray
    screen_counts: np.ndarray
    trials: int
    fitted_rate: float
    slope: float
    intercept: float
    r_squared: float
    fit_mask: np.ndarray
    n: int = 0
    p: float = 0.0

    @property
    def survival(self) -> np.ndarray:
        return self.origin_counts / self.trials

    @property
    def log_survival(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.survival)

    @property
    def confidence(self) -> np.ndarray:
        """Binomial standard error of each origin survival estimate."""
        s = self.survival
        return np.sqrt(s * (1 - s) / self.trials)

    @property
    def screen_survival(self) -> np.ndarray:
        return self.screen_counts / self.trials

    @property
    def screen_confidence(self) -> np.ndarray:
        s = self.screen_survival
        return np.sqrt(s * (1 - s) / self.trials)


def cluster_size_trials(n: int, p: float, trials: int, seed: int, workers: Optional[int] = None):
    """Per-trial (centre cluster size, largest cluster size) on an n x n lattice."""
    centre = (n // 2, n // 2)

    def one(t):
        lab = label_clusters(BinaryImage(_lattice_bits(n, p, trial_seed(seed, t))))
        cid = lab.labels[centre]
        return (int(lab.cluster_sizes[cid]) if cid else 0), lab.largest_size

    out = np.array(_run_trials(one, trials, workers), dtype=np.int64).reshape(trials, 2)
    return out[:, 0], out[:, 1]


def _weighted_line(x, y, w):
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    ss_res = (w * (y - intercept - slope * x) ** 2).sum()
    ss_tot = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, r2


def estimate_cluster_tail(
    n: int,
    p: float,
    trials: int,
    sizes: Sequence[int],
    seed: int,
    fit_sizes: Optional[tuple] = None,
    p_c_site: float = P_C_SITE,
    min_successes: int = 5,
    workers: Optional[int] = None,
) -> TailEstimate:
    """Estimate cluster-size survival and fit its exponential decay rate.

    The fit is weighted least squares on ln-survival against size, weights
    being inverse delta-method variances ``k / (1 - phat)`` of ln(phat).
    Points with fewer than ``min_successes`` hits, or outside the inclusive
    ``fit_sizes`` range, are left out.
    """
    _check_p(p)
    if p >= p_c_site:
        raise InvalidRegimeError(f"p={p} is not subcritical (p_c={p_c_site})")
    _check_trials(trials)
    sizes = np.asarray(sorted(set(int(s) for s in sizes)), dtype=np.int64)
    if sizes.size == 0 or sizes[0] < 1:
        raise InvalidArgumentError("sizes must be positive integers")
    origin, screen = cluster_size_trials(n, p, trials, seed, workers)
    origin_counts = (origin[None, :] >= sizes[:, None]).sum(axis=1)
    screen_counts = (screen[None, :] >= sizes[:, None]).sum(axis=1)

    mask = origin_counts >= min_successes
    if fit_sizes is not None:
        mask &= (sizes >= fit_sizes[0]) & (sizes <= fit_sizes[1])
    slope = intercept = r2 = math.nan
    if mask.sum() >= 2:
        k = origin_counts[mask].astype(float)
        phat = k / trials
        w = k / np.maximum(1.0 - phat, 1.0 / trials)
        slope, intercept, r2 = _weighted_line(sizes[mask].astype(float), np.log(phat), w)
    else:
        warnings.warn("fewer than two usable survival points; decay rate not fitted")
    rate = max(0.0, -slope) if math.isfinite(slope) else math.nan
    return TailEstimate(
        thresholds=sizes,
        origin_counts=origin_counts,
        screen_counts=screen_counts,
        trials=trials,
        fitted_rate=rate,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        fit_mask=mask,
        n=n,
        p=p,
    )


# -- crossings ------------------------------------------------------------


def left_right_crossing(grid: BinaryImage) -> bool:
    """True when an open path joins the left column to the right column."""
    lab = label_clusters(grid)
    left = set(np.unique(lab.labels[:, 0]).tolist()) - {0}
    return bool(left.intersection(lab.labels[:, -1].tolist()))


def max_disjoint_crossings(grid: BinaryImage) -> int:
    """Maximum number of vertex-disjoint open left-right crossings.

    Max flow with unit vertex capacities (each site split into an in/out
    pair) from a source feeding the left column to a sink draining the
    right column.
    """
    bits = grid.bits.astype(bool)
    h, w = bits.shape
    m = h * w
    idx = np.arange(m).reshape(h, w)
    src, dst = [], []
    open_sites = idx[bits]
    src.append(2 * open_sites)
    dst.append(2 * open_sites + 1)
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        both = bits.ravel()[a] & bits.ravel()[b]
        u, v = a[both], b[both]
        src += [2 * u + 1, 2 * v + 1]
        dst += [2 * v, 2 * u]
    source, sink = 2 * m, 2 * m + 1
    left = idx[:, 0][bits[:, 0]]
    right = idx[:, -1][bits[:, -1]]
    if left.size == 0 or right.size == 0:
        return 0
    src += [np.full(left.size, source), 2 * right + 1]
    dst += [2 * left, np.full(right.size, sink)]
    rows = np.concatenate(src)
    cols = np.concatenate(dst)
    cap = csr_matrix((np.ones(rows.size, dtype=np.int32), (rows, cols)), shape=(2 * m + 2, 2 * m + 2))
    return int(maximum_flow(cap, source, sink, method="dinic").flow_value)


@dataclass(frozen=True)
class CrossingStats:
    n: int
    p: float
    crossing_rate: float
    disjoint_count_mean: float
    disjoint_count_min: int
    trials: int
    crossings: np.ndarray = field(repr=False, compare=False)
    disjoint_counts: np.ndarray = field(repr=False, compare=False)


def estimate_crossings(
    n: int,
    p: float,
    trials: int,
    seed: int,
    p_c_site: float = P_C_SITE,
    workers: Optional[int] = None,
) -> CrossingStats:
    _check_p(p)
    if p <= p_c_site:
        raise InvalidRegimeError(f"p={p} is not supercritical (p_c={p_c_site})")
    _check_trials(trials)

    def one(t):
        grid = BinaryImage(_lattice_bits(n, p, trial_seed(seed, t)))
        crossed = left_right_crossing(grid)
        return crossed, (max_disjoint_crossings(grid) if crossed else 0)

    res = _run_trials(one, trials, workers)
    crossed = np.array([r[0] for r in res], dtype=bool)
    counts = np.array([r[1] for r in res], dtype=np.int64)
    return CrossingStats(
        n=n,
        p=p,
        crossing_rate=float(crossed.mean()),
        disjoint_count_mean=float(counts.mean()),
        disjoint_count_min=int(counts.min()),
        trials=trials,
        crossings=crossed,
        disjoint_counts=counts,
    )


def _crossing_rate_any_regime(n, p, trials, seed, workers=None) -> float:
    """Crossing frequency without the supercritical precondition (sanity checks)."""
    res = _run_trials(
        lambda t: left_right_crossing(BinaryImage(_lattice_bits(n, p, trial_seed(seed, t)))),
        trials,
        workers,
    )
    return float(np.mean(res))


# -- detector error rates -------------------------------------------------


@dataclass(frozen=True)
class CurveRow:
    phi: int
    trials: int
    detections: int
    rate: float
    ci_low: float
    ci_high: float


def _truth(n: int, truth_side: int) -> TrueImage:
    return TrueImage.blank(n) if truth_side == 0 else TrueImage.centered_square(n, truth_side)


def fpr_power_curve(
    n: int,
    sigma: float,
    truth_side: int,
    phis: Sequence[int],
    trials: int,
    seed: int,
    threshold: ThresholdConfig = ThresholdConfig(),
    model: Optional[NoiseModel] = None,
    workers: Optional[int] = None,
) -> list:
    """Empirical detection rates per phi.

    ``truth_side == 0`` gives the false-detection rate on pure noise;
    otherwise the power against a centred black square of that side. All
    phis see the same seeded images.
    """
    _check_trials(trials)
    model = model or NoiseModel.gaussian(sigma)
    truth = _truth(n, truth_side)
    cfgs = [DetectionConfig(model, threshold, phi=int(phi)) for phi in phis]

    def one(t):
        img = synthesize(truth, model, trial_seed(seed, t))
        return [detect(img, cfg).detected for cfg in cfgs]

    hits = np.array(_run_trials(one, trials, workers), dtype=bool).reshape(trials, len(cfgs))
    rows = []
    for j, phi in enumerate(phis):
        k = int(hits[:, j].sum())
        lo, hi = wilson_interval(k, trials)
        rows.append(CurveRow(int(phi), trials, k, k / trials, lo, hi))
    return rows


@dataclass(frozen=True)
class CalibrationResult:
    phi: int
    detections: int
    trials: int
    fpr: float
    fpr_upper: float
    fallback: bool


def calibrate_phi(
    n: int,
    sigma: float,
    alpha: float,
    trials: int,
    seed: int,
    threshold: ThresholdConfig = ThresholdConfig(),
    model: Optional[NoiseModel] = None,
    workers: Optional[int] = None,
) -> CalibrationResult:
    """Smallest phi whose upper 95% Wilson bound on the false-detection rate is <= alpha.

    Pure-noise screens are labeled once; a detection at phi happens iff the
    largest cluster has at least phi pixels, so the rate is monotone in phi
    and a doubling-then-bisection search finds the exact smallest phi.
    When even phi = n fails, n is returned with ``fallback`` set.
    """
    _check_trials(trials)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    model = model or NoiseModel.gaussian(sigma)
    theta = select_theta(model, threshold).theta
    truth = TrueImage.blank(n)
    largest = np.array(
        _run_trials(
            lambda t: label_clusters(apply_threshold(synthesize(truth, model, trial_seed(seed, t)), theta)).largest_size,
            trials,
            workers,
        ),
        dtype=np.int64,
    )

    def upper(phi):
        return wilson_interval(int((largest >= phi).sum()), trials)[1]

    def result(phi, fallback=False):
        k = int((largest >= phi).sum())
        return CalibrationResult(phi, k, trials, k / trials, wilson_interval(k, trials)[1], fallback)

    lo_fail, hi = 0, 1
    while hi < n and upper(hi) > alpha:
        lo_fail, hi = hi, min(2 * hi, n)
    if upper(hi) > alpha:
        warnings.warn(f"no phi <= {n} meets alpha={alpha}; falling back to phi={n}")
        return result(n, fallback=True)
    while hi - lo_fail > 1:
        mid = (lo_fail + hi) // 2
        if upper(mid) <= alpha:
            hi = mid
        else:
            lo_fail = mid
    return result(hi)
