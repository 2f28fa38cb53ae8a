"""Black-cluster labeling on the graph of a thresholded picture.

Vertices are pixels; two black pixels are joined when they share a side
(4-connectivity). Clusters are found with an explicit-stack depth-first
search so megapixel images never hit recursion limits.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .errors import InvalidArgumentError

__all__ = ["BinaryImage", "ClusterLabeling", "label_clusters", "max_cluster_size", "search_until", "DEFAULT_NEIGHBORS"]

# (drow, dcol): up, left, down, right
DEFAULT_NEIGHBORS = ((-1, 0), (0, -1), (1, 0), (0, 1))


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Thresholded picture, ``bits[row, col]`` in {0, 1}."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.size == 0:
            raise InvalidArgumentError(f"expected a non-empty 2-D array, got shape {b.shape}")
        if b.dtype != np.bool_ and not np.all((b == 0) | (b == 1)):
            raise InvalidArgumentError("bits must be 0 or 1")
        b = np.ascontiguousarray(b, dtype=np.uint8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


@numba.njit(cache=True, nogil=True)
def _dfs_label(bits, stop_at, dr, dc):
    h, w = bits.shape
    n_black = 0
    for r in range(h):
        for c in range(w):
            n_black += bits[r, c]
    labels = np.zeros((h, w), dtype=np.int32)
    # order[k] is the flat index of the k-th labeled pixel; clusters are
    # contiguous runs in it
    order = np.empty(n_black, dtype=np.int64)
    sizes = np.zeros(n_black + 1, dtype=np.int64)
    stack = np.empty(n_black, dtype=np.int64)
    n_labeled = 0
    current = 0
    truncated = False
    for r0 in range(h):
        for c0 in range(w):
            if bits[r0, c0] == 0 or labels[r0, c0] != 0:
                continue
            current += 1
            labels[r0, c0] = current
            seed = r0 * w + c0
            order[n_labeled] = seed
            n_labeled += 1
            sizes[current] = 1
            if stop_at > 0 and sizes[current] >= stop_at:
                truncated = True
                break
            top = 0
            stack[top] = seed
            top += 1
            while top > 0 and not truncated:
                top -= 1
                p = stack[top]
                r = p // w
                c = p - r * w
                for k in range(4):
                    rr = r + dr[k]
                    cc = c + dc[k]
                    if rr < 0 or rr >= h or cc < 0 or cc >= w:
                        continue
                    if bits[rr, cc] == 0 or labels[rr, cc] != 0:
                        continue
                    labels[rr, cc] = current
                    q = rr * w + cc
                    order[n_labeled] = q
                    n_labeled += 1
                    sizes[current] += 1
                    if stop_at > 0 and sizes[current] >= stop_at:
                        truncated = True
                        break
                    stack[top] = q
                    top += 1
            if truncated:
                break
        if truncated:
            break
    return labels, sizes[: current + 1], order[:n_labeled], truncated


@numba.njit(cache=True, nogil=True)
def _search_until(mask, stop_at, dr, dc):
    # Same traversal as _dfs_label, but marks visited pixels in place (1 -> 2)
    # instead of keeping a label array. Returns the largest size seen, whether
    # the search stopped at stop_at, and the pixels of the stopping cluster.
    h, w = mask.shape
    n_black = 0
    for r in range(h):
        for c in range(w):
            n_black += mask[r, c]
    order = np.empty(n_black, dtype=np.int64)
    stack = np.empty(n_black, dtype=np.int64)
    largest = 0
    for r0 in range(h):
        for c0 in range(w):
            if mask[r0, c0] != 1:
                continue
            mask[r0, c0] = 2
            seed = r0 * w + c0
            order[0] = seed
            size = 1
            if size >= stop_at:
                return size, True, order[:size]
            top = 0
            stack[top] = seed
            top += 1
            while top > 0:
                top -= 1
                p = stack[top]
                r = p // w
                c = p - r * w
                for k in range(4):
                    rr = r + dr[k]
                    cc = c + dc[k]
                    if rr < 0 or rr >= h or cc < 0 or cc >= w or mask[rr, cc] != 1:
                        continue
                    mask[rr, cc] = 2
                    q = rr * w + cc
                    order[size] = q
                    size += 1
                    if size >= stop_at:
                        return size, True, order[:size]
                    stack[top] = q
                    top += 1
            if size > largest:
                largest = size
    return largest, False, order[:0]


def search_until(mask: np.ndarray, stop_at: int, neighbors: Sequence = DEFAULT_NEIGHBORS):
    """Cheapest form of ``label_clusters(..., stop_at)`` for a yes/no answer.

    ``mask`` is a writable C-contiguous uint8 array of 0/1 and is consumed
    (visited pixels become 2). Returns ``(largest_size, truncated, pixels)``
    where ``pixels`` lists the stopping cluster in discovery order, or is
    empty when no cluster reached ``stop_at``. Discovery order, sizes and
    pixels agree with :func:`label_clusters`.
    """
    if stop_at < 1:
        raise InvalidArgumentError(f"stop_at must be >= 1, got {stop_at}")
    nb = np.asarray(neighbors, dtype=np.int64)
    size, truncated, flat = _search_until(mask, int(stop_at), nb[:, 0].copy(), nb[:, 1].copy())
    w = mask.shape[1]
    return int(size), bool(truncated), np.stack([flat // w, flat % w], axis=1)


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Partition of the black pixels into 4-connected clusters.

    ``labels`` holds 0 for white (and for black pixels never reached when
    the search stopped early) and the cluster id otherwise. ``cluster_sizes``
    is indexed by cluster id, entry 0 unused.
    """

    labels: np.ndarray
    cluster_sizes: np.ndarray
    largest_cluster_id: int
    truncated: bool
    _order: np.ndarray = field(repr=False)
    _starts: np.ndarray = field(repr=False)

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes) - 1

    @property
    def largest_size(self) -> int:
        return int(self.cluster_sizes[self.largest_cluster_id]) if self.largest_cluster_id else 0

    def pixels(self, cluster_id: int) -> np.ndarray:
        """(row, col) coordinates of one cluster in discovery order, shape (size, 2)."""
        if not 1 <= cluster_id <= self.n_clusters:
            raise InvalidArgumentError(f"no cluster with id {cluster_id}")
        flat = self._order[self._starts[cluster_id - 1]:self._starts[cluster_id]]
        w = self.labels.shape[1]
        return np.stack([flat // w, flat % w], axis=1)

    @property
    def cluster_pixels(self) -> list:
        return [self.pixels(k) for k in range(1, self.n_clusters + 1)]


def label_clusters(
    img: BinaryImage,
    stop_at: Optional[int] = None,
    neighbors: Sequence = DEFAULT_NEIGHBORS,
) -> ClusterLabeling:
    """Label black clusters, seeding new clusters in row-major order.

    With ``stop_at`` the search halts the moment a cluster reaches that many
    pixels; the labeling is then marked ``truncated`` and
    ``largest_cluster_id`` points at the stopping cluster, which holds
    exactly the ``stop_at`` pixels visited so far.

    ``neighbors`` fixes the visit order of the four side neighbours; it
    changes discovery order but never the partition.
    """
    if stop_at is not None and stop_at < 1:
        raise InvalidArgumentError(f"stop_at must be >= 1, got {stop_at}")
    nb = np.asarray(neighbors, dtype=np.int64)
    if nb.shape != (4, 2) or {tuple(x) for x in nb.tolist()} != set(DEFAULT_NEIGHBORS):
        raise InvalidArgumentError("neighbors must be a permutation of the four side offsets")
    labels, sizes, order, truncated = _dfs_label(
        img.bits, 0 if stop_at is None else int(stop_at), nb[:, 0].copy(), nb[:, 1].copy()
    )
    starts = np.cumsum(sizes)
    if truncated:
        largest = len(sizes) - 1
    elif len(sizes) > 1:
        largest = int(np.argmax(sizes[1:])) + 1
    else:
        largest = 0
    labels.setflags(write=False)
    sizes.setflags(write=False)
    return ClusterLabeling(labels, sizes, largest, bool(truncated), order, starts)


def max_cluster_size(img: BinaryImage) -> int:
    """Size of the largest black cluster, 0 for an all-white image."""
    return label_clusters(img).largest_size
