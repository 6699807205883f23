"""Dynamic K-NN graphs over feature space and edge-feature assembly.

Neighbor search is brute force over all pairs (desk scale, N <= 4096). The
selection is exact: ties in distance resolve to the lower point index and
the result is independent of batching. A fast inner-product pass shortlists
candidates per row; rows whose shortlist cannot be certified against the
floating-point error bound fall back to plain squared-difference distances
over the whole row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_K = 20

_EPS64 = np.finfo(np.float64).eps
_SHORTLIST_PAD = 8
_SLOW_BLOCK = 64


@dataclass(frozen=True)
class KnnGraph:
    """neighbors[i] holds the k nearest point indices to point i, nearest
    first, self excluded."""

    neighbors: np.ndarray
    k: int

    def __post_init__(self):
        nb = np.asarray(self.neighbors, dtype=np.int64)
        n = nb.shape[0]
        if nb.ndim != 2 or nb.shape[1] != self.k:
            raise ValueError(f"neighbors must be (N, {self.k}), got {nb.shape}")
        if nb.min(initial=0) < 0 or nb.max(initial=-1) >= n:
            raise ValueError("neighbor index out of range")
        if (nb == np.arange(n)[:, None]).any():
            raise ValueError("self loops are not allowed")
        nb = np.ascontiguousarray(nb)
        nb.flags.writeable = False
        object.__setattr__(self, "neighbors", nb)


def _exact_sqdist(x: np.ndarray, rows: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Squared distances x[rows[r]] -> x[cand[r, c]], shape (R, C)."""
    diff = x[cand] - x[rows][:, None, :]
    return (diff * diff).sum(axis=2)


def _k_smallest(d2: np.ndarray, cand: np.ndarray, k: int) -> np.ndarray:
    """Per row, the k candidates with lexicographically smallest
    (distance, index). `cand` must be ascending per row so that a stable
    sort on distance realizes the index tie rule."""
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(cand, order, axis=1)


def knn_graph(features: np.ndarray, k: int = DEFAULT_K) -> KnnGraph:
    """Exact k nearest neighbors of every row by Euclidean distance.

    Self excluded; ties broken toward the lower index. Requires N > k >= 1.
    """
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be (N, F), got shape {x.shape}")
    n, f = x.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        raise ValueError(f"need N > k, got N={n}, k={k}")

    neighbors = np.empty((n, k), dtype=np.int64)
    m = k + _SHORTLIST_PAD
    if m + 1 >= n:
        slow_rows = np.arange(n)
        cand = None
    else:
        sq = (x * x).sum(axis=1)
        approx = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.fill_diagonal(approx, np.inf)
        cand = np.sort(np.argpartition(approx, m - 1, axis=1)[:, :m], axis=1)
        d2c = np.take_along_axis(approx, cand, axis=1)
        kth_in = np.partition(d2c, k - 1, axis=1)[:, k - 1]
        min_out = np.partition(approx, m, axis=1)[:, m]
        eta = 32.0 * f * _EPS64 * (sq + sq.max() + 1.0)
        certified = kth_in < min_out - 2.0 * eta

        fast_rows = np.nonzero(certified)[0]
        slow_rows = np.nonzero(~certified)[0]
        if fast_rows.size:
            d2 = _exact_sqdist(x, fast_rows, cand[fast_rows])
            neighbors[fast_rows] = _k_smallest(d2, cand[fast_rows], k)

    for s in range(0, slow_rows.size, _SLOW_BLOCK):  # bound (B, N, F) temps
        blk = slow_rows[s:s + _SLOW_BLOCK]
        all_idx = np.broadcast_to(np.arange(n), (blk.size, n))
        d2 = _exact_sqdist(x, blk, all_idx)
        d2[np.arange(blk.size), blk] = np.inf
        neighbors[blk] = _k_smallest(d2, all_idx, k)

    return KnnGraph(neighbors, k)


def edge_features(features: np.ndarray, graph: KnnGraph) -> np.ndarray:
    """(N, K, 2F) edge features: concat(center, neighbor - center)."""
    x = np.asarray(features)
    if x.ndim != 2 or x.shape[0] != graph.neighbors.shape[0]:
        raise ValueError("features and graph disagree on N")
    nbr = x[graph.neighbors]                       # (N, K, F)
    center = np.broadcast_to(x[:, None, :], nbr.shape)
    return np.concatenate([center, nbr - center], axis=2)
