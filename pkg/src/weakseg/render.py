"""Perspective rendering with semantic fusion, plus the direct-projection
baseline.

Fusion resolves point collisions per pixel: the class distributions of all
contributing points are multiplied and renormalized. Sums of log
probabilities are accumulated in ascending point order, so the result is
identical however the hits are permuted.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .core import IGNORE_ID, LabelMap2D
from .geometry import PixelHit

PROB_FLOOR = 1e-30  # guards log of an all-zero class column


def _hit_arrays(hits: Sequence[PixelHit]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    pt = np.fromiter((h.point_index for h in hits), dtype=np.int64, count=len(hits))
    u = np.fromiter((h.u for h in hits), dtype=np.int64, count=len(hits))
    v = np.fromiter((h.v for h in hits), dtype=np.int64, count=len(hits))
    return pt, u, v


@dataclass(frozen=True)
class FusedGrid:
    """Per-pixel fused class distributions.

    probs: (H, W, C); rows of touched pixels sum to 1, untouched pixels are
    all-zero and flagged off in `filled`. contributors maps (v, u) to the
    ascending point indices that landed there.
    """

    probs: np.ndarray
    filled: np.ndarray
    contributors: Dict[Tuple[int, int], np.ndarray]

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]


def fuse(probs: np.ndarray, hits: Sequence[PixelHit], height: int,
         width: int) -> FusedGrid:
    """Multiply contributor distributions per pixel and renormalize.

    probs rows (indexed by hit.point_index) must sum to 1. Computation runs
    in log space with a 1e-30 floor.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n_classes = probs.shape[1]
    grid = np.zeros((height, width, n_classes), dtype=np.float64)
    filled = np.zeros((height, width), dtype=bool)
    contributors: Dict[Tuple[int, int], np.ndarray] = {}
    if not hits:
        return FusedGrid(grid, filled, contributors)

    pt, u, v = _hit_arrays(hits)
    order = np.argsort(pt, kind="stable")       # ascending point order
    pt, u, v = pt[order], u[order], v[order]
    bins = v * width + u

    logp = np.log(np.clip(probs[pt], PROB_FLOOR, 1.0))
    pooled = np.zeros((height * width, n_classes), dtype=np.float64)
    np.add.at(pooled, bins, logp)
    counts = np.bincount(bins, minlength=height * width)
    touched = np.nonzero(counts)[0]

    shifted = pooled[touched] - pooled[touched].max(axis=1, keepdims=True)
    q = np.exp(shifted)
    q /= q.sum(axis=1, keepdims=True)
    grid.reshape(-1, n_classes)[touched] = q
    filled.reshape(-1)[touched] = True

    for b in np.unique(bins):
        contributors[(int(b // width), int(b % width))] = pt[bins == b]
    return FusedGrid(grid, filled, contributors)


def render_labels(grid: FusedGrid) -> LabelMap2D:
    """Argmax class per fused pixel (ties -> lowest id); empty -> ignore."""
    labels = np.full((grid.height, grid.width), IGNORE_ID, dtype=np.int64)
    labels[grid.filled] = np.argmax(grid.probs[grid.filled], axis=1)
    return LabelMap2D(labels, IGNORE_ID)


def direct_project(probs: np.ndarray, hits: Sequence[PixelHit], height: int,
                   width: int) -> LabelMap2D:
    """Ablation baseline: no fusion, no depth test. Writing proceeds in
    ascending point-index order and the last write per pixel wins."""
    labels = np.full((height, width), IGNORE_ID, dtype=np.int64)
    if hits:
        pt, u, v = _hit_arrays(hits)
        order = np.argsort(pt, kind="stable")
        pt, u, v = pt[order], u[order], v[order]
        cls = np.argmax(np.asarray(probs)[pt], axis=1)
        labels[v, u] = cls                       # duplicate pixels: last wins
    return LabelMap2D(labels, IGNORE_ID)


def fused_point_probs(probs: Tensor, hits: Sequence[PixelHit], height: int,
                      width: int) -> Tensor:
    """Differentiable fusion, reported per point.

    Returns an (N, C) tensor in which the row of every hit point is replaced
    by its pixel's fused distribution; rows of points without a hit become
    uniform (they carry no supervision). Gradients flow back to every
    contributor of a pixel through the log-product.
    """
    n = probs.shape[0]
    dummy = height * width                       # extra all-zero bin
    bin_of_point = np.full(n, dummy, dtype=np.int64)
    if hits:
        pt, u, v = _hit_arrays(hits)
        order = np.argsort(pt, kind="stable")
        pt, u, v = pt[order], u[order], v[order]
        logp = ad.log(ad.clip(ad.gather_rows(probs, pt), PROB_FLOOR, 1.0))
        pooled = ad.segment_sum(logp, v * width + u, dummy + 1)
        bin_of_point[pt] = v * width + u
    else:
        pooled = Tensor(np.zeros((dummy + 1, probs.shape[1]), dtype=probs.dtype))
    return ad.softmax_rows(ad.gather_rows(pooled, bin_of_point))
