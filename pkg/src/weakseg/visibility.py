"""Depth-buffer distance filter: oracle visibility labels for a truncated
cloud under its viewpoint.

A point is visible when its depth exceeds the minimum depth over the
window x window pixel neighborhood of its own pixel by at most tau. Per
pixel the nearest hit is therefore always visible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError, EmptyCloudError, PointCloud, Viewpoint
from .geometry import project_points

DEFAULT_TAU = 0.05     # meters
DEFAULT_WINDOW = 3     # pixels, odd


@dataclass(frozen=True)
class VisibilityMask:
    """Per-point binary visibility (1 = visible) and where it came from."""

    flags: np.ndarray
    source: str = "oracle"  # oracle | predicted

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=np.int64).reshape(-1)
        if not np.isin(flags, (0, 1)).all():
            raise DataError("visibility flags must be binary")
        if self.source not in ("oracle", "predicted"):
            raise DataError(f"unknown mask source '{self.source}'")
        flags = np.ascontiguousarray(flags)
        flags.flags.writeable = False
        object.__setattr__(self, "flags", flags)


def _window_min(buf: np.ndarray, window: int) -> np.ndarray:
    """Minimum over the window x window neighborhood of each cell; cells
    outside the image act as +inf."""
    if window == 1:
        return buf
    r = window // 2
    h, w = buf.shape
    padded = np.full((h + 2 * r, w + 2 * r), np.inf)
    padded[r:r + h, r:r + w] = buf
    out = np.full_like(buf, np.inf)
    for dv in range(window):
        for du in range(window):
            np.minimum(out, padded[dv:dv + h, du:du + w], out=out)
    return out


def distance_filter(cloud: PointCloud, view: Viewpoint,
                    tau: float = DEFAULT_TAU,
                    window: int = DEFAULT_WINDOW) -> VisibilityMask:
    """Oracle visibility labels via a per-pixel depth buffer.

    `cloud` must already be truncated to `view`; points that project nowhere
    are labeled occluded. tau > 0 meters; window is an odd pixel count.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    valid, u, v, depth = project_points(cloud.positions, view)

    buf = np.full((view.height, view.width), np.inf)
    np.minimum.at(buf, (v[valid], u[valid]), depth[valid])
    near = _window_min(buf, window)

    flags = np.zeros(cloud.n_points, dtype=np.int64)
    flags[valid] = depth[valid] <= near[v[valid], u[valid]] + tau
    return VisibilityMask(flags, source="oracle")


def apply_mask(cloud: PointCloud, mask: VisibilityMask) -> PointCloud:
    """Retain exactly the flagged points, ascending order."""
    if mask.flags.shape[0] != cloud.n_points:
        raise DataError(f"mask length {mask.flags.shape[0]} != cloud size "
                        f"{cloud.n_points}")
    idx = np.nonzero(mask.flags)[0]
    if idx.size == 0:
        raise EmptyCloudError("mask removes every point")
    return cloud.take(idx)
