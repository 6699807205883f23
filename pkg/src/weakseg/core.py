"""Domain records shared by every stage of the pipeline.

All containers are immutable after construction (their arrays are marked
read-only) and therefore safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

IGNORE_ID = 255
MAX_CLASSES = 255


class WeaksegError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(WeaksegError):
    """Malformed input file. Carries the offending 1-based line number."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        loc = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class ConfigError(WeaksegError):
    """Invalid configuration value or scene specification."""


class DataError(WeaksegError):
    """Data that is well-formed on disk but unusable (wrong shapes, ids...)."""


class EmptyCloudError(DataError):
    """Signals an empty frustum / all-occluded mask; callers skip the sample."""


class NumericalFault(WeaksegError):
    """Non-finite value produced during network evaluation or training."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PointCloud:
    """N points with world-frame positions, colors and optional attributes.

    positions: (N, 3) float, meters. colors: (N, 3) float in [0, 1].
    norm_coords: optional (N, 3) float in [0, 1] (scene-normalized coordinates).
    labels3d: optional (N,) int class ids. vis_labels: optional (N,) {0, 1}.
    """

    positions: np.ndarray
    colors: np.ndarray
    norm_coords: Optional[np.ndarray] = None
    labels3d: Optional[np.ndarray] = None
    vis_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        col = np.asarray(self.colors, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise DataError(f"positions must be (N>=1, 3), got {pos.shape}")
        if col.shape != pos.shape:
            raise DataError(f"colors shape {col.shape} != positions shape {pos.shape}")
        if col.min(initial=0.0) < 0.0 or col.max(initial=0.0) > 1.0:
            raise DataError("color components must lie in [0, 1]")
        object.__setattr__(self, "positions", _freeze(pos))
        object.__setattr__(self, "colors", _freeze(col))
        n = pos.shape[0]
        if self.norm_coords is not None:
            nc = np.asarray(self.norm_coords, dtype=np.float64)
            if nc.shape != (n, 3):
                raise DataError(f"norm_coords must be ({n}, 3), got {nc.shape}")
            if nc.min() < 0.0 or nc.max() > 1.0:
                raise DataError("norm_coords components must lie in [0, 1]")
            object.__setattr__(self, "norm_coords", _freeze(nc))
        if self.labels3d is not None:
            lab = np.asarray(self.labels3d, dtype=np.int64)
            if lab.shape != (n,):
                raise DataError(f"labels3d must have length {n}, got {lab.shape}")
            if lab.min() < 0 or lab.max() >= MAX_CLASSES:
                raise DataError("labels3d out of range [0, 255)")
            object.__setattr__(self, "labels3d", _freeze(lab))
        if self.vis_labels is not None:
            vis = np.asarray(self.vis_labels, dtype=np.int64)
            if vis.shape != (n,):
                raise DataError(f"vis_labels must have length {n}, got {vis.shape}")
            if not np.isin(vis, (0, 1)).all():
                raise DataError("vis_labels must be binary")
            object.__setattr__(self, "vis_labels", _freeze(vis))

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    def take(self, indices: np.ndarray) -> "PointCloud":
        """New cloud holding rows `indices` (in the given order)."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise EmptyCloudError("selection is empty")

        def pick(a):
            return None if a is None else a[idx]

        return PointCloud(
            positions=self.positions[idx],
            colors=self.colors[idx],
            norm_coords=pick(self.norm_coords),
            labels3d=pick(self.labels3d),
            vis_labels=pick(self.vis_labels),
        )

    def with_vis_labels(self, vis: np.ndarray) -> "PointCloud":
        return PointCloud(self.positions, self.colors, self.norm_coords,
                          self.labels3d, vis)


@dataclass(frozen=True)
class Viewpoint:
    """Extrinsic pose (world -> camera) plus pinhole intrinsics.

    x_cam = rotation @ x_world + translation; z_cam looks down the optical axis.
    """

    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise DataError(f"rotation must be 3x3, got {rot.shape}")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6):
            raise DataError("rotation is not orthonormal within 1e-6")
        if not np.isclose(np.linalg.det(rot), 1.0, atol=1e-6):
            raise DataError("rotation determinant must be +1")
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise DataError("principal point must lie inside the image")
        if self.width < 1 or self.height < 1:
            raise DataError("image dimensions must be positive")
        object.__setattr__(self, "rotation", _freeze(rot))
        object.__setattr__(self, "translation", _freeze(t))


@dataclass(frozen=True)
class LabelMap2D:
    """H x W grid of class ids; `ignore_id` marks unlabeled pixels."""

    grid: np.ndarray
    ignore_id: int = IGNORE_ID

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.int64)
        if g.ndim != 2:
            raise DataError(f"grid must be 2-D, got shape {g.shape}")
        labeled = g[g != self.ignore_id]
        if labeled.size and (labeled.min() < 0 or labeled.max() >= MAX_CLASSES):
            raise DataError("label ids out of range [0, 255)")
        object.__setattr__(self, "grid", _freeze(g))

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class names; ids are positions in the list."""

    names: tuple

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        if not 0 < len(names) <= MAX_CLASSES:
            raise ConfigError(f"need 1..{MAX_CLASSES} classes, got {len(names)}")
        if len(set(names)) != len(names):
            raise ConfigError("class names must be unique")
        object.__setattr__(self, "names", names)

    @property
    def n_classes(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class Sample:
    """One training unit: a truncated cloud, its viewpoint and 2D supervision."""

    cloud: PointCloud
    view: Viewpoint
    gt2d: LabelMap2D

    def __post_init__(self):
        if (self.gt2d.height, self.gt2d.width) != (self.view.height, self.view.width):
            raise DataError("gt2d dimensions must equal the viewpoint image size")


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """(N,) int ids -> (N, C) float rows with a single 1 per row."""
    lab = np.asarray(labels, dtype=np.int64).reshape(-1)
    if lab.size and (lab.min() < 0 or lab.max() >= n_classes):
        bad = lab[(lab < 0) | (lab >= n_classes)][0]
        raise DataError(f"label id {bad} outside [0, {n_classes})")
    out = np.zeros((lab.size, n_classes), dtype=np.float64)
    out[np.arange(lab.size), lab] = 1.0
    return out
