"""Pinhole camera math: world<->camera transforms, pixel projection and
frustum truncation of scene clouds.

Pixel binning uses floor(), treating each pixel as a grid cell; points with
camera depth <= Z_NEAR project nowhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import EmptyCloudError, PointCloud, Viewpoint

Z_NEAR = 1e-4  # meters; guards division by near-zero depth


@dataclass(frozen=True)
class CameraPoint:
    """A point expressed in the camera frame; depth is its z component."""

    xyz_cam: np.ndarray

    @property
    def depth(self) -> float:
        return float(self.xyz_cam[2])


@dataclass(frozen=True)
class PixelHit:
    """One point landing on one pixel."""

    point_index: int
    u: int
    v: int
    depth: float


def _apply_pose(rot, t, x, y, z):
    # explicit multiply-add chain so scalar and array paths are bit-identical
    xc = rot[0, 0] * x + rot[0, 1] * y + rot[0, 2] * z + t[0]
    yc = rot[1, 0] * x + rot[1, 1] * y + rot[1, 2] * z + t[1]
    zc = rot[2, 0] * x + rot[2, 1] * y + rot[2, 2] * z + t[2]
    return xc, yc, zc


def world_to_camera(p_w: np.ndarray, view: Viewpoint) -> CameraPoint:
    p = np.asarray(p_w, dtype=np.float64).reshape(3)
    xc, yc, zc = _apply_pose(view.rotation, view.translation, p[0], p[1], p[2])
    return CameraPoint(np.array([xc, yc, zc]))


def camera_to_world(p_c: CameraPoint, view: Viewpoint) -> np.ndarray:
    return view.rotation.T @ (p_c.xyz_cam - view.translation)


def transform_points(positions: np.ndarray, view: Viewpoint) -> np.ndarray:
    """Vectorized world -> camera transform for an (N, 3) array."""
    p = np.asarray(positions, dtype=np.float64)
    xc, yc, zc = _apply_pose(view.rotation, view.translation,
                             p[:, 0], p[:, 1], p[:, 2])
    return np.stack([xc, yc, zc], axis=1)


def camera_to_pixel(p_c: CameraPoint, view: Viewpoint) -> Optional[Tuple[int, int]]:
    """Pixel (u, v) hit by a camera-frame point, or None if off-image."""
    x, y, z = (float(v) for v in p_c.xyz_cam)
    if z <= Z_NEAR:
        return None
    u = int(np.floor(view.fx * x / z + view.cx))
    v = int(np.floor(view.fy * y / z + view.cy))
    if 0 <= u < view.width and 0 <= v < view.height:
        return (u, v)
    return None


def project_points(positions: np.ndarray, view: Viewpoint):
    """Project an (N, 3) world array to pixels.

    Returns (valid, u, v, depth) where `valid` marks points in front of the
    camera and inside the image; u/v/depth are only meaningful where valid.
    Matches camera_to_pixel exactly, point by point.
    """
    cam = transform_points(np.asarray(positions, dtype=np.float64), view)
    z = cam[:, 2]
    front = z > Z_NEAR
    zsafe = np.where(front, z, 1.0)
    u = np.floor(view.fx * cam[:, 0] / zsafe + view.cx).astype(np.int64)
    v = np.floor(view.fy * cam[:, 1] / zsafe + view.cy).astype(np.int64)
    valid = front & (u >= 0) & (u < view.width) & (v >= 0) & (v < view.height)
    return valid, u, v, z


def pixel_hits(cloud: PointCloud, view: Viewpoint) -> list:
    """PixelHit records for every point of `cloud` that lands on the image."""
    valid, u, v, z = project_points(cloud.positions, view)
    idx = np.nonzero(valid)[0]
    return [PixelHit(int(i), int(u[i]), int(v[i]), float(z[i])) for i in idx]


def truncate(scene: PointCloud, view: Viewpoint) -> Tuple[PointCloud, np.ndarray]:
    """Frustum truncation: keep exactly the points that project onto a pixel.

    Returns the truncated cloud (ascending original index) and the index map
    back into `scene`. Raises EmptyCloudError when no point survives.
    """
    valid, _, _, _ = project_points(scene.positions, view)
    idx = np.nonzero(valid)[0]
    if idx.size == 0:
        raise EmptyCloudError("no scene point falls inside the view frustum")
    return scene.take(idx), idx


def resample(cloud: PointCloud, n_target: int, seed: int) -> PointCloud:
    """Fixed-size resampling: subsample without replacement when the cloud is
    larger than `n_target`, sample with replacement when smaller."""
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    n = cloud.n_points
    if n == n_target:
        return cloud
    rng = np.random.default_rng(seed)
    if n > n_target:
        idx = rng.choice(n, size=n_target, replace=False)
    else:
        idx = rng.choice(n, size=n_target, replace=True)
    return cloud.take(np.sort(idx))
