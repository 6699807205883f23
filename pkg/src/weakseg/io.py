"""Bit-exact text formats for point clouds, viewpoints and label maps.

Floats are written with ``repr`` (shortest decimal that round-trips a
float64), so save -> load is the identity for every container.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core import (IGNORE_ID, MAX_CLASSES, DataError, LabelMap2D, ParseError,
                   PointCloud, Viewpoint)

# column blocks, in file order
_SCHEMAS = {
    "xyzrgb": (False, False),
    "xyzrgbl": (False, True),
    "xyzrgbuvw": (True, False),
    "xyzrgbuvwl": (True, True),
}


def _schema_of(cloud: PointCloud) -> str:
    s = "xyzrgbuvw" if cloud.norm_coords is not None else "xyzrgb"
    if cloud.labels3d is not None:
        s += "l"
    if cloud.vis_labels is not None:
        s += "v"
    return s


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_point_cloud(cloud: PointCloud, path) -> None:
    schema = _schema_of(cloud)
    cols = [cloud.positions, cloud.colors]
    if cloud.norm_coords is not None:
        cols.append(cloud.norm_coords)
    with open(path, "w") as f:
        f.write(f"pc cols={schema} n={cloud.n_points}\n")
        for i in range(cloud.n_points):
            parts = [_fmt_row(c[i]) for c in cols]
            if cloud.labels3d is not None:
                parts.append(str(int(cloud.labels3d[i])))
            if cloud.vis_labels is not None:
                parts.append(str(int(cloud.vis_labels[i])))
            f.write(" ".join(parts) + "\n")


def load_point_cloud(path) -> PointCloud:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    head = lines[0].split()
    if len(head) != 3 or head[0] != "pc" or not head[1].startswith("cols=") \
            or not head[2].startswith("n="):
        raise ParseError("expected header 'pc cols=<schema> n=<N>'", path, 1)
    schema = head[1][5:]
    has_vis = schema.endswith("v") and schema not in _SCHEMAS
    base = schema[:-1] if has_vis else schema
    if base not in _SCHEMAS:
        raise ParseError(f"unknown schema '{schema}'", path, 1)
    has_uvw, has_label = _SCHEMAS[base]
    try:
        n = int(head[2][2:])
    except ValueError:
        raise ParseError("point count is not an integer", path, 1)
    if n < 1:
        raise ParseError("point count must be >= 1", path, 1)
    width = 6 + 3 * has_uvw + has_label + has_vis
    if len(lines) - 1 < n:
        raise ParseError(f"expected {n} data rows, found {len(lines) - 1}", path, 1)

    rows = np.empty((n, width), dtype=np.float64)
    for i in range(n):
        lineno = i + 2
        fields = lines[i + 1].split()
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, got {len(fields)}", path, lineno)
        try:
            rows[i] = [float(v) for v in fields]
        except ValueError:
            raise ParseError("non-numeric field", path, lineno)
        if not (0.0 <= rows[i, 3:6].min() and rows[i, 3:6].max() <= 1.0):
            raise ParseError("color component outside [0, 1]", path, lineno)
        if has_uvw and not (0.0 <= rows[i, 6:9].min() and rows[i, 6:9].max() <= 1.0):
            raise ParseError("normalized coordinate outside [0, 1]", path, lineno)

    col = 6
    norm_coords = None
    if has_uvw:
        norm_coords = rows[:, col:col + 3]
        col += 3
    labels = None
    if has_label:
        labels = rows[:, col].astype(np.int64)
        if not np.array_equal(labels, rows[:, col]):
            bad = int(np.nonzero(labels != rows[:, col])[0][0])
            raise ParseError("non-integer label", path, bad + 2)
        col += 1
    vis = None
    if has_vis:
        vis = rows[:, col].astype(np.int64)
    try:
        return PointCloud(rows[:, :3], rows[:, 3:6], norm_coords, labels, vis)
    except DataError as e:
        raise ParseError(str(e), path, 2)


def save_viewpoint(view: Viewpoint, path) -> None:
    with open(path, "w") as f:
        f.write("cam\n")
        for row in view.rotation:
            f.write(_fmt_row(row) + "\n")
        f.write(_fmt_row(view.translation) + "\n")
        f.write(f"{view.fx!r} {view.fy!r} {view.cx!r} {view.cy!r} "
                f"{view.width} {view.height}\n")


def load_viewpoint(path) -> Viewpoint:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "cam":
        raise ParseError("expected 'cam' header", path, 1)
    tokens = " ".join(lines[1:]).split()
    if len(tokens) != 18:
        raise ParseError(f"expected 18 values after header, got {len(tokens)}", path, 2)
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise ParseError("non-numeric field", path, 2)
    rot = np.array(vals[:9]).reshape(3, 3)
    t = np.array(vals[9:12])
    fx, fy, cx, cy = vals[12:16]
    w, h = int(vals[16]), int(vals[17])
    try:
        return Viewpoint(rot, t, fx, fy, cx, cy, w, h)
    except DataError as e:
        raise ParseError(str(e), path, 2)


def save_label_map(lmap: LabelMap2D, path, n_classes: Optional[int] = None) -> None:
    cap = n_classes if n_classes is not None else MAX_CLASSES
    labeled = lmap.grid[lmap.grid != lmap.ignore_id]
    if labeled.size and labeled.max() >= cap:
        raise DataError(f"label id {labeled.max()} >= class count {cap}")
    with open(path, "w") as f:
        f.write(f"lm w={lmap.width} h={lmap.height} ignore={lmap.ignore_id}\n")
        for row in lmap.grid:
            f.write(" ".join(str(int(v)) for v in row) + "\n")


def load_label_map(path) -> LabelMap2D:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "lm":
        raise ParseError("expected header 'lm w=<W> h=<H> ignore=<id>'", path, 1)
    try:
        w = int(head[1].split("=", 1)[1])
        h = int(head[2].split("=", 1)[1])
        ignore = int(head[3].split("=", 1)[1])
    except (IndexError, ValueError):
        raise ParseError("malformed header fields", path, 1)
    if len(lines) - 1 < h:
        raise ParseError(f"expected {h} rows, found {len(lines) - 1}", path, 1)
    grid = np.empty((h, w), dtype=np.int64)
    for r in range(h):
        fields = lines[r + 1].split()
        if len(fields) != w:
            raise ParseError(f"expected {w} values, got {len(fields)}", path, r + 2)
        try:
            grid[r] = [int(v) for v in fields]
        except ValueError:
            raise ParseError("non-integer label", path, r + 2)
    try:
        return LabelMap2D(grid, ignore)
    except DataError as e:
        raise ParseError(str(e), path, 2)


# distinct colors for rendered label maps (class id -> RGB byte triple)
PALETTE = np.array([
    (166, 126, 86), (222, 218, 208), (242, 242, 235), (204, 60, 60),
    (60, 120, 204), (80, 170, 90), (230, 180, 60), (150, 90, 190),
    (60, 190, 190), (220, 120, 180), (120, 120, 120), (90, 60, 30),
    (250, 240, 120), (30, 90, 60), (190, 220, 250), (140, 20, 80),
    (20, 40, 140), (240, 150, 100), (100, 200, 40), (40, 40, 40),
], dtype=np.uint8)


def save_label_ppm(lmap: LabelMap2D, path) -> None:
    """Color rendering of a label map (binary PPM, fixed palette)."""
    img = np.zeros((lmap.height, lmap.width, 3), dtype=np.uint8)
    labeled = lmap.grid != lmap.ignore_id
    img[labeled] = PALETTE[lmap.grid[labeled] % len(PALETTE)]
    with open(path, "wb") as f:
        f.write(f"P6\n{lmap.width} {lmap.height}\n255\n".encode())
        f.write(img.tobytes())
