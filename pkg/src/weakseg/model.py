"""Graph-pyramid point network: a shared encoder built from dynamic edge
convolutions with two global pyramid features, plus a segmentation head and
a per-point visibility head consuming the same representation.

Layer plan (per point, N points, k neighbors):

    input (N, d_in) -> lift 64
    -> edge block 1 (64, 64) -> edge block 2 (64, 64)
    -> g1 = global max (64), concatenated per point
    -> edge block 3 (64)
    -> projector 1024 -> g2 = global max, concatenated per point
    -> [block3 out | g1 | g2]  (1152)
    -> seg head (512, 128, C) and visibility head (512, 128, 1)

Leaky rectifier (slope 0.2) everywhere except each head's final layer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .core import NumericalFault, ParseError
from .graph import knn_graph

ENCODER_WIDTH = 64
PROJECTOR_WIDTH = 1024
HEAD_WIDTHS = (512, 128)
LEAKY_SLOPE = 0.2

# block -> per-edge layer widths
_EDGE_BLOCKS = ((ENCODER_WIDTH, ENCODER_WIDTH),
                (ENCODER_WIDTH, ENCODER_WIDTH),
                (ENCODER_WIDTH,))

_CKPT_MAGIC = "gpfn-ckpt v1"


@dataclass
class GpfnParams:
    """Named parameter tensors plus the hyperparameters that fix all shapes."""

    d_in: int
    n_classes: int
    k: int
    tensors: Dict[str, Tensor]

    def names(self) -> List[str]:
        return list(self.tensors)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {n: t.data for n, t in self.tensors.items()}

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.tensors.values())).dtype


def _layer_shapes(d_in: int, n_classes: int) -> List[Tuple[str, int, int]]:
    shapes = [("lift", d_in, ENCODER_WIDTH)]
    width = ENCODER_WIDTH
    for b, block in enumerate(_EDGE_BLOCKS, start=1):
        if b == 3:
            width += ENCODER_WIDTH  # g1 concatenated before the last block
        fan_in = 2 * width
        for l, out in enumerate(block, start=1):
            shapes.append((f"ec{b}.l{l}", fan_in, out))
            fan_in = out
        width = block[-1]
    shapes.append(("proj", width, PROJECTOR_WIDTH))
    rep = width + ENCODER_WIDTH + PROJECTOR_WIDTH
    for head, final in (("seg", n_classes), ("vis", 1)):
        fan_in = rep
        for l, out in enumerate(HEAD_WIDTHS + (final,), start=1):
            shapes.append((f"{head}.l{l}", fan_in, out))
            fan_in = out
    return shapes


def init_params(d_in: int, n_classes: int, k: int = 20, seed: int = 0,
                dtype=np.float32) -> GpfnParams:
    """Seeded Glorot-uniform weights (+- sqrt(6/(fan_in+fan_out))), zero biases."""
    if d_in not in (6, 9):
        raise ValueError(f"d_in must be 6 or 9, got {d_in}")
    if not 2 <= n_classes <= 255:
        raise ValueError("n_classes must be in [2, 255]")
    rng = np.random.default_rng(seed)
    tensors: Dict[str, Tensor] = {}
    for name, fan_in, fan_out in _layer_shapes(d_in, n_classes):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        tensors[f"{name}.W"] = ad.param(w.astype(dtype))
        tensors[f"{name}.b"] = ad.param(np.zeros(fan_out, dtype=dtype))
    return GpfnParams(d_in, n_classes, k, tensors)


def _check_finite(t: Tensor, layer: str) -> Tensor:
    if not np.isfinite(t.data).all():
        raise NumericalFault(f"non-finite activation after layer '{layer}'")
    return t


def _dense(x: Tensor, params: GpfnParams, name: str, linear: bool = False) -> Tensor:
    out = ad.add(ad.matmul(x, params.tensors[f"{name}.W"]),
                 params.tensors[f"{name}.b"])
    if not linear:
        out = ad.leaky_relu(out, LEAKY_SLOPE)
    return _check_finite(out, name)


def edge_conv(features: Tensor, params: GpfnParams, block: int) -> Tensor:
    """One dynamic edge-convolution block.

    Rebuilds the K-NN graph on the current features, applies the block's
    shared per-edge transform to concat(center, neighbor - center) and
    max-reduces over the K neighbors.
    """
    n, f = features.shape
    k = params.k
    graph = knn_graph(features.data, k)
    nbr = ad.gather_rows(features, graph.neighbors)             # (N, K, F)
    center = ad.reshape(features, (n, 1, f))
    edges = ad.concat([ad.broadcast_to(center, (n, k, f)),
                       ad.sub(nbr, center)], axis=2)
    h = ad.reshape(edges, (n * k, 2 * f))
    for l in range(1, len(_EDGE_BLOCKS[block - 1]) + 1):
        h = _dense(h, params, f"ec{block}.l{l}")
    width = _EDGE_BLOCKS[block - 1][-1]
    return ad.max_axis(ad.reshape(h, (n, k, width)), axis=1)


def forward(features, params: GpfnParams) -> Tuple[Tensor, Tensor]:
    """Run the encoder and both decoder heads.

    features: (N, d_in) array or Tensor; N must exceed params.k.
    Returns (seg_logits (N, C), vis_logit (N, 1)).
    """
    x = features if isinstance(features, Tensor) else Tensor(
        np.asarray(features, dtype=params.dtype))
    n = x.shape[0]
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ValueError(f"expected (N, {params.d_in}) input, got {x.shape}")
    if n <= params.k:
        raise ValueError(f"need N > k, got N={n}, k={params.k}")

    h = _dense(x, params, "lift")
    h = edge_conv(h, params, 1)
    h = edge_conv(h, params, 2)
    g1 = ad.max_axis(h, axis=0, keepdims=True)                  # (1, 64)
    g1b = ad.broadcast_to(g1, (n, ENCODER_WIDTH))
    h = edge_conv(ad.concat([h, g1b], axis=1), params, 3)
    p = _dense(h, params, "proj")
    g2 = ad.max_axis(p, axis=0, keepdims=True)                  # (1, 1024)
    g2b = ad.broadcast_to(g2, (n, PROJECTOR_WIDTH))
    rep = ad.concat([h, g1b, g2b], axis=1)

    seg = rep
    vis = rep
    for l in (1, 2, 3):
        seg = _dense(seg, params, f"seg.l{l}", linear=(l == 3))
        vis = _dense(vis, params, f"vis.l{l}", linear=(l == 3))
    return seg, vis


def softmax_rows(logits) -> Tensor:
    """Row-stochastic class probabilities (see autodiff.softmax_rows)."""
    return ad.softmax_rows(logits)


# ---------------------------------------------------------------------------
# checkpoints: versioned text, bit-exact reload

def save_checkpoint(params: GpfnParams, path) -> None:
    with open(path, "w") as f:
        f.write(_CKPT_MAGIC + "\n")
        f.write(f"meta d_in={params.d_in} n_classes={params.n_classes} "
                f"k={params.k} dtype={np.dtype(params.dtype).name}\n")
        for name, t in params.tensors.items():
            a = t.data
            shape = " ".join(str(s) for s in a.shape)
            f.write(f"param {name} {a.ndim} {shape}\n")
            rows = a.reshape(-1, a.shape[-1]) if a.ndim > 1 else a.reshape(1, -1)
            for row in rows:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_checkpoint(path) -> GpfnParams:
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != _CKPT_MAGIC:
            raise ParseError(f"bad checkpoint magic {header!r}", path, 1)
        meta = f.readline().split()
        try:
            kv = dict(item.split("=", 1) for item in meta[1:])
            d_in, n_classes, k = (int(kv[x]) for x in ("d_in", "n_classes", "k"))
            dtype = np.dtype(kv["dtype"])
        except (KeyError, ValueError):
            raise ParseError("malformed checkpoint meta line", path, 2)

        tensors: Dict[str, Tensor] = {}
        lineno = 2
        while True:
            head = f.readline()
            if not head:
                break
            lineno += 1
            parts = head.split()
            if len(parts) < 3 or parts[0] != "param":
                raise ParseError("expected 'param <name> <ndim> <shape...>'",
                                 path, lineno)
            try:
                name, ndim = parts[1], int(parts[2])
                shape = tuple(int(s) for s in parts[3:3 + ndim])
                n_rows = int(np.prod(shape[:-1])) if ndim > 1 else 1
                values = []
                for _ in range(n_rows):
                    lineno += 1
                    line = f.readline()
                    if not line:
                        raise ParseError("truncated parameter block", path, lineno)
                    values.append([float(v) for v in line.split()])
                a = np.array(values, dtype=np.float64).reshape(shape).astype(dtype)
            except ParseError:
                raise
            except ValueError:
                raise ParseError("malformed parameter block", path, lineno)
            tensors[name] = ad.param(a)

    params = GpfnParams(d_in, n_classes, k, tensors)
    expect = {f"{n}.{s}" for n, _, _ in _layer_shapes(d_in, n_classes)
              for s in ("W", "b")}
    if set(tensors) != expect:
        raise ParseError("checkpoint parameter set does not match the "
                         "architecture", path, 3)
    return params
