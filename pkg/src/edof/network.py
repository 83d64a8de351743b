"""Densely connected convolutional fusion network with explicit backprop.

Architecture (fixed): a 3x3 input convolution taking the two stacked source
blocks to 16 channels, four densely connected 3x3 convolutions with growth 16
(layer k sees the concatenation of every preceding feature map), and a 1x1
output convolution to one channel. Hidden layers use softplus (a smooth ramp,
kind to finite-difference checks); the output is squashed by a sigmoid so
fused values stay strictly inside (0, 1). Spatial size is preserved with
replicate padding.

Arrays are channels-last (N, H, W, C). Convolutions run as im2col matrix
products; backprop folds padded-border gradients back onto edge pixels, which
is the exact adjoint of replicate padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import FormatError, ParameterError
from .image import ImageF

# (kernel, in_channels, out_channels) per layer.
LAYER_SPECS = (
    (3, 2, 16),
    (3, 16, 16),
    (3, 32, 16),
    (3, 48, 16),
    (3, 64, 16),
    (1, 80, 1),
)

MAGIC = b"EDFN"
FORMAT_VERSION = 1


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _pad_edge(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)), mode="edge")


def _fold_edge(dxp: np.ndarray, p: int) -> np.ndarray:
    """Adjoint of edge padding: accumulate border gradients onto edge pixels."""
    if p == 0:
        return dxp
    d = dxp.copy()
    d[:, p] += d[:, :p].sum(axis=1)
    d[:, -p - 1] += d[:, -p:].sum(axis=1)
    d = d[:, p:-p]
    d[:, :, p] += d[:, :, :p].sum(axis=2)
    d[:, :, -p - 1] += d[:, :, -p:].sum(axis=2)
    return d[:, :, p:-p]


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, H, W, C) -> (N*H*W, C*k*k) patch matrix, edge-padded to keep size.

    Column order is (channel, ky, kx): the raw sliding-window layout, so the
    reshape is a single strided copy with no transpose.
    """
    n, h, w, c = x.shape
    if k == 1:
        return x.reshape(n * h * w, c)
    xp = _pad_edge(x, k // 2)
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (N, H, W, C, k, k)
    return win.reshape(n * h * w, c * k * k)


def _conv_forward(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n, h, w, _ = x.shape
    k, _, cin, cout = weight.shape
    cols = _im2col(x, k)
    wr = weight.transpose(2, 0, 1, 3).reshape(cin * k * k, cout)
    y = cols @ wr + bias
    return y.reshape(n, h, w, cout), cols


def _conv_backward(
    dy: np.ndarray,
    cols: np.ndarray,
    weight: np.ndarray,
    need_dx: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    n, h, w, cout = dy.shape
    k, _, cin, _ = weight.shape
    dy_flat = dy.reshape(n * h * w, cout)
    dw = (cols.T @ dy_flat).reshape(cin, k, k, cout).transpose(1, 2, 0, 3)
    db = dy_flat.sum(axis=0)
    if not need_dx:
        return dw, db, None
    if k == 1:
        dx = (dy_flat @ weight.reshape(cin, cout).T).reshape(n, h, w, cin)
        return dw, db, dx
    p = k // 2
    # Gradient w.r.t. the padded input: correlate zero-padded dy with the
    # spatially flipped, channel-transposed kernel, then fold the padding.
    wt = weight[::-1, ::-1].transpose(3, 0, 1, 2).reshape(cout * k * k, cin)
    dyp = np.pad(dy, ((0, 0), (2 * p, 2 * p), (2 * p, 2 * p), (0, 0)))
    win = sliding_window_view(dyp, (k, k), axis=(1, 2))
    cols2 = win.reshape(-1, cout * k * k)
    dxp = (cols2 @ wt).reshape(n, h + 2 * p, w + 2 * p, cin)
    return dw, db, _fold_edge(dxp, p)


@dataclass
class FusionNet:
    weights: list[np.ndarray]  # (k, k, cin, cout) per layer
    biases: list[np.ndarray]  # (cout,) per layer

    def __post_init__(self):
        if len(self.weights) != len(LAYER_SPECS) or len(self.biases) != len(LAYER_SPECS):
            raise ParameterError("wrong number of layers")
        for i, (k, cin, cout) in enumerate(LAYER_SPECS):
            if self.weights[i].shape != (k, k, cin, cout):
                raise ParameterError(
                    f"layer {i} weight shape {self.weights[i].shape}, "
                    f"expected {(k, k, cin, cout)}"
                )
            if self.biases[i].shape != (cout,):
                raise ParameterError(f"layer {i} bias shape {self.biases[i].shape}")

    @classmethod
    def initialize(cls, seed: int = 0, dtype=np.float32) -> "FusionNet":
        """Seeded uniform fan-in initialization: U(-1/sqrt(fan_in), +...)."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for k, cin, cout in LAYER_SPECS:
            bound = 1.0 / np.sqrt(k * k * cin)
            weights.append(
                rng.uniform(-bound, bound, size=(k, k, cin, cout)).astype(dtype)
            )
            biases.append(np.zeros(cout, dtype=dtype))
        return cls(weights, biases)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def astype(self, dtype) -> "FusionNet":
        return FusionNet(
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
        )

    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def describe(self) -> dict:
        return {
            "layers": [
                {
                    "kernel": k,
                    "in_channels": cin,
                    "out_channels": cout,
                    "weights": k * k * cin * cout,
                    "biases": cout,
                }
                for k, cin, cout in LAYER_SPECS
            ],
            "activation": "softplus",
            "output_activation": "sigmoid",
            "parameter_count": self.parameter_count(),
        }

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, keep_cache: bool = False):
        """Run the network on (N, H, W, 2); returns (N, H, W, 1) in (0, 1).

        With ``keep_cache`` the intermediates needed by :meth:`backward` are
        returned as a second value.
        """
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[3] != LAYER_SPECS[0][1]:
            raise ParameterError(f"input must be (N, H, W, 2), got {x.shape}")
        feats: list[np.ndarray] = []
        pre: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        inp = x
        for i in range(5):
            z, col = _conv_forward(inp, self.weights[i], self.biases[i])
            feats.append(softplus(z))
            pre.append(z)
            cols.append(col)
            inp = np.concatenate(feats, axis=3)
        z_out, col_out = _conv_forward(inp, self.weights[5], self.biases[5])
        y = expit(z_out)
        if not keep_cache:
            return y
        cache = {"pre": pre, "cols": cols, "col_out": col_out, "y": y}
        return y, cache

    def backward(self, cache: dict, dy: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Parameter gradients for upstream gradient dy on the output."""
        y = cache["y"]
        pre = cache["pre"]
        cols = cache["cols"]
        dz = (dy * y * (1.0 - y)).astype(self.dtype)
        dws: list = [None] * 6
        dbs: list = [None] * 6
        dw, db, dcat = _conv_backward(dz, cache["col_out"], self.weights[5], True)
        dws[5], dbs[5] = dw, db
        # Per-feature-map gradient accumulators (16 channels each).
        dfeats = [dcat[..., 16 * i : 16 * (i + 1)].copy() for i in range(5)]
        for i in range(4, 0, -1):
            dzi = dfeats[i] * expit(pre[i])
            need_dx = True
            dw, db, dx = _conv_backward(dzi, cols[i], self.weights[i], need_dx)
            dws[i], dbs[i] = dw, db
            for j in range(i):
                dfeats[j] += dx[..., 16 * j : 16 * (j + 1)]
        dz0 = dfeats[0] * expit(pre[0])
        dw, db, _ = _conv_backward(dz0, cols[0], self.weights[0], False)
        dws[0], dbs[0] = dw, db
        return dws, dbs

    # -- serialization -------------------------------------------------------

    def save(self, path) -> None:
        """Versioned binary: magic, format version, array count, then per
        array a u32 shape header and little-endian float32 data."""
        arrays: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            arrays.append(w)
            arrays.append(b)
        with open(str(path), "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(arrays)))
            for arr in arrays:
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "FusionNet":
        with open(str(path), "rb") as fh:
            if fh.read(4) != MAGIC:
                raise FormatError(f"not a fusion network file: {path}")
            version, count = struct.unpack("<II", fh.read(8))
            if version != FORMAT_VERSION:
                raise FormatError(f"unsupported network format version {version}")
            if count != 2 * len(LAYER_SPECS):
                raise FormatError(f"expected {2 * len(LAYER_SPECS)} arrays, got {count}")
            arrays = []
            for _ in range(count):
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                n = int(np.prod(shape))
                raw = fh.read(4 * n)
                if len(raw) != 4 * n:
                    raise FormatError(f"truncated network file: {path}")
                arrays.append(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
        weights = arrays[0::2]
        biases = arrays[1::2]
        return cls(weights, biases)


def fuse(net: FusionNet, i_img: ImageF, j_img: ImageF) -> ImageF:
    """Fuse two 1-channel blocks; the result mask is the union of inputs."""
    if i_img.channels != 1 or j_img.channels != 1:
        raise ParameterError("fuse requires 1-channel inputs")
    if (i_img.height, i_img.width) != (j_img.height, j_img.width):
        raise ParameterError(
            f"size mismatch: {(i_img.height, i_img.width)} vs "
            f"{(j_img.height, j_img.width)}"
        )
    x = np.stack([i_img.plane(), j_img.plane()], axis=-1)[None]
    y = net.forward(x)[0, :, :, 0]
    return ImageF(
        y.astype(np.float32)[:, :, None], i_img.mask | j_img.mask
    )


__all__ = ["FORMAT_VERSION", "FusionNet", "LAYER_SPECS", "MAGIC", "fuse", "softplus"]
