"""Loss assembly and network training.

The loss preserves structure and intensity relative to the two source blocks,
weighted by their preservation degrees:

    L = wi * (1 - SSIM(f, i)) + wj * (1 - SSIM(f, j))
      + alpha * (wi * MSE(f, i) + wj * MSE(f, j))

The weights wi, wj come from the information measure of the sources and are
constants with respect to the network parameters, so no gradient flows
through them. Optimization is plain gradient descent with momentum 0.9;
everything is seeded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ParameterError, TrainingDivergedError
from .features import (
    MIN_INPUT,
    PreservationWeights,
    extract_features,
    information_measure,
    preservation_degrees,
)
from .image import ImageF
from .network import FusionNet
from .ssim import as_plane, mse, ssim

MOMENTUM = 0.9


class LossTerms(NamedTuple):
    total: float
    ssim_term: float
    mse_term: float
    grad_total: np.ndarray
    grad_ssim: np.ndarray
    grad_mse: np.ndarray


@dataclass
class TrainConfig:
    learning_rate: float = 0.25
    epochs: int = 50
    batch_size: int = 10
    alpha: float = 20.0
    c: float | None = None  # None: mean information measure over the dataset
    rng_seed: int = 0
    dataset: Sequence[tuple[ImageF, ImageF]] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ParameterError("learning rate must be >= 0")
        if self.alpha < 0:
            raise ParameterError("alpha must be >= 0")
        if self.c is not None and self.c <= 0:
            raise ParameterError("temperature c must be > 0")
        if self.batch_size < 1:
            raise ParameterError("batch size must be >= 1")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")


def fusion_loss_terms(i_f, i_i, i_j, weights: PreservationWeights, alpha: float) -> LossTerms:
    """Loss value, its SSIM/MSE components and their gradients w.r.t. i_f."""
    f = as_plane(i_f)
    a = as_plane(i_i)
    b = as_plane(i_j)
    if f.shape != a.shape or f.shape != b.shape:
        raise ParameterError("all images must share one size")
    s_i, gs_i = ssim(f, a)
    s_j, gs_j = ssim(f, b)
    m_i, gm_i = mse(f, a)
    m_j, gm_j = mse(f, b)
    l_ssim = weights.wi * (1.0 - s_i) + weights.wj * (1.0 - s_j)
    l_mse = weights.wi * m_i + weights.wj * m_j
    g_ssim = -(weights.wi * gs_i + weights.wj * gs_j)
    g_mse = weights.wi * gm_i + weights.wj * gm_j
    return LossTerms(
        l_ssim + alpha * l_mse,
        l_ssim,
        l_mse,
        g_ssim + alpha * g_mse,
        g_ssim,
        g_mse,
    )


def fusion_loss(i_f, i_i, i_j, weights: PreservationWeights, alpha: float) -> tuple[float, np.ndarray]:
    terms = fusion_loss_terms(i_f, i_i, i_j, weights, alpha)
    return terms.total, terms.grad_total


def measure_pair(i_i: ImageF, i_j: ImageF) -> tuple[float, float]:
    """Information measures of both sources (feature pyramid + Laplacian)."""
    hi = information_measure(extract_features(i_i))
    hj = information_measure(extract_features(i_j))
    return hi, hj


def train(net: FusionNet, config: TrainConfig) -> tuple[FusionNet, list[float]]:
    """Optimize the network in place; returns it with the per-epoch mean loss.

    Preservation weights are measured once per pair before the first epoch
    (they depend only on the sources). When ``config.c`` is None the softmax
    temperature is the mean information measure over the dataset, keeping the
    logits at order one.
    """
    pairs = list(config.dataset)
    if not pairs:
        raise ParameterError("training dataset is empty")
    shape = (pairs[0][0].height, pairs[0][0].width)
    if min(shape) < MIN_INPUT:
        raise ParameterError(f"training blocks must be >= {MIN_INPUT} px per side")
    for a, b in pairs:
        if (a.height, a.width) != shape or (b.height, b.width) != shape:
            raise ParameterError("all training pairs must share one block size")

    n = len(pairs)
    x = np.empty((n, shape[0], shape[1], 2), dtype=np.float32)
    measures = np.empty((n, 2))
    for idx, (a, b) in enumerate(pairs):
        x[idx, :, :, 0] = a.plane()
        x[idx, :, :, 1] = b.plane()
        measures[idx] = measure_pair(a, b)
    c = config.c if config.c is not None else max(float(measures.mean()), 1e-12)
    weights = [
        preservation_degrees(hi, hj, c) for hi, hj in measures
    ]

    velocity_w = [np.zeros_like(w) for w in net.weights]
    velocity_b = [np.zeros_like(b) for b in net.biases]
    rng = np.random.default_rng(config.rng_seed)
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb = x[idx]
            y, cache = net.forward(xb, keep_cache=True)
            dy = np.empty_like(y, dtype=np.float64)
            batch_loss = 0.0
            for s, pair_idx in enumerate(idx):
                value, grad = fusion_loss(
                    y[s, :, :, 0].astype(np.float64),
                    xb[s, :, :, 0].astype(np.float64),
                    xb[s, :, :, 1].astype(np.float64),
                    weights[pair_idx],
                    config.alpha,
                )
                batch_loss += value
                dy[s, :, :, 0] = grad / len(idx)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {bi}", epoch, bi
                )
            epoch_loss += batch_loss
            dws, dbs = net.backward(cache, dy)
            for li in range(len(net.weights)):
                velocity_w[li] = MOMENTUM * velocity_w[li] + dws[li]
                velocity_b[li] = MOMENTUM * velocity_b[li] + dbs[li]
                net.weights[li] -= (config.learning_rate * velocity_w[li]).astype(
                    net.dtype
                )
                net.biases[li] -= (config.learning_rate * velocity_b[li]).astype(
                    net.dtype
                )
        history.append(epoch_loss / n)
    return net, history


def gradient_check(
    net: FusionNet,
    i_i: ImageF,
    i_j: ImageF,
    weights: PreservationWeights,
    alpha: float,
    samples: int = 50,
    seed: int = 0,
    step: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference parameter
    gradients at ``samples`` randomly chosen parameters.

    The check runs in float64 regardless of the network's training dtype so
    the finite-difference oracle is not drowned by rounding.
    """
    net64 = net.astype(np.float64)
    a = as_plane(i_i)
    b = as_plane(i_j)
    x = np.stack([a, b], axis=-1)[None]

    def loss_of(nn: FusionNet) -> float:
        y = nn.forward(x)
        value, _ = fusion_loss(y[0, :, :, 0], a, b, weights, alpha)
        return value

    y, cache = net64.forward(x, keep_cache=True)
    _, grad = fusion_loss(y[0, :, :, 0], a, b, weights, alpha)
    dy = np.zeros_like(y)
    dy[0, :, :, 0] = grad
    dws, dbs = net64.backward(cache, dy)
    analytic = dws + dbs
    params = net64.weights + net64.biases

    rng = np.random.default_rng(seed)
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    flat_idx = rng.choice(total, size=min(samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for fi in flat_idx:
        ai = int(np.searchsorted(offsets, fi, side="right") - 1)
        local = int(fi - offsets[ai])
        arr = params[ai]
        orig = arr.flat[local]
        arr.flat[local] = orig + step
        lp = loss_of(net64)
        arr.flat[local] = orig - step
        lm = loss_of(net64)
        arr.flat[local] = orig
        fd = (lp - lm) / (2.0 * step)
        an = analytic[ai].flat[local]
        denom = max(abs(an), abs(fd), 1e-8)
        worst = max(worst, abs(an - fd) / denom)
    return worst


__all__ = [
    "LossTerms",
    "MOMENTUM",
    "TrainConfig",
    "fusion_loss",
    "fusion_loss_terms",
    "gradient_check",
    "measure_pair",
    "train",
]
