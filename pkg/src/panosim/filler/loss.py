"""Training distance: multi-scale feature L1 plus tile color-moment matching.

D(a, b) = sum_l lambda_l * |F_l(a) - F_l(b)|_1 + gamma * sum_tiles |mean
color difference|_1, with lambda_l = 1 / (elements of feature level l) and
32x32 tiles. The feature extractor is pluggable; the default is a raw
pixel pyramid (the image plus 2x/4x/8x average-pooled copies), which keeps
the whole loss linear in the inputs and its gradient closed-form.

L1 terms are smoothed inside |x| < 1e-8 so the gradient stays bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError

SMOOTH_EPS = 1e-8


def _smooth_l1(diff: np.ndarray, eps: float = SMOOTH_EPS):
    a = np.abs(diff)
    small = a < eps
    val = np.where(small, diff * diff / (2 * eps) + eps / 2, a)
    grad = np.where(small, diff / eps, np.sign(diff))
    return val, grad


def _avgpool2(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def _avgpool2_vjp(g: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0


class PixelPyramidExtractor:
    """Default feature stack: identity level plus average-pooled octaves."""

    def __init__(self, levels: int = 4):
        if levels < 1:
            raise ValueError("need at least one level")
        self.levels = levels

    def features(self, x: np.ndarray) -> list[np.ndarray]:
        feats = [x]
        cur = x
        for _ in range(self.levels - 1):
            if cur.shape[2] % 2 or cur.shape[3] % 2:
                break
            cur = _avgpool2(cur)
            feats.append(cur)
        return feats

    def vjp(self, grads: list[np.ndarray]) -> np.ndarray:
        """Pull per-level gradients back to the input image."""
        out = grads[0].copy()
        for lv in range(1, len(grads)):
            g = grads[lv]
            for _ in range(lv):
                g = _avgpool2_vjp(g)
            out += g
        return out


@dataclass(frozen=True)
class LossConfig:
    extractor: PixelPyramidExtractor = field(default_factory=PixelPyramidExtractor)
    gamma: float = 0.05  # color-moment term weight
    tile: int = 32

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


def perceptual_color_loss(i1: np.ndarray, i2: np.ndarray,
                          cfg: LossConfig | None = None):
    """Distance between NCHW image batches and its gradient w.r.t. i1.

    The gradient with respect to i2 is the negative of the returned one
    (the extractor and tile means are linear maps). Values are averaged
    over the batch.
    """
    cfg = cfg or LossConfig()
    i1 = np.asarray(i1)
    i2 = np.asarray(i2)
    if i1.shape != i2.shape:
        raise ShapeError(f"image shapes differ: {i1.shape} vs {i2.shape}")
    if i1.ndim == 3:
        i1 = i1[None]
        i2 = i2[None]
    n = i1.shape[0]

    f1 = cfg.extractor.features(i1)
    f2 = cfg.extractor.features(i2)
    value = 0.0
    level_grads = []
    for a, b in zip(f1, f2):
        lam = 1.0 / (a.size // n)  # elements per image at this level
        val, grad = _smooth_l1(a - b)
        value += lam * float(val.sum(dtype=np.float64)) / n
        level_grads.append((lam / n) * grad)
    g1 = cfg.extractor.vjp(level_grads).astype(i1.dtype)

    if cfg.gamma > 0:
        t = cfg.tile
        h, w = i1.shape[2], i1.shape[3]
        for ti in range(0, h, t):
            for tj in range(0, w, t):
                s1 = i1[:, :, ti : ti + t, tj : tj + t]
                s2 = i2[:, :, ti : ti + t, tj : tj + t]
                area = s1.shape[2] * s1.shape[3]
                m1 = s1.mean(axis=(2, 3))
                m2 = s2.mean(axis=(2, 3))
                val, grad = _smooth_l1(m1 - m2)
                value += cfg.gamma * float(val.sum(dtype=np.float64)) / n
                g1[:, :, ti : ti + t, tj : tj + t] += (
                    (cfg.gamma / (n * area)) * grad
                )[:, :, None, None]
    return value, g1
