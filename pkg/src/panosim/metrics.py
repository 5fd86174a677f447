"""Image and distribution comparison metrics.

l1/ssim compare image pairs; mmd2/coral compare feature-set distributions
(linear kernel / covariance statistics); retrieval_topk guards against
mapping collapse; class_entropy summarizes label diversity.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def l1(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    half = SSIM_WINDOW // 2

    def filt(x):
        y = correlate1d(x, win, axis=0, mode="constant")
        y = correlate1d(y, win, axis=1, mode="constant")
        return y[half:-half, half:-half]  # central (valid) windows only

    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), data range 1.

    Computed per channel over valid window positions and averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ShapeError(f"images smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c])
                          for c in range(a.shape[2])]))


def mmd2(x: np.ndarray, y: np.ndarray, unbiased: bool = True) -> float:
    """Squared maximum mean discrepancy with the linear kernel k(a,b)=a.b.

    The unbiased U-statistic can be slightly negative for close
    distributions; callers that report values should clamp at zero
    (`max(0, mmd2(...))`) and keep the raw value in data files.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature sets must be (N,D) with equal D: {x.shape} {y.shape}")
    m, n = len(x), len(y)
    if unbiased and (m < 2 or n < 2):
        raise ShapeError("unbiased estimator needs at least 2 samples per set")
    gxx = x @ x.T
    gyy = y @ y.T
    cross = float((x.mean(axis=0) @ y.mean(axis=0)))
    if unbiased:
        xx = (gxx.sum() - np.trace(gxx)) / (m * (m - 1))
        yy = (gyy.sum() - np.trace(gyy)) / (n * (n - 1))
    else:
        xx = gxx.sum() / (m * m)
        yy = gyy.sum() / (n * n)
    return float(xx + yy - 2.0 * cross)


def coral(x: np.ndarray, y: np.ndarray) -> float:
    """Covariance alignment distance: |cov(X)-cov(Y)|_F^2 / (4 D^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature sets must be (N,D) with equal D: {x.shape} {y.shape}")
    if len(x) < 2 or len(y) < 2:
        raise ShapeError("need at least 2 samples per set for covariances")
    d = x.shape[1]
    cx = np.cov(x, rowvar=False)
    cy = np.cov(y, rowvar=False)
    return float(((cx - cy) ** 2).sum() / (4.0 * d * d))


def retrieval_topk(queries: np.ndarray, pool: np.ndarray, k: int = 1) -> float:
    """Fraction of queries whose index-matched pool item ranks in the top k
    by Euclidean distance. Distance ties break on ascending pool index."""
    q = np.asarray(queries, dtype=np.float64)
    p = np.asarray(pool, dtype=np.float64)
    if len(p) == 0:
        raise ShapeError("empty retrieval pool")
    if q.shape[1] != p.shape[1] or len(q) > len(p):
        raise ShapeError(f"queries {q.shape} incompatible with pool {p.shape}")
    d2 = ((q[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
    hits = 0
    for i in range(len(q)):
        order = np.lexsort((np.arange(len(p)), d2[i]))
        if i in order[:k]:
            hits += 1
    return hits / len(q)


def class_entropy(labels) -> float:
    """Shannon entropy (bits) of the empirical label distribution."""
    labels = np.asarray(labels).reshape(-1)
    if len(labels) == 0:
        raise ShapeError("need at least one label")
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def extract_features(images: np.ndarray, extractor=None) -> np.ndarray:
    """(N, D) feature matrix: the extractor's last level, flattened."""
    from .filler.loss import PixelPyramidExtractor

    extractor = extractor or PixelPyramidExtractor()
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.shape[-1] == 3:  # NHWC -> NCHW
        arr = arr.transpose(0, 3, 1, 2)
    feats = extractor.features(np.ascontiguousarray(arr))
    last = feats[-1]
    return last.reshape(last.shape[0], -1).astype(np.float64)
