"""Initialization and training loops for the filler and its inverse net.

All loops are single-logical-thread and seeded, so repeated runs produce
bitwise-identical weights.
"""

from __future__ import annotations

import numpy as np

from ..errors import DivergenceError, InitConvergenceError
from .loss import LossConfig, perceptual_color_loss
from .net import FillerNet
from .optim import AdamOptimizer


def images_to_nchw(images: np.ndarray) -> np.ndarray:
    """(N,H,W,3) float image stack -> (N,3,H,W) float32."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return np.ascontiguousarray(arr.transpose(0, 3, 1, 2))


def nchw_to_images(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x).transpose(0, 2, 3, 1))


def identity_residual(net: FillerNet, samples: np.ndarray) -> float:
    """Relative L1 reconstruction error |f(x)-x|_1 / |x|_1 (inference mode)."""
    out = net.forward(samples, training=False)
    denom = float(np.abs(samples).sum(dtype=np.float64))
    return float(np.abs(out - samples).sum(dtype=np.float64)) / max(denom, 1e-12)


def stochastic_identity_init(net: FillerNet, seed: int, samples: np.ndarray,
                             holdout: np.ndarray | None = None,
                             target_residual: float = 0.01,
                             max_steps: int = 6000, lr: float = 1e-3,
                             batch: int = 8, check_every: int = 50) -> FillerNet:
    """Freeze a random half of each layer's weights, train the rest to
    reproduce the input.

    All weights are redrawn Gaussian(0, sqrt(2/fan_in)) from `seed`, a
    uniformly random half of each conv kernel is frozen, and the remainder
    is optimized on |f(x) - x|_1 until the held-out relative residual drops
    below target_residual. Raises InitConvergenceError when the step budget
    runs out first.
    """
    rng = np.random.default_rng(seed)
    samples = np.ascontiguousarray(samples, dtype=np.float32)
    if len(samples) == 0:
        raise ValueError("need at least one sample image")
    if holdout is None:
        n_hold = max(1, len(samples) // 5)
        holdout, samples = samples[:n_hold], samples[n_hold:]
        if len(samples) == 0:
            samples = holdout

    for layer in net.conv_layers:
        layer.init_weights(rng)
        w = layer.params["w"]
        mask = np.zeros(w.size, dtype=bool)
        mask[rng.permutation(w.size)[: w.size // 2]] = True
        layer.frozen["w"] = mask.reshape(w.shape)
    for _, bn, _ in net.blocks:
        if bn is not None:
            bn.params["gamma"][:] = 1.0
            bn.params["beta"][:] = 0.0
            bn.reset_running()
    net.identity_residual = None

    opt = AdamOptimizer(net.trainable())
    best = np.inf
    for step in range(1, max_steps + 1):
        idx = rng.integers(0, len(samples), size=min(batch, len(samples)))
        x = samples[idx]
        y = net.forward(x, training=True)
        diff = y - x
        loss = float(np.abs(diff).mean(dtype=np.float64))
        if not np.isfinite(loss):
            raise DivergenceError(f"identity init diverged at step {step}")
        net.zero_grads()
        net.backward(np.sign(diff).astype(np.float32) / diff.size)
        opt.step(lr)
        if step % check_every == 0 or step == max_steps:
            res = identity_residual(net, holdout)
            best = min(best, res)
            if res < target_residual:
                net.identity_residual = res
                return net
    raise InitConvergenceError(best, target_residual)


def _epoch_batches(n: int, batch: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch] for i in range(0, n, batch)]


def _crop_batch(src: np.ndarray, tgt: np.ndarray, idx: np.ndarray,
                crop: int, rng):
    h, w = src.shape[2], src.shape[3]
    if h == crop and w == crop:
        return src[idx], tgt[idx]
    xs = np.empty((len(idx), 3, crop, crop), dtype=src.dtype)
    ys = np.empty_like(xs)
    for out_i, i in enumerate(idx):
        r = int(rng.integers(0, h - crop + 1))
        c = int(rng.integers(0, w - crop + 1))
        xs[out_i] = src[i, :, r : r + crop, c : c + crop]
        ys[out_i] = tgt[i, :, r : r + crop, c : c + crop]
    return xs, ys


def train_filler(net: FillerNet, source: np.ndarray, target: np.ndarray,
                 cfg: LossConfig | None = None, epochs: int = 50,
                 lr: float = 2e-4, seed: int = 0, batch: int = 16,
                 crop: int = 32) -> list[float]:
    """Fit the forward net on (render, target) pairs; returns per-epoch loss."""
    cfg = cfg or LossConfig()
    source = images_to_nchw(source) if source.ndim == 4 and source.shape[-1] == 3 else source
    target = images_to_nchw(target) if target.ndim == 4 and target.shape[-1] == 3 else target
    if source.shape != target.shape:
        raise ValueError("source and target stacks must match")
    rng = np.random.default_rng(seed)
    opt = AdamOptimizer(net.trainable())
    history = []
    for _epoch in range(epochs):
        total = 0.0
        count = 0
        for idx in _epoch_batches(len(source), batch, rng):
            xs, ys = _crop_batch(source, target, idx, crop, rng)
            out = net.forward(xs, training=True)
            loss, g = perceptual_color_loss(out, ys, cfg)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss diverged: {loss}")
            net.zero_grads()
            net.backward(g)
            opt.step(lr)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
    return history


def train_joint(f: FillerNet, u: FillerNet, source: np.ndarray,
                target: np.ndarray, cfg: LossConfig | None = None,
                epochs: int = 50, lr: float = 2e-5, seed: int = 0,
                batch: int = 16, crop: int = 32) -> list[float]:
    """Joint objective: D(f(src), tgt) + D(f(src), u(tgt)).

    The second term pulls the two mappings into a shared space; the first
    anchors f so the pair cannot collapse. Returns per-epoch total loss.
    """
    cfg = cfg or LossConfig()
    source = images_to_nchw(source) if source.ndim == 4 and source.shape[-1] == 3 else source
    target = images_to_nchw(target) if target.ndim == 4 and target.shape[-1] == 3 else target
    if source.shape != target.shape:
        raise ValueError("source and target stacks must match")
    rng = np.random.default_rng(seed)
    opt_f = AdamOptimizer(f.trainable())
    opt_u = AdamOptimizer(u.trainable())
    history = []
    for _epoch in range(epochs):
        total = 0.0
        count = 0
        for idx in _epoch_batches(len(source), batch, rng):
            xs, ys = _crop_batch(source, target, idx, crop, rng)
            fs = f.forward(xs, training=True)
            ut = u.forward(ys, training=True)
            anchor, g_anchor = perceptual_color_loss(fs, ys, cfg)
            bridge, g_bridge = perceptual_color_loss(fs, ut, cfg)
            loss = anchor + bridge
            if not np.isfinite(loss):
                raise DivergenceError(f"joint loss diverged: {loss}")
            f.zero_grads()
            u.zero_grads()
            f.backward(g_anchor + g_bridge)
            u.backward(-g_bridge)  # linear loss terms: d/d(2nd arg) = -d/d(1st)
            opt_f.step(lr)
            opt_u.step(lr)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
    return history
