"""Neural network layers with hand-derived gradients (numpy only).

Tensors are NCHW. Layers cache what their backward pass needs during a
training-mode forward; backward without a cached forward raises. Every
gradient here is checked against central finite differences in the tests.

Convolutions run as batched GEMM over an (N, C*k*k, OH*OW) patch tensor
whose layout keeps all reshapes copy-free.
"""

from __future__ import annotations

import numpy as np

from ..errors import NetworkStateError, ShapeError


def _out_hw(h: int, w: int, k: int, stride: int, dilation: int, pad: int):
    eff = dilation * (k - 1) + 1
    return (h + 2 * pad - eff) // stride + 1, (w + 2 * pad - eff) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, dilation: int, pad: int):
    """(N,C,H,W) -> (N, C*k*k, OH*OW) patch tensor plus output dims."""
    n, c, h, w = x.shape
    oh, ow = _out_hw(h, w, k, stride, dilation, pad)
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"input {h}x{w} too small for kernel {k} dilation {dilation}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    patches = np.empty((n, c, k, k, oh, ow), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            patches[:, :, ki, kj] = xp[
                :, :,
                ki * dilation : ki * dilation + oh * stride : stride,
                kj * dilation : kj * dilation + ow * stride : stride,
            ]
    return patches.reshape(n, c * k * k, oh * ow), oh, ow


def _col2im(cols: np.ndarray, xshape, k: int, stride: int, dilation: int,
            pad: int, oh: int, ow: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add (N, C*k*k, OH*OW) back onto the grid."""
    n, c, h, w = xshape
    patches = cols.reshape(n, c, k, k, oh, ow)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            xp[
                :, :,
                ki * dilation : ki * dilation + oh * stride : stride,
                kj * dilation : kj * dilation + ow * stride : stride,
            ] += patches[:, :, ki, kj]
    if pad:
        return xp[:, :, pad:-pad, pad:-pad]
    return xp


class Layer:
    """Common parameter/gradient bookkeeping."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.frozen: dict[str, np.ndarray] = {}
        self._cache = None

    def zero_grads(self):
        for key, p in self.params.items():
            self.grads[key] = np.zeros_like(p)

    def _apply_freeze(self):
        for key, mask in self.frozen.items():
            self.grads[key][mask] = 0

    def _take_cache(self):
        if self._cache is None:
            raise NetworkStateError(
                f"{type(self).__name__}.backward without a cached training forward"
            )
        cache = self._cache
        self._cache = None
        return cache


class Conv2D(Layer):
    """2-D convolution with stride/dilation; padding keeps H/stride, W/stride."""

    def __init__(self, c_in: int, c_out: int, k: int, stride: int = 1,
                 dilation: int = 1, dtype=np.float32, rng=None):
        super().__init__()
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride, self.dilation = stride, dilation
        self.pad = dilation * (k - 1) // 2
        self.dtype = np.dtype(dtype)
        self.init_weights(rng or np.random.default_rng())

    def init_weights(self, rng):
        fan_in = self.c_in * self.k * self.k
        self.params["w"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), size=(self.c_out, self.c_in, self.k, self.k)
        ).astype(self.dtype)
        self.params["b"] = np.zeros(self.c_out, dtype=self.dtype)
        self.zero_grads()

    def out_shape(self, h: int, w: int):
        return _out_hw(h, w, self.k, self.stride, self.dilation, self.pad)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[1] != self.c_in:
            raise ShapeError(f"expected {self.c_in} input channels, got {x.shape[1]}")
        cols, oh, ow = _im2col(x, self.k, self.stride, self.dilation, self.pad)
        wmat = self.params["w"].reshape(self.c_out, -1)
        out = np.matmul(wmat, cols)  # (N, c_out, OH*OW)
        out += self.params["b"][None, :, None]
        if training:
            self._cache = (cols, x.shape, oh, ow)
        return out.reshape(x.shape[0], self.c_out, oh, ow)

    def backward(self, g: np.ndarray) -> np.ndarray:
        cols, xshape, oh, ow = self._take_cache()
        gmat = g.reshape(g.shape[0], self.c_out, oh * ow)
        self.grads["w"] += np.matmul(gmat, cols.transpose(0, 2, 1)) \
            .sum(axis=0).reshape(self.params["w"].shape)
        self.grads["b"] += gmat.sum(axis=(0, 2))
        gcols = np.matmul(self.params["w"].reshape(self.c_out, -1).T, gmat)
        self._apply_freeze()
        return _col2im(gcols, xshape, self.k, self.stride, self.dilation,
                       self.pad, oh, ow)


class ConvTranspose2D(Layer):
    """Transposed convolution: the linear adjoint of a strided Conv2D.

    With k=4, stride=2, pad=1 it exactly doubles H and W.
    """

    def __init__(self, c_in: int, c_out: int, k: int = 4, stride: int = 2,
                 pad: int = 1, dtype=np.float32, rng=None):
        super().__init__()
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride, self.pad = stride, pad
        self.dilation = 1
        self.dtype = np.dtype(dtype)
        self.init_weights(rng or np.random.default_rng())

    def init_weights(self, rng):
        fan_in = self.c_in * self.k * self.k
        # stored as the virtual forward-conv weight (c_in plays "output")
        self.params["w"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), size=(self.c_in, self.c_out, self.k, self.k)
        ).astype(self.dtype)
        self.params["b"] = np.zeros(self.c_out, dtype=self.dtype)
        self.zero_grads()

    def out_shape(self, h: int, w: int):
        return ((h - 1) * self.stride - 2 * self.pad + self.k,
                (w - 1) * self.stride - 2 * self.pad + self.k)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[1] != self.c_in:
            raise ShapeError(f"expected {self.c_in} input channels, got {x.shape[1]}")
        n, _, h, w = x.shape
        oh, ow = self.out_shape(h, w)
        xmat = x.reshape(n, self.c_in, h * w)
        cols = np.matmul(self.params["w"].reshape(self.c_in, -1).T, xmat)
        out = _col2im(cols, (n, self.c_out, oh, ow), self.k, self.stride,
                      1, self.pad, h, w)
        out += self.params["b"][None, :, None, None]
        if training:
            self._cache = (xmat, (n, h, w))
        return out

    def backward(self, g: np.ndarray) -> np.ndarray:
        xmat, (n, h, w) = self._take_cache()
        gcols, goh, gow = _im2col(g, self.k, self.stride, 1, self.pad)
        assert (goh, gow) == (h, w)
        self.grads["w"] += np.matmul(xmat, gcols.transpose(0, 2, 1)) \
            .sum(axis=0).reshape(self.params["w"].shape)
        self.grads["b"] += g.sum(axis=(0, 2, 3))
        gx = np.matmul(self.params["w"].reshape(self.c_in, -1), gcols)
        self._apply_freeze()
        return gx.reshape(n, self.c_in, h, w)


class BatchNorm2D(Layer):
    """Per-channel batch normalization, float64 statistics accumulators.

    Training mode normalizes by batch statistics and updates the running
    estimates; inference mode uses the stored running statistics only.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.dtype = np.dtype(dtype)
        self.params["gamma"] = np.ones(channels, dtype=self.dtype)
        self.params["beta"] = np.zeros(channels, dtype=self.dtype)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.zero_grads()

    def reset_running(self):
        self.running_mean[:] = 0.0
        self.running_var[:] = 1.0

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[1] != self.channels:
            raise ShapeError(f"expected {self.channels} channels, got {x.shape[1]}")
        if training:
            mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
            sq = np.einsum("nchw,nchw->c", x, x, dtype=np.float64)
            n = x.shape[0] * x.shape[2] * x.shape[3]
            var = np.maximum(sq / n - mean * mean, 0.0)
            self.running_mean *= 1.0 - self.momentum
            self.running_mean += self.momentum * mean
            unbiased = var * (n / max(n - 1, 1))
            self.running_var *= 1.0 - self.momentum
            self.running_var += self.momentum * unbiased
        else:
            mean = self.running_mean
            var = self.running_var
        ivar = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = (x - mean.astype(x.dtype)[None, :, None, None]) \
            * ivar[None, :, None, None]
        out = self.params["gamma"][None, :, None, None] * xhat \
            + self.params["beta"][None, :, None, None]
        if training:
            self._cache = (xhat, ivar)
        return out

    def backward(self, g: np.ndarray) -> np.ndarray:
        xhat, ivar = self._take_cache()
        n = g.shape[0] * g.shape[2] * g.shape[3]
        gxsum = np.einsum("nchw,nchw->c", g, xhat, dtype=np.float64)
        gsum = g.sum(axis=(0, 2, 3), dtype=np.float64)
        self.grads["gamma"] += gxsum.astype(self.dtype)
        self.grads["beta"] += gsum.astype(self.dtype)
        coeff = (self.params["gamma"] * ivar / n)[None, :, None, None]
        gx = coeff * (n * g - gsum.astype(g.dtype)[None, :, None, None]
                      - xhat * gxsum.astype(g.dtype)[None, :, None, None])
        self._apply_freeze()
        return gx.astype(g.dtype)


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.1):
        super().__init__()
        self.slope = slope

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        out = np.where(x >= 0, x, self.slope * x)
        if training:
            self._cache = x >= 0
        return out.astype(x.dtype)

    def backward(self, g: np.ndarray) -> np.ndarray:
        positive = self._take_cache()
        return np.where(positive, g, self.slope * g).astype(g.dtype)
