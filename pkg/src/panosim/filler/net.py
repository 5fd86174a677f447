"""The dis-occlusion filler network: 18 conv layers with a dilation ladder.

Two stride-2 encoders shrink the feature map to 1/4 x 1/4 of the input,
nine 3x3 dilated convolutions (dilations 1,1,2,4,8,16,32,1,1, clamped to
max_dilation) gather context, and two stride-2 transposed convolutions
restore resolution. Every layer except the final output conv is followed
by batch norm and leaky ReLU (slope 0.1). Width scales with n_f.

Weight file format "FILLNET1": 8-byte magic, little-endian u32 JSON header
length, JSON header (architecture, frozen masks as base64 bitsets), then
raw little-endian float32 parameter blocks in layer order.
"""

from __future__ import annotations

import base64
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from .layers import BatchNorm2D, Conv2D, ConvTranspose2D, LeakyReLU

MAGIC = b"FILLNET1"
LRELU_SLOPE = 0.1

# (kind, kernel, dilation, stride, output-width spec)
_ARCH = [
    ("conv", 5, 1, 1, "6"),
    ("conv", 5, 1, 2, "nf"),
    ("conv", 3, 1, 1, "nf"),
    ("conv", 5, 1, 2, "4nf"),
    ("conv", 3, 1, 1, "4nf"),
    ("conv", 3, 1, 1, "4nf"),
    ("conv", 3, 2, 1, "4nf"),
    ("conv", 3, 4, 1, "4nf"),
    ("conv", 3, 8, 1, "4nf"),
    ("conv", 3, 16, 1, "4nf"),
    ("conv", 3, 32, 1, "4nf"),
    ("conv", 3, 1, 1, "4nf"),
    ("conv", 3, 1, 1, "4nf"),
    ("deconv", 4, 1, 2, "nf"),
    ("conv", 3, 1, 1, "nf"),
    ("deconv", 4, 1, 2, "6"),
    ("conv", 3, 1, 1, "6"),
    ("conv", 3, 1, 1, "3"),
]


def _width(spec: str, n_f: int) -> int:
    return {"3": 3, "6": 6, "nf": n_f, "4nf": 4 * n_f}[spec]


class FillerNet:
    """Image-to-image network; output shape equals input shape (3 channels)."""

    def __init__(self, n_f: int = 4, max_dilation: int = 32,
                 dtype=np.float32, seed: int = 0):
        self.n_f = n_f
        self.max_dilation = max_dilation
        self.dtype = np.dtype(dtype)
        self.identity_residual: float | None = None
        rng = np.random.default_rng(seed)
        self.blocks = []  # (main layer, bn | None, act | None)
        c_in = 3
        for i, (kind, k, dil, stride, wspec) in enumerate(_ARCH):
            c_out = _width(wspec, n_f)
            dil = min(dil, max_dilation)
            if kind == "conv":
                layer = Conv2D(c_in, c_out, k, stride, dil, dtype=dtype, rng=rng)
            else:
                layer = ConvTranspose2D(c_in, c_out, k, stride, dtype=dtype, rng=rng)
            last = i == len(_ARCH) - 1
            bn = None if last else BatchNorm2D(c_out, dtype=dtype)
            act = None if last else LeakyReLU(LRELU_SLOPE)
            self.blocks.append((layer, bn, act))
            c_in = c_out

    @property
    def conv_layers(self):
        return [blk[0] for blk in self.blocks]

    def check_input(self, x: np.ndarray):
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (N,3,H,W) input, got {x.shape}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ShapeError(f"H and W must be divisible by 4, got {x.shape[2:]}")

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self.check_input(x)
        out = np.ascontiguousarray(x, dtype=self.dtype)
        for layer, bn, act in self.blocks:
            out = layer.forward(out, training)
            if bn is not None:
                out = bn.forward(out, training)
            if act is not None:
                out = act.forward(out, training)
        return out

    def backward(self, g: np.ndarray) -> np.ndarray:
        for layer, bn, act in reversed(self.blocks):
            if act is not None:
                g = act.backward(g)
            if bn is not None:
                g = bn.backward(g)
            g = layer.backward(g)
        return g

    def zero_grads(self):
        for layer, bn, _ in self.blocks:
            layer.zero_grads()
            if bn is not None:
                bn.zero_grads()

    def trainable(self):
        """(layer, key) handles for every parameter tensor."""
        out = []
        for layer, bn, _ in self.blocks:
            for key in layer.params:
                out.append((layer, key))
            if bn is not None:
                for key in bn.params:
                    out.append((bn, key))
        return out

    def state_summary(self) -> dict:
        n_params = sum(p.size for l, k in self.trainable() for p in [l.params[k]])
        frozen = sum(int(m.sum()) for l in self.conv_layers
                     for m in l.frozen.values())
        return {"n_f": self.n_f, "max_dilation": self.max_dilation,
                "parameters": n_params, "frozen": frozen,
                "identity_residual": self.identity_residual}

    def save(self, path) -> None:
        header = {
            "version": 1,
            "n_f": self.n_f,
            "max_dilation": self.max_dilation,
            "layers": [
                {
                    "kind": "deconv" if isinstance(l, ConvTranspose2D) else "conv",
                    "k": l.k,
                    "dilation": l.dilation,
                    "stride": l.stride,
                    "c_in": l.c_in,
                    "c_out": l.c_out,
                    "bn": bn is not None,
                }
                for l, bn, _ in self.blocks
            ],
            "frozen": [
                base64.b64encode(
                    np.packbits(l.frozen["w"].reshape(-1))
                ).decode("ascii") if "w" in l.frozen else None
                for l in self.conv_layers
            ],
            "identity_residual": self.identity_residual,
        }
        blob = json.dumps(header).encode("utf-8")
        chunks = [MAGIC, struct.pack("<I", len(blob)), blob]
        for layer, bn, _ in self.blocks:
            chunks.append(layer.params["w"].astype("<f4").tobytes())
            chunks.append(layer.params["b"].astype("<f4").tobytes())
            if bn is not None:
                chunks.append(bn.params["gamma"].astype("<f4").tobytes())
                chunks.append(bn.params["beta"].astype("<f4").tobytes())
                chunks.append(bn.running_mean.astype("<f4").tobytes())
                chunks.append(bn.running_var.astype("<f4").tobytes())
        Path(path).write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path) -> "FillerNet":
        raw = Path(path).read_bytes()
        if raw[:8] != MAGIC:
            raise ShapeError(f"not a {MAGIC.decode()} weight file")
        (hlen,) = struct.unpack("<I", raw[8:12])
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
        if header["version"] != 1:
            raise ShapeError(f"unsupported weight file version {header['version']}")
        net = cls(n_f=header["n_f"], max_dilation=header["max_dilation"])
        net.identity_residual = header.get("identity_residual")
        off = 12 + hlen

        def take(shape):
            nonlocal off
            n = int(np.prod(shape))
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
            off += 4 * n
            return arr.reshape(shape).astype(np.float32).copy()

        for (layer, bn, _), spec, fz in zip(net.blocks, header["layers"], header["frozen"]):
            if (layer.c_in, layer.c_out, layer.k) != (spec["c_in"], spec["c_out"], spec["k"]):
                raise ShapeError("weight file does not match the architecture")
            layer.params["w"] = take(layer.params["w"].shape)
            layer.params["b"] = take(layer.params["b"].shape)
            if fz is not None:
                bits = np.unpackbits(
                    np.frombuffer(base64.b64decode(fz), dtype=np.uint8)
                )[: layer.params["w"].size]
                layer.frozen["w"] = bits.astype(bool).reshape(layer.params["w"].shape)
            if bn is not None:
                bn.params["gamma"] = take(bn.params["gamma"].shape)
                bn.params["beta"] = take(bn.params["beta"].shape)
                bn.running_mean = take(bn.running_mean.shape).astype(np.float64)
                bn.running_var = take(bn.running_var.shape).astype(np.float64)
            layer.zero_grads()
            if bn is not None:
                bn.zero_grads()
        return net
