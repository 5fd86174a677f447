"""Binary frame format and control-channel constants.

Frames are a 24-byte little-endian header followed by the payload:

    u32 magic 0x47424E31 | u32 frame id | u16 width | u16 height |
    u8 channels | u8 modality | u16 reserved | f32 reward | u32 payload bytes

Payloads: rgb_pre/rgb_post/normal are 8-bit RGB triples; depth is float32;
semantic is uint16. Control messages are UTF-8 JSON, newline-free, one per
transport frame, at most 1 MiB.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ProtocolError
from ..geometry import EquirectImage

PROTOCOL_VERSION = 1
FRAME_MAGIC = 0x47424E31
HEADER_FMT = "<IIHHBBHfI"
HEADER_SIZE = struct.calcsize(HEADER_FMT)
MAX_MESSAGE_BYTES = 1 << 20

MODALITY_CODES = {"rgb_pre": 0, "rgb_post": 1, "depth": 2, "normal": 3, "semantic": 4}
MODALITY_NAMES = {v: k for k, v in MODALITY_CODES.items()}

assert HEADER_SIZE == 24


@dataclass(frozen=True)
class FrameMessage:
    frame_id: int
    width: int
    height: int
    channels: int
    modality: str
    reward: float
    payload: bytes

    def to_array(self) -> np.ndarray:
        """Decode the payload into an (H, W[, 3]) array in natural units."""
        if self.modality in ("rgb_pre", "rgb_post", "normal"):
            arr = np.frombuffer(self.payload, dtype=np.uint8)
            return arr.reshape(self.height, self.width, 3).astype(np.float32) / 255.0
        if self.modality == "depth":
            arr = np.frombuffer(self.payload, dtype="<f4")
            return arr.reshape(self.height, self.width).astype(np.float32)
        arr = np.frombuffer(self.payload, dtype="<u2")
        return arr.reshape(self.height, self.width).astype(np.int32)


def encode_frame(frame_id: int, modality: str, reward: float,
                 image: EquirectImage) -> bytes:
    if modality not in MODALITY_CODES:
        raise ProtocolError(f"unknown modality {modality!r}")
    if modality in ("rgb_pre", "rgb_post", "normal"):
        payload = np.clip(np.rint(image.data * 255.0), 0, 255) \
            .astype(np.uint8).tobytes()
        channels = 3
    elif modality == "depth":
        payload = image.data.astype("<f4").tobytes()
        channels = 1
    else:  # semantic
        payload = np.clip(np.rint(image.data), 0, 65535).astype("<u2").tobytes()
        channels = 1
    header = struct.pack(
        HEADER_FMT, FRAME_MAGIC, frame_id, image.width, image.height,
        channels, MODALITY_CODES[modality], 0, float(reward), len(payload),
    )
    return header + payload


def decode_frame(data: bytes) -> FrameMessage:
    if len(data) < HEADER_SIZE:
        raise ProtocolError(f"frame shorter than the {HEADER_SIZE}-byte header")
    magic, frame_id, width, height, channels, modality_code, _reserved, reward, n = \
        struct.unpack(HEADER_FMT, data[:HEADER_SIZE])
    if magic != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic 0x{magic:08x}")
    if modality_code not in MODALITY_NAMES:
        raise ProtocolError(f"unknown modality code {modality_code}")
    payload = data[HEADER_SIZE:]
    if len(payload) != n:
        raise ProtocolError(f"payload length {len(payload)} != header claim {n}")
    modality = MODALITY_NAMES[modality_code]
    expected = width * height * {"rgb_pre": 3, "rgb_post": 3, "normal": 3,
                                 "depth": 4, "semantic": 2}[modality]
    if n != expected:
        raise ProtocolError(f"payload size {n} wrong for {modality} {width}x{height}")
    return FrameMessage(frame_id, width, height, channels, modality,
                        float(reward), payload)
