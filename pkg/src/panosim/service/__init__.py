from .app import ServiceAssets, create_app
from .protocol import (
    FRAME_MAGIC,
    HEADER_SIZE,
    MAX_MESSAGE_BYTES,
    MODALITY_CODES,
    PROTOCOL_VERSION,
    FrameMessage,
    decode_frame,
    encode_frame,
)

__all__ = [
    "FRAME_MAGIC",
    "HEADER_SIZE",
    "MAX_MESSAGE_BYTES",
    "MODALITY_CODES",
    "PROTOCOL_VERSION",
    "FrameMessage",
    "ServiceAssets",
    "create_app",
    "decode_frame",
    "encode_frame",
]
