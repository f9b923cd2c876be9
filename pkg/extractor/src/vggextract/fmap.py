"""Writer for the .fmap activation container consumed by the descriptor toolkit.

Layout (little-endian): "FMAP", version byte 1, dtype byte 1 (float32), two
reserved zero bytes, u32 K/H/W, then K*H*W float32 values channel-major.
"""

import struct

import numpy as np

_HEADER = struct.Struct("<4sBBHIII")


def write_fmap(data, path):
    """Write one K x H x W float32 tensor as a .fmap file."""
    data = np.ascontiguousarray(data, dtype=np.float32)
    if data.ndim != 3 or min(data.shape) < 1:
        raise ValueError(f"expected a non-empty 3-d tensor, got shape {data.shape}")
    k, h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"FMAP", 1, 1, 0, k, h, w))
        fh.write(data.astype("<f4", copy=False).tobytes())
