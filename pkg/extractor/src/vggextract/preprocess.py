"""Image resizing policies and network input preparation."""

from dataclasses import dataclass

import numpy as np
from PIL import Image

# channel means subtracted from 0-255 RGB input, the usual VGG training means
RGB_MEANS = (123.68, 116.779, 103.939)

STRATEGIES = ("two_fixed", "one_fixed", "free")


@dataclass(frozen=True)
class ResizePolicy:
    strategy: str
    size: int = 0  # unused for "free"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown resize strategy {self.strategy!r}")
        if self.strategy != "free" and self.size < 1:
            raise ValueError(f"strategy {self.strategy!r} needs a positive size")

    @classmethod
    def parse(cls, text):
        """Parse CLI syntax: "free", "one:800" or "two:864"."""
        if text == "free":
            return cls("free")
        kind, sep, size = text.partition(":")
        if not sep or kind not in ("one", "two"):
            raise ValueError(f"expected free, one:SIZE or two:SIZE, got {text!r}")
        return cls("one_fixed" if kind == "one" else "two_fixed", int(size))


def resize_image(img: Image.Image, policy: ResizePolicy):
    """Apply a resizing policy with bilinear interpolation."""
    if policy.strategy == "free":
        return img
    if policy.strategy == "two_fixed":
        return img.resize((policy.size, policy.size), Image.BILINEAR)
    w, h = img.size
    short = min(w, h)
    scale = policy.size / short
    new_w = policy.size if w == short else round(w * scale)
    new_h = policy.size if h == short else round(h * scale)
    return img.resize((new_w, new_h), Image.BILINEAR)


def ensure_min_side(img: Image.Image, min_side):
    """Upscale (aspect preserved) so the short side reaches min_side."""
    w, h = img.size
    if min(w, h) >= min_side:
        return img
    scale = min_side / min(w, h)
    if w <= h:
        return img.resize((min_side, max(min_side, round(h * scale))), Image.BILINEAR)
    return img.resize((max(min_side, round(w * scale)), min_side), Image.BILINEAR)


def to_network_input(img: Image.Image):
    """RGB image -> 1x3xHxW float32 array with channel means subtracted."""
    rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    rgb -= np.array(RGB_MEANS, dtype=np.float32)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))[None]
