"""PNG image input/output.

Images are 8-bit RGB on disk and float64 RGB in [0, 1] in memory; quantization
is linear rounding by 255 so a save/load round trip is stable.
"""

import io

import numpy as np
from PIL import Image as PilImage

from ._util import atomic_write_bytes
from .core import Image


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)


def encode_png(image) -> bytes:
    """PNG bytes for an Image or an (H, W, 3) float array."""
    pixels = image.pixels if isinstance(image, Image) else np.asarray(image)
    buf = io.BytesIO()
    PilImage.fromarray(to_uint8(pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(image, path):
    atomic_write_bytes(path, encode_png(image))


def load_png(path) -> Image:
    with PilImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return Image(arr)
