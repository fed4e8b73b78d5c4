"""Single-layer image dumps as binary PGM (P5) / PPM (P6)."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np

FILL = -1.0


@lru_cache(maxsize=None)
def viridis_lut() -> np.ndarray:
    """The 256-entry viridis table shipped in ``data/viridis.txt`` as (256, 3) uint8."""
    text = resources.files("labits").joinpath("data/viridis.txt").read_text()
    rows = [line.split() for line in text.splitlines() if line and not line.startswith("#")]
    lut = np.array(rows, dtype=np.uint8)
    if lut.shape != (256, 3):
        raise ValueError(f"viridis table has shape {lut.shape}")
    lut.setflags(write=False)
    return lut


def to_u8(layer, scale="affine"):
    """Map a layer to 0..255.

    ``affine`` maps [-1, 1] linearly, rounding half away from zero (0.0 -> 128).
    ``minmax`` stretches the layer's own range; -1 fill pixels map to 0.
    """
    layer = np.asarray(layer, dtype=np.float64)
    if scale == "affine":
        x = (np.clip(layer, -1.0, 1.0) + 1.0) / 2.0 * 255.0
    elif scale == "minmax":
        lo, hi = float(layer.min()), float(layer.max())
        x = np.zeros_like(layer) if hi == lo else (layer - lo) / (hi - lo) * 255.0
        x[layer == FILL] = 0.0
    else:
        raise ValueError(f"unknown scale {scale!r}")
    # x >= 0, so floor(x + 0.5) is round-half-away-from-zero
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def encode_pnm(image) -> bytes:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode image of shape {image.shape}")
    h, w = image.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode() + image.tobytes()


def decode_pnm(data) -> np.ndarray:
    """Reads what :func:`encode_pnm` writes (no comments, maxval 255)."""
    data = bytes(data)
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    # exactly one whitespace byte separates the header from the raster
    body = data[pos + 1 :]
    magic, w, h, maxval = fields
    w, h = int(w), int(h)
    if int(maxval) != 255:
        raise ValueError("only 8-bit images are supported")
    channels = {b"P5": 1, b"P6": 3}[magic]
    img = np.frombuffer(body, dtype=np.uint8, count=w * h * channels)
    return img.reshape(h, w) if channels == 1 else img.reshape(h, w, 3)


def render_layer(tensor, layer, colormap="gray", scale="affine") -> bytes:
    tensor = np.asarray(tensor)
    if not 0 <= layer < tensor.shape[0]:
        raise IndexError(f"layer {layer} out of range for {tensor.shape[0]} channels")
    q = to_u8(tensor[layer], scale)
    if colormap == "gray":
        return encode_pnm(q)
    if colormap == "viridis":
        return encode_pnm(viridis_lut()[q])
    raise ValueError(f"unknown colormap {colormap!r}")
