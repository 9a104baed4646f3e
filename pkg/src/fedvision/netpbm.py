"""Binary PGM (P5) / PPM (P6) reading and writing, maxval 255.

The formats are codec-free, so written files are bit-exact functions of the
pixel array; that property is what the dataset determinism checks hash.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .types import RasterImage


def write_netpbm(image: RasterImage, path: str | Path) -> None:
    """Write a 1-channel image as P5 or a 3-channel image as P6."""
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    Path(path).write_bytes(header + image.pixels.tobytes())


def read_netpbm(path: str | Path) -> RasterImage:
    data = Path(path).read_bytes()
    magic, rest = _next_token(data)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ValueError(f"{path}: unsupported magic {magic!r} (need P5 or P6)")
    width, rest = _next_token(rest)
    height, rest = _next_token(rest)
    maxval, rest = _next_token(rest)
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    # exactly one whitespace byte separates the header from the raster
    raster = rest[1:]
    expected = width * height * channels
    if len(raster) < expected:
        raise ValueError(f"{path}: truncated raster ({len(raster)} < {expected} bytes)")
    pixels = np.frombuffer(raster[:expected], dtype=np.uint8).reshape(
        height, width, channels
    )
    return RasterImage(width, height, channels, pixels.copy())


def _next_token(data: bytes) -> tuple[bytes, bytes]:
    """Pop one header token, skipping whitespace and # comments."""
    i = 0
    while i < len(data):
        c = data[i : i + 1]
        if c == b"#":
            nl = data.find(b"\n", i)
            i = len(data) if nl < 0 else nl + 1
        elif c.isspace():
            i += 1
        else:
            break
    start = i
    while i < len(data) and not data[i : i + 1].isspace():
        i += 1
    if start == i:
        raise ValueError("unexpected end of netpbm header")
    return data[start:i], data[i:]
