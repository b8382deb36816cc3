"""Binary PPM (P6, maxval 255) reader/writer: the lossless interchange format."""

from __future__ import annotations

import numpy as np


class PpmError(Exception):
    pass


def write_ppm(path, pixels: np.ndarray) -> None:
    """pixels: (H, W, 3) uint8."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise PpmError(f"expected (H, W, 3) uint8 array, got {pixels.shape} {pixels.dtype}")
    h, w = pixels.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def _read_token(f):
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise PpmError("unexpected end of file in header")
        if ch.isspace():
            if tok:
                return tok
            continue
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        tok += ch


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_token(f) != b"P6":
            raise PpmError("not a binary PPM (P6) file")
        w = int(_read_token(f))
        h = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 255:
            raise PpmError(f"unsupported maxval {maxval}")
        raw = f.read(w * h * 3)
        if len(raw) != w * h * 3:
            raise PpmError("truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()
