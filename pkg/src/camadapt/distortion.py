"""True pristine-to-distorted mappings: blur, sensor noise, JPEG, and PSNR.

A simplified camera is the chain blur -> AWGN -> JPEG round-trip, ordered
along the imaging pipeline (optics, sensor, on-chip coding). The named
models A..F are the fixed (sigma_b, sigma_n, compression level) triples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from . import jpegcodec


class DistortionError(Exception):
    pass


@dataclass(frozen=True)
class CameraModelParams:
    sigma_blur: float
    sigma_noise: float
    compression_level: int

    def __post_init__(self):
        if self.sigma_blur < 0 or self.sigma_noise < 0:
            raise DistortionError("sigma values must be >= 0")
        if not 1 <= self.compression_level <= 100:
            raise DistortionError("compression level must be in [1, 100]")


CAMERA_MODELS = {
    "A": CameraModelParams(1, 5, 34),
    "B": CameraModelParams(1, 5, 26),
    "C": CameraModelParams(1, 10, 34),
    "D": CameraModelParams(3, 5, 34),
    "E": CameraModelParams(3, 10, 34),
    "F": CameraModelParams(3, 10, 18),
}


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized square kernel of side 2*ceil(3*sigma)+1."""
    if sigma <= 0:
        raise DistortionError("gaussian_kernel requires sigma > 0")
    radius = math.ceil(3 * sigma)
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g1 = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    k = np.outer(g1, g1)
    return k / k.sum()


def _check_image(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DistortionError(
            f"expected (H, W, 3) uint8 image, got {img.shape} {img.dtype}")
    return img


def blur(image: np.ndarray, sigma: float) -> np.ndarray:
    image = _check_image(image)
    if sigma < 0:
        raise DistortionError("sigma must be >= 0")
    if sigma == 0:
        return image.copy()
    radius = math.ceil(3 * sigma)
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g1 = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    g1 /= g1.sum()
    out = image.astype(np.float64)
    # separable pass of the normalized 2D kernel, reflect borders
    out = convolve1d(out, g1, axis=0, mode="reflect")
    out = convolve1d(out, g1, axis=1, mode="reflect")
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def awgn(image: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    image = _check_image(image)
    if sigma < 0:
        raise DistortionError("sigma must be >= 0")
    if sigma == 0:
        return image.copy()
    rng = np.random.default_rng(seed)
    noisy = image.astype(np.float64) + rng.normal(0.0, sigma, image.shape)
    return np.clip(np.round(noisy), 0, 255).astype(np.uint8)


def jpeg_roundtrip(image: np.ndarray, cl: int) -> np.ndarray:
    image = _check_image(image)
    if cl >= 100:
        # CL 100 quantizes with all-ones tables; still run the codec
        pass
    return jpegcodec.decode(jpegcodec.encode(image, cl))


def apply_camera_model(image: np.ndarray, params: CameraModelParams,
                       seed: int = 0) -> np.ndarray:
    out = blur(image, params.sigma_blur)
    out = awgn(out, params.sigma_noise, seed)
    return jpeg_roundtrip(out, params.compression_level)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DistortionError(f"psnr shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def mean_psnr(pairs) -> float:
    vals = [psnr(a, b) for a, b in pairs]
    if not vals:
        raise DistortionError("mean_psnr over an empty corpus")
    return float(np.mean(vals))


def synthetic_corpus(n: int, size: int = 128, seed: int = 0, kind: str = "scene"):
    """Fixed synthetic test images.

    kind="scene": flat backgrounds with colored rectangles (sharp edges) and
    mild texture, the corpus used for camera-model PSNR ordering and JPEG
    monotonicity checks.

    kind="constant_chroma": a single base color plus an equal luma offset in
    all channels, keeping Cb/Cr exactly constant; used by the decoder-interop
    tests so chroma upsampling policy cannot matter.
    """
    from scipy.ndimage import gaussian_filter

    images = []
    for i in range(n):
        rng = np.random.default_rng(seed * 1000 + i)
        if kind == "scene":
            img = np.full((size, size, 3), rng.integers(80, 176, 3), dtype=np.float64)
            for _ in range(4):
                x0, y0 = rng.integers(0, max(size - 8, 1), 2)
                w, h = rng.integers(4, max(size // 2, 5), 2)
                img[y0:y0 + h, x0:x0 + w] = rng.integers(30, 226, 3)
            img += gaussian_filter(rng.standard_normal((size, size, 1)) * 5,
                                   (1.5, 1.5, 0))
        elif kind == "constant_chroma":
            xx, yy = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size))
            variant = i % 3
            if variant == 0:
                t = 70 * np.sin(4 * xx + i) * np.cos(3 * yy + 0.5 * i)
            elif variant == 1:
                t = -60 + 120 * xx + 15 * np.sin((8 + i) * yy)
            else:
                t = gaussian_filter(50 * rng.standard_normal((size, size)), 2.5)
            t = np.round(np.clip(t, -80, 80)).astype(np.int64)
            base = rng.integers(90, 166, size=3)
            img = base[None, None, :] + t[:, :, None]
        else:
            raise DistortionError(f"unknown corpus kind {kind!r}")
        images.append(np.clip(np.round(img), 0, 255).astype(np.uint8))
    return images
