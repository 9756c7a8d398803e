"""Probe image degradations: Gaussian blur and bicubic down-sampling.

Both transforms work in float64 and round once at the end (half up), with
edge replication at the borders, so output bytes are reproducible.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import BadDimensions

BLUR_SIGMAS = (1, 2, 3, 4, 5)
RESOLUTIONS = (84, 56, 42, 28)
LADDER_SOURCE_SIZE = 224
MATCHER_INPUT_SIZE = 112
BICUBIC_A = -0.5


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit image held as a ``(height, width, channels)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[2] not in (1, 3) or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected (h, w, 1|3) pixels, got shape {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError("pixels must be uint8")
        p = np.ascontiguousarray(p)
        object.__setattr__(self, "pixels", p)

    @classmethod
    def from_buffer(cls, width: int, height: int, channels: int, data: bytes) -> "RasterImage":
        if len(data) != width * height * channels:
            raise ValueError("pixel buffer length must equal width * height * channels")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width, channels).copy())

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class BlurSpec:
    sigma: float
    kernel_radius: int | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kernel_radius is None:
            object.__setattr__(self, "kernel_radius", max(1, math.ceil(3 * self.sigma)))
        elif self.kernel_radius < 1:
            raise ValueError("kernel_radius must be positive")

    def kernel(self) -> np.ndarray:
        return gaussian_kernel(self.sigma, self.kernel_radius)


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Sampled Gaussian on ``-radius..radius``, normalized to unit sum."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _to_uint8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)


def _correlate_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = (kernel.size - 1) // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    padded = np.pad(a, pad, mode="edge")
    n = a.shape[axis]
    out = np.zeros_like(a, dtype=np.float64)
    for k, w in enumerate(kernel):
        out += w * np.take(padded, np.arange(k, k + n), axis=axis)
    return out


def gaussian_blur(img: RasterImage, spec: BlurSpec) -> RasterImage:
    """Separable blur: horizontal pass, then vertical, per channel."""
    k = spec.kernel()
    a = img.pixels.astype(np.float64)
    a = _correlate_axis(a, k, axis=1)
    a = _correlate_axis(a, k, axis=0)
    return RasterImage(_to_uint8(a))


def cubic_weight(x, a: float = BICUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


@functools.lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int, a: float = BICUBIC_A) -> np.ndarray:
    """``n_out x n_in`` matrix of 1-d bicubic weights, borders folded in.

    Output sample ``i`` sits at source coordinate ``(i + 0.5) * n_in / n_out - 0.5``
    and reads the four neighbours around it, clamped to the valid range.
    The result is cached and read-only.
    """
    M = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        src = (i + 0.5) * n_in / n_out - 0.5
        base = math.floor(src)
        t = src - base
        for m in range(-1, 3):
            j = min(max(base + m, 0), n_in - 1)
            M[i, j] += float(cubic_weight(m - t, a))
    M.flags.writeable = False
    return M


def bicubic_resize(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    """Catmull-Rom resize without low-pass prefiltering on reduction."""
    if out_w < 1 or out_h < 1:
        raise BadDimensions("output dimensions must be positive")
    if (out_w, out_h) == (img.width, img.height):
        return RasterImage(img.pixels.copy())
    Wy = resize_matrix(img.height, out_h)
    Wx = resize_matrix(img.width, out_w)
    h, w, c = img.pixels.shape
    a = img.pixels.astype(np.float64)
    rows = (Wy @ a.reshape(h, w * c)).reshape(out_h, w, c)
    out = np.matmul(Wx, rows)
    return RasterImage(_to_uint8(out))


def degradation_ladder(img: RasterImage, kind: str) -> list[tuple[str, RasterImage]]:
    if kind == "blur":
        return [(f"sigma{s}", gaussian_blur(img, BlurSpec(float(s)))) for s in BLUR_SIGMAS]
    if kind == "resolution":
        if (img.width, img.height) != (LADDER_SOURCE_SIZE, LADDER_SOURCE_SIZE):
            raise BadDimensions(
                f"resolution ladder needs {LADDER_SOURCE_SIZE}x{LADDER_SOURCE_SIZE} input, "
                f"got {img.width}x{img.height}")
        out = []
        for r in RESOLUTIONS:
            small = bicubic_resize(img, r, r)
            out.append((f"res{r}", bicubic_resize(small, MATCHER_INPUT_SIZE, MATCHER_INPUT_SIZE)))
        return out
    raise ValueError(f"unknown ladder kind {kind!r}; expected 'blur' or 'resolution'")


def ladder_tags(kind: str) -> list[str]:
    if kind == "blur":
        return [f"sigma{s}" for s in BLUR_SIGMAS]
    if kind == "resolution":
        return [f"res{r}" for r in RESOLUTIONS]
    raise ValueError(f"unknown ladder kind {kind!r}")


def load_png(path: str | os.PathLike) -> RasterImage:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK", "YCbCr") else "L")
        return RasterImage(np.array(im, dtype=np.uint8))


def save_png(img: RasterImage, path: str | os.PathLike) -> None:
    p = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    Image.fromarray(p).save(path, format="PNG")
