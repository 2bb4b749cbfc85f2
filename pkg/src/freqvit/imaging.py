"""Bicubic resampling and random square crops."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._ext import resample as _resample
from .coreio import Prng, as_image

log = logging.getLogger(__name__)

DEFAULT_A = -0.5

GLOBAL_SCALE = (0.32, 1.0)
LOCAL_SCALE = (0.05, 0.32)


@dataclass(frozen=True)
class CropSpec:
    top: int
    left: int
    side: int
    height: int
    width: int

    def __post_init__(self):
        if self.side < 1 or self.top < 0 or self.left < 0:
            raise ValueError(f"invalid crop {self}")
        if self.top + self.side > self.height or self.left + self.side > self.width:
            raise ValueError(f"crop {self} exceeds the source image")

    def apply(self, img: np.ndarray) -> np.ndarray:
        return img[self.top : self.top + self.side, self.left : self.left + self.side]


def kernel_weight(t, a: float = DEFAULT_A):
    """Cubic convolution kernel; accepts scalars or arrays."""
    x = np.abs(np.asarray(t, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    w = np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))
    return float(w) if w.ndim == 0 else w


@lru_cache(maxsize=256)
def _taps(n_in: int, n_out: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    # Output index u samples the source at x = u * n_in / n_out (corner
    # anchored); taps at floor(x) + {-1, 0, 1, 2}, clamped to the border.
    u = np.arange(n_out, dtype=np.float64)
    x = u * (n_in / n_out)
    x0 = np.floor(x)
    frac = x - x0
    offsets = np.arange(-1, 3, dtype=np.float64)
    weights = kernel_weight(offsets[None, :] - frac[:, None], a)
    idx = np.clip(x0[:, None].astype(np.int64) + np.arange(-1, 3)[None, :], 0, n_in - 1)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    weights.setflags(write=False)
    idx.setflags(write=False)
    return idx, weights


def resize_matrix(n_in: int, n_out: int, a: float = DEFAULT_A) -> np.ndarray:
    """Dense ``(n_out, n_in)`` matrix of the 1-D resampling map (border folded in)."""
    idx, w = _taps(n_in, n_out, float(a))
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for m in range(4):
        np.add.at(mat, (np.arange(n_out), idx[:, m]), w[:, m])
    return mat


def resize_bicubic(
    img: np.ndarray, out_h: int, out_w: int, a: float = DEFAULT_A, clamp: bool = True
) -> np.ndarray:
    """Resize an HxWxC array with the separable 4x4 cubic kernel.

    With ``clamp`` (the default for images) results are clipped to [0, 1].
    Non-image data such as positional grids pass ``clamp=False`` and any
    float dtype; images come back as float32.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    arr = np.asarray(img)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected HxW or HxWxC input, got shape {arr.shape}")
    h, w = arr.shape[:2]
    out_dtype = np.float32 if clamp else (arr.dtype if arr.dtype.kind == "f" else np.float64)
    if (h, w) == (out_h, out_w):
        # frac is 0 everywhere, the kernel reduces to the identity
        out = arr.astype(np.float64)
        if clamp:
            out = np.clip(out, 0.0, 1.0)
    else:
        ix, wx = _taps(w, out_w, float(a))
        iy, wy = _taps(h, out_h, float(a))
        out = _resample.resize_separable(arr.astype(np.float64), ix, wx, iy, wy, bool(clamp))
    out = np.asarray(out).astype(out_dtype)
    return out[:, :, 0] if squeeze else out


def sample_crop(rng: Prng, height: int, width: int, s_min: float, s_max: float) -> CropSpec:
    """Draw a square crop with area ratio s ~ U(s_min, s_max)."""
    if s_min > s_max:
        raise ValueError(f"s_min ({s_min}) > s_max ({s_max})")
    if not (0.05 <= s_min and s_max <= 1.0):
        raise ValueError(f"scale bounds must lie in [0.05, 1.0], got ({s_min}, {s_max})")
    if s_min < 0.08:
        log.debug("crop scale s_min=%.3f is below 0.08", s_min)
    s = s_min + (s_max - s_min) * rng.uniform()
    side = int(round(math.sqrt(s * height * width)))
    side = max(1, min(side, height, width))
    top = rng.integers(0, height - side + 1)
    left = rng.integers(0, width - side + 1)
    return CropSpec(top, left, side, height, width)


@dataclass(frozen=True)
class CropConfig:
    global_out: int = 224
    local_out: int = 96
    n_local: int = 8
    global_scale: tuple[float, float] = GLOBAL_SCALE
    local_scale: tuple[float, float] = LOCAL_SCALE
    n_global: int = 2


def global_local_crops(
    rng: Prng, img: np.ndarray, cfg: CropConfig
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Multi-crop views: ``n_global`` large crops and ``n_local`` small ones."""
    img = as_image(img)
    h, w = img.shape[:2]
    views = []
    for k in range(cfg.n_global + cfg.n_local):
        is_global = k < cfg.n_global
        lo, hi = cfg.global_scale if is_global else cfg.local_scale
        out = cfg.global_out if is_global else cfg.local_out
        crop = sample_crop(rng, h, w, lo, hi)
        views.append(resize_bicubic(crop.apply(img), out, out))
    return views[: cfg.n_global], views[cfg.n_global :]
