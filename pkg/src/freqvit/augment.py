"""Gaussian noise patching and a frequency-grouped corruption catalog."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .coreio import Prng, as_image
from .imaging import resize_bicubic

__all__ = [
    "CORRUPTION_GROUPS",
    "SEVERITY_TABLE",
    "CorruptionSpec",
    "GaussianPatchCfg",
    "PatchMode",
    "apply_corruption",
    "apply_gaussian_patch",
    "catalog_from_csv",
    "catalog_to_csv",
    "corruption_catalog",
]


class PatchMode(str, Enum):
    MULTIPLY = "multiply"
    REPLACE = "replace"


@dataclass(frozen=True)
class GaussianPatchCfg:
    side_fraction: float = 0.5
    scale: float = 0.5
    probability: float = 0.5
    mode: PatchMode = PatchMode.MULTIPLY

    def __post_init__(self):
        if not 0.0 <= self.side_fraction < 1.0:
            raise ValueError(f"side_fraction must be in [0, 1), got {self.side_fraction}")
        if self.scale < 0.0:
            raise ValueError(f"scale must be >= 0, got {self.scale}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        object.__setattr__(self, "mode", PatchMode(self.mode))

    def side(self, height: int, width: int) -> int:
        return int(math.floor(self.side_fraction * min(height, width)))


def apply_gaussian_patch(img, rng: Prng, cfg: GaussianPatchCfg, return_box: bool = False):
    """Perturb one random square patch with per-pixel noise drawn from N(1, scale^2).

    In the default multiply mode every value x in the patch becomes
    clip(x * n, 0, 1); pixels outside the patch are returned untouched.
    With ``return_box`` the ``(top, left, side)`` of the patch (or None when
    the coin flip skipped it) is returned alongside the image.
    """
    img = as_image(img)
    out = img.copy()
    h, w, c = img.shape
    box = None
    side = cfg.side(h, w)
    if rng.uniform() < cfg.probability and side > 0:
        top = rng.integers(0, h - side + 1)
        left = rng.integers(0, w - side + 1)
        noise = 1.0 + cfg.scale * rng.gaussian((side, side, c))
        region = img[top : top + side, left : left + side].astype(np.float64)
        if cfg.mode is PatchMode.MULTIPLY:
            patched = region * noise
        else:
            patched = noise
        out[top : top + side, left : left + side] = np.clip(patched, 0.0, 1.0)
        box = (top, left, side)
    return (out, box) if return_box else out


# ----------------------------------------------------------------- corruptions

CORRUPTION_GROUPS = {
    "brightness": "low",
    "contrast": "low",
    "gaussian_blur": "mid",
    "gaussian_noise": "high",
    "shot_noise": "high",
    "impulse_noise": "high",
    "speckle_noise": "high",
    "pixelate": "hybrid",
}

# Per-severity parameters, levels 1..5. Frozen by tests/test_augment.py.
SEVERITY_TABLE: dict[str, tuple[str, tuple[float, ...]]] = {
    "gaussian_noise": ("sigma", (0.04, 0.06, 0.08, 0.09, 0.10)),
    "shot_noise": ("rate", (250.0, 100.0, 50.0, 30.0, 20.0)),
    "impulse_noise": ("fraction", (0.01, 0.02, 0.04, 0.06, 0.08)),
    "speckle_noise": ("sigma", (0.10, 0.15, 0.20, 0.25, 0.30)),
    "gaussian_blur": ("sigma", (0.5, 0.75, 1.0, 1.5, 2.0)),
    "contrast": ("factor", (0.75, 0.6, 0.45, 0.3, 0.2)),
    "brightness": ("shift", (0.1, 0.2, 0.3, 0.4, 0.5)),
    "pixelate": ("fraction", (0.75, 0.6, 0.5, 0.4, 0.3)),
}

KINDS = tuple(SEVERITY_TABLE)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    param: float | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.kind not in SEVERITY_TABLE:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 1 <= self.severity <= 5:
            raise ValueError(f"severity must be in 1..5, got {self.severity}")

    @property
    def group(self) -> str:
        return CORRUPTION_GROUPS[self.kind]

    @property
    def param_name(self) -> str:
        return SEVERITY_TABLE[self.kind][0]

    @property
    def value(self) -> float:
        if self.param is not None:
            return float(self.param)
        return SEVERITY_TABLE[self.kind][1][self.severity - 1]


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge replication; float64 in and out."""
    if sigma <= 0:
        return img.astype(np.float64)
    k = _gaussian_kernel(sigma)
    r = len(k) // 2
    x = img.astype(np.float64)
    h, w = x.shape[:2]
    cols = np.clip(np.arange(w)[:, None] + np.arange(-r, r + 1)[None, :], 0, w - 1)
    x = np.einsum("hwkc,k->hwc", x[:, cols, :], k)
    rows = np.clip(np.arange(h)[:, None] + np.arange(-r, r + 1)[None, :], 0, h - 1)
    return np.einsum("hkwc,k->hwc", x[rows, :, :], k)


def apply_corruption(img, rng: Prng, spec: CorruptionSpec) -> np.ndarray:
    img = as_image(img)
    x = img.astype(np.float64)
    v = spec.value
    kind = spec.kind
    if kind == "gaussian_noise":
        out = x + v * rng.gaussian(x.shape)
    elif kind == "shot_noise":
        out = rng.poisson(x * v) / v
    elif kind == "impulse_noise":
        u = rng.uniform(x.shape)
        salt = rng.uniform(x.shape) < 0.5
        out = np.where(u < v, np.where(salt, 1.0, 0.0), x)
    elif kind == "speckle_noise":
        out = x * (1.0 + v * rng.gaussian(x.shape))
    elif kind == "gaussian_blur":
        out = gaussian_blur(x, v)
    elif kind == "contrast":
        mean = x.mean(axis=(0, 1), keepdims=True)
        out = mean + v * (x - mean)
    elif kind == "brightness":
        out = x + v
    elif kind == "pixelate":
        h, w = x.shape[:2]
        small = resize_bicubic(img, max(1, round(h * v)), max(1, round(w * v)))
        return resize_bicubic(small, h, w)
    else:  # guarded by CorruptionSpec, kept for hand-built specs
        raise ValueError(f"unknown corruption kind {kind!r}")
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def corruption_catalog() -> list[CorruptionSpec]:
    return [CorruptionSpec(kind, s) for kind in KINDS for s in range(1, 6)]


def catalog_to_csv(specs) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "severity", "group", "params"])
    for spec in specs:
        writer.writerow([spec.kind, spec.severity, spec.group, f"{spec.param_name}={spec.value!r}"])
    return buf.getvalue()


def catalog_from_csv(text: str) -> list[CorruptionSpec]:
    """Inverse of :func:`catalog_to_csv`; a ``params`` value overrides the table."""
    specs = []
    for row in csv.DictReader(io.StringIO(text)):
        spec = CorruptionSpec(row["kind"], int(row["severity"]))
        params = (row.get("params") or "").strip()
        if params:
            name, _, value = params.partition("=")
            if name != spec.param_name:
                raise ValueError(f"{spec.kind}: expected parameter {spec.param_name!r}, got {name!r}")
            if float(value) != spec.value:
                spec = CorruptionSpec(spec.kind, spec.severity, float(value))
        if row.get("group") and row["group"] != spec.group:
            raise ValueError(f"{spec.kind}: group {row['group']!r} disagrees with {spec.group!r}")
        specs.append(spec)
    return specs
