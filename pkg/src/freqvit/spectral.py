"""2-D DFT helpers, Fourier basis perturbations and error-sensitivity heatmaps."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .coreio import Prng, derive, map_ordered, save_image

__all__ = [
    "HeatmapGrid",
    "band_energy",
    "dft2",
    "fourier_basis",
    "idft2",
    "radial_frequency",
    "sample_per_class",
    "sensitivity_heatmap",
]


def _check_square_pow2(x: np.ndarray) -> int:
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square 2-D array, got shape {x.shape}")
    n = x.shape[0]
    if n < 1 or n & (n - 1):
        raise ValueError(f"size must be a power of two, got {n}")
    return n


def dft2(x: np.ndarray) -> np.ndarray:
    """Unitary 2-D DFT of an n x n array, DC at index (0, 0)."""
    _check_square_pow2(np.asarray(x))
    return np.fft.fft2(np.asarray(x, dtype=np.float64), norm="ortho")


def idft2(spec: np.ndarray) -> np.ndarray:
    _check_square_pow2(np.asarray(spec))
    return np.fft.ifft2(spec, norm="ortho")


def radial_frequency(n: int) -> np.ndarray:
    """Radius |f| of every unshifted DFT bin, in cycles per image."""
    f = np.fft.fftfreq(n) * n
    return np.hypot(f[:, None], f[None, :])


def band_energy(x: np.ndarray, cutoff: float) -> tuple[float, float]:
    """(low, high) spectral energy split at radius ``cutoff`` (cycles per image).

    Works on an n x n channel or an n x n x C image (summed over channels).
    """
    arr = np.asarray(x, dtype=np.float64)
    chans = [arr] if arr.ndim == 2 else [arr[:, :, k] for k in range(arr.shape[2])]
    r = radial_frequency(chans[0].shape[0])
    low = high = 0.0
    for ch in chans:
        p = np.abs(dft2(ch)) ** 2
        low += float(p[r <= cutoff].sum())
        high += float(p[r > cutoff].sum())
    return low, high


def _canonical(i: int, n: int) -> int:
    if not -(n // 2) <= i <= n // 2:
        raise ValueError(f"frequency index {i} outside [-{n // 2}, {n // 2}]")
    return i % n


def fourier_basis(i: int, j: int, n: int) -> np.ndarray:
    """Real n x n unit-norm matrix whose spectrum sits on (i, j) and its mirror.

    ``i`` and ``j`` are signed frequencies in [-n/2, n/2] (the two ends alias);
    (0, 0) is DC.
    """
    ki, kj = _canonical(i, n), _canonical(j, n)
    mi, mj = (-ki) % n, (-kj) % n
    freq = np.zeros((n, n), dtype=np.complex128)
    if (mi, mj) == (ki, kj):
        freq[ki, kj] = 1.0
    else:
        freq[ki, kj] = 0.5 + 0.5j
        freq[mi, mj] = 0.5 - 0.5j
    basis = np.real(np.fft.ifft2(freq)) * n
    return basis / np.linalg.norm(basis)


# ------------------------------------------------------------------- heatmaps


@dataclass
class HeatmapGrid:
    """Error rates per frequency; cell (r, c) holds frequency (r - n//2, c - n//2).

    DC therefore sits at the centre cell, low frequencies around it.
    """

    values: np.ndarray
    perturbation_norm: float
    clean_error: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def frequency(self, row: int, col: int) -> tuple[int, int]:
        return row - self.n // 2, col - self.n // 2

    @property
    def dc_cell(self) -> tuple[int, int]:
        return self.n // 2, self.n // 2

    def radius(self) -> np.ndarray:
        f = np.arange(self.n) - self.n // 2
        return np.hypot(f[:, None], f[None, :])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# perturbation_norm={self.perturbation_norm!r} clean_error={self.clean_error!r}\n")
        for k in sorted(self.meta):
            buf.write(f"# {k}={self.meta[k]}\n")
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.values:
            writer.writerow([f"{v:.6f}" for v in row])
        return buf.getvalue()

    def write(self, stem: str | os.PathLike) -> list[Path]:
        """Write ``stem.csv``, a min-max normalised ``stem.pgm`` and ``stem.txt``."""
        stem = Path(stem)
        lo, hi = float(self.values.min()), float(self.values.max())
        span = hi - lo
        norm = (self.values - lo) / span if span > 0 else np.zeros_like(self.values)
        paths = [stem.with_suffix(".csv"), stem.with_suffix(".pgm"), stem.with_suffix(".txt")]
        paths[0].write_text(self.to_csv())
        save_image(norm[:, :, None], paths[1])
        lines = [
            f"pgm_normalization=min-max",
            f"pgm_black={lo!r}",
            f"pgm_white={hi!r}",
            f"layout=row r, col c -> frequency (r - {self.n // 2}, c - {self.n // 2}); DC at centre",
            f"perturbation_norm={self.perturbation_norm!r}",
            f"clean_error={self.clean_error!r}",
        ]
        lines += [f"{k}={self.meta[k]}" for k in sorted(self.meta)]
        paths[2].write_text("\n".join(lines) + "\n")
        return paths


def sample_per_class(labels: Sequence[int], per_class: int, rng: Prng) -> np.ndarray:
    """Indices of ``per_class`` examples drawn without replacement from each class."""
    labels = np.asarray(labels)
    picked = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        order = rng.permutation(len(members))
        picked.extend(members[order[:per_class]].tolist())
    return np.sort(np.asarray(picked, dtype=np.int64))


def sensitivity_heatmap(
    predict: Callable[[np.ndarray], np.ndarray],
    images: np.ndarray,
    labels: np.ndarray,
    v: float | None = None,
    seed: int = 0,
    per_class: int | None = 5,
    resolution: int | None = None,
    clip: bool = True,
    threads: int | None = 1,
) -> HeatmapGrid:
    """Error rate of ``predict`` under a single-frequency perturbation, per frequency.

    ``predict`` maps a (B, n, n, C) batch to integer labels. Each sampled image
    gets r * v * U(i, j) added to every channel with a per-image random sign r.
    ``v`` defaults to 4/255 * n, i.e. a per-pixel amplitude of about 4/255.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise ValueError("empty dataset")
    n = images.shape[1]
    if images.shape[2] != n:
        raise ValueError(f"images must be square, got {images.shape[1:3]}")
    if resolution is not None and resolution != n:
        raise ValueError(f"model expects {resolution}x{resolution} inputs, dataset is {n}x{n}")
    if v is None:
        v = 4.0 / 255.0 * n
    if per_class is not None:
        idx = sample_per_class(labels, per_class, derive(seed, 0, 0, domain=40))
        images, labels = images[idx], labels[idx]
    sign_rng = derive(seed, 0, 1, domain=40)
    signs = np.where(sign_rng.uniform(len(images)) < 0.5, -1.0, 1.0)

    clean_error = float(np.mean(np.asarray(predict(images)) != labels))
    half = n // 2

    def cell(f: int) -> int:
        return (f + half) % n

    # the mirrored frequency spans the same real subspace, so each pair is
    # evaluated once
    todo, seen = [], set()
    for r in range(n):
        for c in range(n):
            if (r, c) not in seen:
                fi, fj = r - half, c - half
                todo.append((fi, fj))
                seen.update({(r, c), (cell(-fi), cell(-fj))})
    scaled = v * signs

    def error_at(freq: tuple[int, int]) -> float:
        basis = fourier_basis(freq[0], freq[1], n)
        pert = images.astype(np.float64) + scaled[:, None, None, None] * basis[None, :, :, None]
        if clip:
            pert = np.clip(pert, 0.0, 1.0)
        return float(np.mean(np.asarray(predict(pert.astype(np.float32))) != labels))

    values = np.full((n, n), np.nan)
    for (fi, fj), err in zip(todo, map_ordered(error_at, todo, threads)):
        values[cell(fi), cell(fj)] = values[cell(-fi), cell(-fj)] = err
    meta = {
        "images": len(images),
        "per_class": per_class,
        "resolution": n,
        "channels": images.shape[3],
        "sign": "random per image",
        "per_channel": "same basis added to every channel",
        "seed": seed,
    }
    return HeatmapGrid(values=values, perturbation_norm=float(v), clean_error=clean_error, meta=meta)
