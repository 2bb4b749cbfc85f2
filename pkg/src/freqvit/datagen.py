"""Synthetic two-cue image classes and folder-dataset ingestion.

Every class owns a low-frequency cue (a soft blob at a class-specific
position) and a high-frequency cue (a fine sinusoidal grating at a
class-specific orientation). ``cue_mix`` sets their relative strength:
1 keeps only the blob, 0 only the grating.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coreio import as_image, derive, load_image, map_ordered, quantize, save_image

__all__ = [
    "DatasetManifest",
    "SynthCfg",
    "generate_synth",
    "load_dataset",
    "scan_dataset",
    "synth_arrays",
    "synth_image",
]

DOMAIN_SYNTH = 20
_SPLITS = {"train": 0, "val": 1}
MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class SynthCfg:
    classes: int = 10
    per_class: int = 100
    resolution: int = 32
    cue_mix: float = 0.5
    seed: int = 0
    noise: float = 0.02
    # a broad blob near the border survives random crops, which keeps the
    # class cue consistent across the views of one image
    blob_radius: float = 0.45  # ring radius of blob centres, fraction of side
    blob_sigma: float = 0.3  # blob std, fraction of side
    blob_jitter: float = 0.03  # centre jitter, fraction of side
    texture_period: float = 3.2  # grating period in pixels
    phase_jitter: float = 0.5  # radians
    contrast: float = 0.6
    # per-image global nuisance; shared by every crop of an image, so nonzero
    # values hand self-distillation a class-agnostic shortcut
    brightness_jitter: float = 0.0
    contrast_jitter: float = 0.0
    # distractor blobs at random positions with random sign; crops do not
    # preserve them, so they cost a frozen random encoder more than a trained one
    clutter: int = 0
    clutter_amp: float = 0.3
    clutter_sigma: float = 0.06  # fraction of side

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if self.per_class < 1 or self.resolution < 4:
            raise ValueError("per_class >= 1 and resolution >= 4 required")
        if not 0.0 <= self.cue_mix <= 1.0:
            raise ValueError("cue_mix must lie in [0, 1]")
        if self.texture_period <= 2.0:
            raise ValueError("texture_period must exceed 2 pixels (Nyquist)")
        vecs = {self.texture_wavevector(k) for k in range(self.classes)}
        if len(vecs) < self.classes:
            raise ValueError("texture_period too long for this many distinct orientations")

    def blob_center(self, k: int) -> tuple[float, float]:
        ang = 2.0 * math.pi * k / self.classes
        r = self.blob_radius * self.resolution
        c = (self.resolution - 1) / 2.0
        return c + r * math.sin(ang), c + r * math.cos(ang)

    def texture_angle(self, k: int) -> float:
        return math.pi * k / self.classes

    def texture_wavevector(self, k: int) -> tuple[int, int]:
        """Grating frequency in whole cycles per image along (x, y).

        Snapping to integers makes the grating periodic on the image, so its
        spectrum sits on one conjugate pair of DFT bins and leaks nothing
        into the low band.
        """
        f = self.resolution / self.texture_period
        theta = self.texture_angle(k)
        return round(f * math.cos(theta)), round(f * math.sin(theta))

    def texture_phase(self, k: int) -> float:
        return 2.0 * math.pi * ((k * 0.618034) % 1.0)


def synth_image(cfg: SynthCfg, label: int, rng) -> np.ndarray:
    """One float image in [0, 1] for class ``label``."""
    n = cfg.resolution
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    cy, cx = cfg.blob_center(label)
    j = rng.gaussian(6)
    cy += cfg.blob_jitter * n * float(np.clip(j[0], -2, 2))
    cx += cfg.blob_jitter * n * float(np.clip(j[1], -2, 2))
    sigma = cfg.blob_sigma * n * (1.0 + 0.1 * float(np.clip(j[2], -2, 2)))
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))

    fx, fy = cfg.texture_wavevector(label)
    phase = cfg.texture_phase(label) + cfg.phase_jitter * float(np.clip(j[3], -2, 2))
    grating = 0.5 + 0.5 * np.cos(2.0 * math.pi * (fx * xx + fy * yy) / n + phase)

    amp = cfg.contrast * (1.0 + cfg.contrast_jitter * float(np.clip(j[4], -2, 2)))
    base = 0.2 + cfg.brightness_jitter * float(np.clip(j[5], -2, 2))
    img = base + amp * (cfg.cue_mix * blob + (1.0 - cfg.cue_mix) * grating)
    if cfg.clutter:
        pos = rng.uniform((cfg.clutter, 3))
        cs = cfg.clutter_sigma * n
        for py, px, sgn in pos:
            bump = np.exp(-((yy - py * n) ** 2 + (xx - px * n) ** 2) / (2.0 * cs * cs))
            img = img + cfg.clutter_amp * (1.0 if sgn < 0.5 else -1.0) * bump
    img = img[:, :, None] + cfg.noise * rng.gaussian((n, n, 3))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_arrays(cfg: SynthCfg, split: str = "train",
                 threads: int | None = 1) -> tuple[np.ndarray, np.ndarray]:
    """All images of a split, quantised to 8 bits exactly as written to disk."""
    if split not in _SPLITS:
        raise ValueError(f"unknown split {split!r}")
    sid = _SPLITS[split]
    labels = np.repeat(np.arange(cfg.classes, dtype=np.int64), cfg.per_class)

    def one(k: int) -> np.ndarray:
        rng = derive(cfg.seed, sid, k, domain=DOMAIN_SYNTH)
        return quantize(synth_image(cfg, int(labels[k]), rng))

    return np.stack(map_ordered(one, range(len(labels)), threads)), labels


@dataclass
class DatasetManifest:
    root: Path
    classes: list[str]
    files: dict[str, list[str]] = field(default_factory=dict)
    split: str = "train"
    meta: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v) for v in self.files.values())

    def entries(self) -> list[tuple[Path, int]]:
        return [
            (self.root / name / f, label)
            for label, name in enumerate(self.classes)
            for f in self.files[name]
        ]

    def to_text(self) -> str:
        lines = [f"split={self.split}"] + [f"{k}={self.meta[k]}" for k in sorted(self.meta)]
        for name in self.classes:
            lines.append(f"class {name}")
            lines.extend(f"file {name}/{f}" for f in self.files[name])
        return "\n".join(lines) + "\n"

    def write(self, path: str | os.PathLike | None = None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        path.write_text(self.to_text())
        return path

    @classmethod
    def read(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        split, classes, files, meta = "train", [], {}, {}
        for line in path.read_text().splitlines():
            if line.startswith("split="):
                split = line.split("=", 1)[1]
            elif line.startswith("class "):
                classes.append(line[6:])
                files[line[6:]] = []
            elif line.startswith("file "):
                name, f = line[5:].split("/", 1)
                files[name].append(f)
            elif "=" in line:
                k, v = line.split("=", 1)
                meta[k] = v
        return cls(path.parent, classes, files, split, meta)


def generate_synth(cfg: SynthCfg, root: str | os.PathLike, split: str = "train",
                   meta: dict | None = None, threads: int | None = 1) -> DatasetManifest:
    """Write ``root/<class>/<idx>.ppm`` and ``root/manifest.txt``."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset root {root}: {exc}") from exc
    if not os.access(root, os.W_OK):
        raise PermissionError(f"dataset root {root} is not writable")
    images, labels = synth_arrays(cfg, split, threads)
    width = max(3, len(str(cfg.per_class - 1)))
    names = [f"class_{k:02d}" for k in range(cfg.classes)]
    files: dict[str, list[str]] = {n: [] for n in names}
    counters = [0] * cfg.classes
    for img, label in zip(images, labels):
        d = root / names[label]
        d.mkdir(exist_ok=True)
        fname = f"{counters[label]:0{width}d}.ppm"
        counters[label] += 1
        save_image(img, d / fname)
        files[names[label]].append(fname)
    manifest = DatasetManifest(root, names, files, split, {k: str(v) for k, v in (meta or {}).items()})
    manifest.write()
    return manifest


def scan_dataset(root: str | os.PathLike, split: str = "train") -> DatasetManifest:
    """Index a ``root/<class>/*`` tree; names sorted by code point."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ValueError(f"no class directories under {root}")
    files = {}
    for name in classes:
        entries = sorted(p.name for p in (root / name).iterdir() if p.is_file())
        if not entries:
            raise ValueError(f"empty class directory: {root / name}")
        files[name] = entries
    return DatasetManifest(root, classes, files, split)


def load_dataset(manifest: DatasetManifest) -> tuple[np.ndarray, np.ndarray]:
    imgs, labels = [], []
    for path, label in manifest.entries():
        imgs.append(as_image(load_image(path)))
        labels.append(label)
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise ValueError(f"images have mixed shapes: {sorted(shapes)}")
    return np.stack(imgs), np.asarray(labels, dtype=np.int64)
