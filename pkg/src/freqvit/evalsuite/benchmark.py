"""Corruption benchmark with frequency-group aggregation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..augment import CORRUPTION_GROUPS, CorruptionSpec, apply_corruption
from ..coreio import derive, map_ordered
from .probe import ProbeModel, extract_features

DOMAIN_BENCH = 50
GROUPS = ("low", "mid", "high", "hybrid")


@dataclass
class Cell:
    kind: str
    severity: int
    group: str
    accuracy: float
    param: float

    @property
    def error(self) -> float:
        return 1.0 - self.accuracy


@dataclass
class BenchmarkReport:
    clean_accuracy: float
    cells: list[Cell] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def overall(self) -> float:
        return float(np.mean([c.accuracy for c in self.cells])) if self.cells else float("nan")

    def group_mean(self, group: str) -> float:
        accs = [c.accuracy for c in self.cells if c.group == group]
        return float(np.mean(accs)) if accs else float("nan")

    @property
    def groups(self) -> dict[str, float]:
        present = [g for g in GROUPS if any(c.group == g for c in self.cells)]
        return {g: self.group_mean(g) for g in present}

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}={self.meta[k]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "severity", "group", "accuracy", "error"])
        for c in self.cells:
            w.writerow([c.kind, c.severity, c.group, f"{c.accuracy:.6f}", f"{c.error:.6f}"])
        w.writerow([])
        w.writerow(["summary", "", "", "accuracy", "error"])
        w.writerow(["clean", "", "", f"{self.clean_accuracy:.6f}", f"{1 - self.clean_accuracy:.6f}"])
        for g, acc in self.groups.items():
            w.writerow([f"group:{g}", "", "", f"{acc:.6f}", f"{1 - acc:.6f}"])
        w.writerow(["overall", "", "", f"{self.overall:.6f}", f"{1 - self.overall:.6f}"])
        return buf.getvalue()


def corrupt_dataset(images, spec: CorruptionSpec, seed: int, spec_index: int,
                    threads: int | None = 1) -> np.ndarray:
    def one(i: int) -> np.ndarray:
        return apply_corruption(images[i], derive(seed, spec_index, i, domain=DOMAIN_BENCH), spec)

    return np.stack(map_ordered(one, range(len(images)), threads))


def corruption_benchmark(params, enc, probe: ProbeModel, images, labels, catalog, seed: int = 0,
                         features=extract_features, threads: int | None = 1) -> BenchmarkReport:
    """Probe accuracy on every corrupted copy of the evaluation set.

    The probe must have been fit on clean features; corruptions are only seen
    here.
    """
    labels = np.asarray(labels)
    clean = probe.accuracy(features(params, enc, images), labels)
    report = BenchmarkReport(clean_accuracy=clean, meta={"seed": seed, "images": len(images)})
    for si, spec in enumerate(catalog):
        corrupted = corrupt_dataset(images, spec, seed, si, threads)
        acc = probe.accuracy(features(params, enc, corrupted), labels)
        report.cells.append(Cell(spec.kind, spec.severity, CORRUPTION_GROUPS[spec.kind], acc,
                                 spec.value))
    return report
