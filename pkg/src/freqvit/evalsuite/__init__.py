"""Linear probing, corruption benchmarking and FLOPs accounting."""

from .benchmark import BenchmarkReport, corruption_benchmark
from .flops import flops_estimate, schedule_flops
from .probe import ProbeModel, extract_features, train_probe

__all__ = [
    "BenchmarkReport",
    "ProbeModel",
    "corruption_benchmark",
    "extract_features",
    "flops_estimate",
    "schedule_flops",
    "train_probe",
]
