"""Inference-cost projection from benchmark runtime to corpus scale."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CostInputs:
    runtime_minutes: float
    gpu_count: int
    gpu_rate_per_hour: float
    total_notes: int
    median_note_words: float
    bench_median_words: float

    def __post_init__(self):
        for name in (
            "runtime_minutes",
            "gpu_count",
            "gpu_rate_per_hour",
            "total_notes",
            "median_note_words",
            "bench_median_words",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def scale_factor(median_note_words: float, total_notes: int, bench_median_words: float) -> float:
    """Workload multiplier: median target note length times note count over benchmark length."""
    if bench_median_words <= 0:
        raise ValueError("bench_median_words must be strictly positive")
    if total_notes <= 0:
        raise ValueError("total_notes must be strictly positive")
    return median_note_words * total_notes / bench_median_words


def estimate_cost(inputs: CostInputs, per_benchmark_cases: int | None = None) -> float:
    """Projected rental cost: benchmark GPU-hours priced out, scaled to the corpus.

    ``per_benchmark_cases`` optionally divides by the benchmark case count;
    the printed formula does not normalize by it, so the default leaves it
    off and the flag exposes the alternative reading.
    """
    hourly = inputs.runtime_minutes * inputs.gpu_count * inputs.gpu_rate_per_hour / 60.0
    cost = hourly * scale_factor(
        inputs.median_note_words, inputs.total_notes, inputs.bench_median_words
    )
    if per_benchmark_cases:
        cost /= per_benchmark_cases
    return cost
