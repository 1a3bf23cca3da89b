"""Surrogate evaluation against re-solved reference fields.

Each test sample is re-solved on its mesh (cheap next to training) and the
surrogate field is compared against the solved field in the H1 norm, per
sample; the report carries the per-sample values plus mean and standard
deviation of both the absolute and the relative error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetRecord, GenerationConfig, solve_sample
from .fields import VemDisplacementField, h1_error
from .surrogate import SurrogateField, SurrogateModel

__all__ = ["SampleError", "EvaluationReport", "group_by_sample", "evaluate_surrogate"]


@dataclass(frozen=True)
class SampleError:
    sample_id: int
    h1: float
    relative_h1: float


@dataclass(frozen=True)
class EvaluationReport:
    per_sample: tuple[SampleError, ...]
    h1_mean: float
    h1_std: float
    relative_h1_mean: float
    relative_h1_std: float

    def to_dict(self) -> dict:
        return {
            "n_samples": len(self.per_sample),
            "h1": {
                "mean": self.h1_mean,
                "std": self.h1_std,
                "per_sample": [{"sample_id": e.sample_id, "value": e.h1} for e in self.per_sample],
            },
            "relative_h1": {
                "mean": self.relative_h1_mean,
                "std": self.relative_h1_std,
                "per_sample": [
                    {"sample_id": e.sample_id, "value": e.relative_h1} for e in self.per_sample
                ],
            },
        }


def group_by_sample(records: list[DatasetRecord]) -> dict[int, list[DatasetRecord]]:
    grouped: dict[int, list[DatasetRecord]] = {}
    for record in records:
        grouped.setdefault(record.sample_id, []).append(record)
    return grouped


def evaluate_surrogate(
    model: SurrogateModel | None,
    config: GenerationConfig,
    records: list[DatasetRecord],
    field_factory=None,
) -> EvaluationReport:
    """H1 error of the surrogate field per test sample.

    ``field_factory(mesh, material, vem_field)`` may replace the surrogate
    field; passing a factory that returns the reference itself must report
    zero error everywhere, which makes it a useful self check.
    """
    grouped = group_by_sample(records)
    errors = []
    for sample_id in sorted(grouped):
        material = grouped[sample_id][0].material
        mesh, solution = solve_sample(config, material)
        reference = VemDisplacementField(solution)
        if field_factory is not None:
            candidate = field_factory(mesh, material, reference)
        else:
            candidate = SurrogateField(model, mesh, material)
        report = h1_error(candidate, reference, mesh)
        errors.append(SampleError(sample_id, report.h1_error, report.relative_h1))
    h1_values = np.array([e.h1 for e in errors])
    rel_values = np.array([e.relative_h1 for e in errors])
    return EvaluationReport(
        per_sample=tuple(errors),
        h1_mean=float(h1_values.mean()),
        h1_std=float(h1_values.std()),
        relative_h1_mean=float(rel_values.mean()),
        relative_h1_std=float(rel_values.std()),
    )
