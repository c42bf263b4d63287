"""Scoring of recovered ancestral matrices against a known truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .graphs import AncestralMatrix, RelationKind, TieredGraph


@dataclass
class AccuracyReport:
    accuracy: Optional[float]  # None when no pair was decided
    na_rate: float
    n_pairs: int
    n_decided: int
    n_correct: int
    confusion: dict  # (predicted kind value, true kind value) -> count

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "na_rate": self.na_rate,
            "n_pairs": self.n_pairs,
            "n_decided": self.n_decided,
            "n_correct": self.n_correct,
            "confusion": {f"{p}|{t}": c for (p, t), c in sorted(self.confusion.items())},
        }


def _prediction_correct(predicted: RelationKind, true: RelationKind) -> bool:
    if predicted in (RelationKind.PRECEDES, RelationKind.PRECEDED_BY, RelationKind.UNORDERED):
        return predicted == true
    if predicted is RelationKind.NOT_DESCENDANT:
        # claims only "i does not descend from j": wrong just when j precedes i
        return true is not RelationKind.PRECEDED_BY
    if predicted is RelationKind.NOT_ANCESTOR:
        return true is not RelationKind.PRECEDES
    raise ValueError(f"NA entries are not scored: {predicted}")


def metric_accuracy(
    matrix: AncestralMatrix,
    truth: TieredGraph,
    id_map: Optional[Mapping[int, int]] = None,
) -> AccuracyReport:
    """Score decided entries only; one-sided claims count as correct unless
    the truth contains the opposite strict ordering.

    ``id_map`` translates matrix ids into truth vertex ids when the matrix was
    built over data columns rather than graph vertices.
    """
    translate = (lambda v: id_map[v]) if id_map is not None else (lambda v: v)
    for v in matrix.foreground_ids:
        truth.tier(translate(v))  # raises on unknown ids
    n_pairs = 0
    n_decided = 0
    n_correct = 0
    confusion: dict = {}
    for (i, j), kind in matrix.items():
        n_pairs += 1
        if kind is RelationKind.NA:
            continue
        n_decided += 1
        true_kind = truth.true_relation(translate(i), translate(j))
        key = (kind.value, true_kind.value)
        confusion[key] = confusion.get(key, 0) + 1
        if _prediction_correct(kind, true_kind):
            n_correct += 1
    accuracy = (n_correct / n_decided) if n_decided else None
    na_rate = 1.0 - n_decided / n_pairs
    return AccuracyReport(accuracy, na_rate, n_pairs, n_decided, n_correct, confusion)


def metric_pve(residuals: np.ndarray, y: np.ndarray) -> float:
    """Proportion of variance explained: 1 - sum(e^2) / sum((y - mean)^2)."""
    residuals = np.asarray(residuals, dtype=float)
    y = np.asarray(y, dtype=float)
    if residuals.shape != y.shape:
        raise ValueError("residuals and outcome must have equal length")
    denom = float(((y - y.mean()) ** 2).sum())
    if denom <= 0:
        raise ValueError("outcome has zero variance")
    return 1.0 - float((residuals**2).sum()) / denom
