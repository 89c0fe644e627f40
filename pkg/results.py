"""Run results and the minimum-depth and minimum-width tables derived from them."""

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget-exhausted"
DIVERGED = "diverged"
RUN_STATUSES = (CONVERGED, BUDGET_EXHAUSTED, DIVERGED)


@dataclass(frozen=True)
class ResultRecord:
    """Outcome of one (family, task, length, depth, width, seed) run."""

    family: str
    group_id: str
    """Group id, or ``pre-index-v<v>`` / ``post-index-v<v>`` for the indexing tasks"""
    length: int
    depth: int
    seed: int
    steps_used: int
    full_sequence_accuracy: float
    """Fraction of test words with every position correct"""
    per_token_accuracy: float
    status: str = CONVERGED
    """converged (validation cleared the threshold), budget-exhausted or diverged"""
    seconds: float = 0.0
    d_model: int = 64
    """Model width the run was trained at"""

    def __post_init__(self):
        for name in ("full_sequence_accuracy", "per_token_accuracy"):
            value = getattr(self, name)
            if math.isnan(value) or not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.status not in RUN_STATUSES:
            raise ValueError(f"Unknown run status: {self.status!r}")

    @property
    def key(self) -> tuple[str, str, int, int, int, int]:
        return (self.family, self.group_id, self.length, self.depth, self.d_model, self.seed)


    def succeeded(self, threshold: float) -> bool:
        return self.status != DIVERGED and self.full_sequence_accuracy >= threshold

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ResultRecord":
        kinds = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(kinds)
        if unknown:
            raise ValueError(f"Unknown result fields: {sorted(unknown)}")
        # CSV rows arrive as strings
        return cls(**{name: kinds[name](value) for name, value in data.items()})


SWEEP_AXES = ("depth", "d_model")


@dataclass(frozen=True)
class SweepRow:
    """Smallest successful depth (or width) of one (family, group, length) cell."""

    family: str
    group_id: str
    length: int
    minimum: Optional[int]
    axis: str = "depth"

    @property
    def label(self) -> str:
        return "none" if self.minimum is None else str(self.minimum)


def minimum_per_cell(records: list[ResultRecord], threshold: float, axis: str = "depth") -> list[SweepRow]:
    """
    Smallest value of ``axis`` at which any seed clears the threshold, per cell.

    Cells where nothing succeeded get ``minimum=None``. Rows are sorted by
    family, group and length.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"Unknown sweep axis {axis!r}; choose from {list(SWEEP_AXES)}")

    best: dict[tuple[str, str, int], Optional[int]] = {}
    for record in records:
        cell = (record.family, record.group_id, record.length)
        current = best.setdefault(cell, None)
        value = getattr(record, axis)
        if record.succeeded(threshold) and (current is None or value < current):
            best[cell] = value

    return [
        SweepRow(family, group_id, length, value, axis)
        for (family, group_id, length), value in sorted(best.items())
    ]
