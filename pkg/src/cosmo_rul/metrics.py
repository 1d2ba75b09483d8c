"""Evaluation metrics: per-unit MAPE over the degradation period, fleet MAPE,
last-cycle RMSE, and MAPE-vs-RUL-limit sweeps.

A cycle qualifies for MAPE when its truth y satisfies 1 <= y <= rul_limit:
y = 0 would divide by zero and the capped plateau carries no degradation
information, so the default limit of 129 stays strictly below the target cap
of 130.  A unit without qualifying cycles is excluded (mape_unit returns
None) and counted, not failed; fleet MAPE is the unweighted mean over
included units.  RMSE uses only each unit's last recorded cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

RUL_LIMIT_DEFAULT = 129


@dataclass(frozen=True)
class UnitPrediction:
    """Aligned (cycle, truth, prediction) triples for one unit."""

    unit_id: int
    cycles: np.ndarray
    truths: np.ndarray
    predictions: np.ndarray

    def __post_init__(self) -> None:
        cycles = np.asarray(self.cycles, dtype=np.int64)
        truths = np.asarray(self.truths, dtype=np.float64)
        preds = np.asarray(self.predictions, dtype=np.float64)
        if not (cycles.shape == truths.shape == preds.shape) or cycles.ndim != 1:
            raise ValueError("cycles, truths, and predictions must be equal-length vectors")
        if cycles.size == 0:
            raise ValueError("a unit prediction needs at least one cycle")
        if np.any(np.diff(cycles) <= 0):
            raise ValueError("cycles must be strictly ascending")
        if truths.min() < 0:
            raise ValueError("truths must be nonnegative")
        if not np.isfinite(preds).all() or not np.isfinite(truths).all():
            raise ValueError("truths and predictions must be finite")
        for name, arr in (("cycles", cycles), ("truths", truths), ("predictions", preds)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "unit_id", int(self.unit_id))


@dataclass(frozen=True)
class MetricReport:
    mape: float
    rmse_last_cycle: float
    n_units_included: int
    n_units_excluded: int
    rul_limit: int

    def __post_init__(self) -> None:
        if self.n_units_included < 0 or self.n_units_excluded < 0:
            raise ValueError("unit counts must be nonnegative")


def mape_unit(prediction: UnitPrediction, rul_limit: int = RUL_LIMIT_DEFAULT) -> float | None:
    """Mean of |y - yhat| / y over qualifying cycles; None when no cycle
    qualifies (the unit is excluded, not an error)."""
    if int(rul_limit) < 1:
        raise ValueError(f"rul_limit must be >= 1, got {rul_limit}")
    y = prediction.truths
    mask = (y >= 1) & (y <= rul_limit)
    if not mask.any():
        return None
    err = np.abs(y[mask] - prediction.predictions[mask]) / y[mask]
    return float(np.mean(err))


def rmse_last_cycle(predictions: Sequence[UnitPrediction]) -> float:
    """sqrt(mean over units of squared last-cycle error)."""
    if not predictions:
        raise ValueError("cannot compute RMSE of an empty fleet")
    errs = np.asarray(
        [p.truths[-1] - p.predictions[-1] for p in predictions], dtype=np.float64
    )
    return float(np.sqrt(np.mean(errs * errs)))


def mape_fleet(
    predictions: Sequence[UnitPrediction], rul_limit: int = RUL_LIMIT_DEFAULT
) -> MetricReport:
    """Unweighted mean of included units' MAPE, with exclusions counted.

    The report also carries the fleet's last-cycle RMSE, which uses every
    unit (exclusion applies to MAPE only).
    """
    if not predictions:
        raise ValueError("cannot evaluate an empty fleet")
    per_unit = [mape_unit(p, rul_limit) for p in predictions]
    included = [v for v in per_unit if v is not None]
    if not included:
        raise ValueError(
            f"all {len(per_unit)} units were excluded at rul_limit={rul_limit} "
            "(no qualifying cycles)"
        )
    return MetricReport(
        mape=float(np.mean(included)),
        rmse_last_cycle=rmse_last_cycle(predictions),
        n_units_included=len(included),
        n_units_excluded=len(per_unit) - len(included),
        rul_limit=int(rul_limit),
    )


def mape_vs_rul_limit(
    predictions: Sequence[UnitPrediction], limits: Sequence[int]
) -> list[tuple[int, float]]:
    """Fleet MAPE at each limit, computed independently per limit.

    Limits must be ascending; a limit where every unit is excluded raises,
    as mape_fleet does.
    """
    limits = [int(l) for l in limits]
    if not limits:
        raise ValueError("limits must be non-empty")
    if any(b <= a for a, b in zip(limits, limits[1:])):
        raise ValueError("limits must be strictly ascending")
    return [(limit, mape_fleet(predictions, limit).mape) for limit in limits]
