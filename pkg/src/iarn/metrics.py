"""Forecast accuracy metrics: RMSE, MAE, MAPE, explained variance,
plus the mean-normalized RMSE/MAE variants used for table comparisons.

All metrics are computed in original (unscaled) units.  Variances are
population variances (divide by n).  A zero actual value makes MAPE
undefined and is treated as an error rather than skipped: flow data is
strictly positive, so a zero signals upstream corruption.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError, UndefinedMetricError

__all__ = ["MetricsReport", "evaluate", "CSV_HEADER"]

# Table column order: normalized RMSE, normalized MAE, MAPE(%), EVS.
CSV_HEADER = "rmse,mae,mape_percent,evs"


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    mape_percent: float
    evs: float
    rmse_normalized: float
    mae_normalized: float
    n: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv_row(self) -> str:
        """One comparison-table line using the normalized RMSE/MAE."""
        return (
            f"{self.rmse_normalized!r},{self.mae_normalized!r},"
            f"{self.mape_percent!r},{self.evs!r}"
        )


def evaluate(actual, predicted) -> MetricsReport:
    """Score predictions against actuals; both in original units."""
    y = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if y.ndim != 1 or y.shape != p.shape:
        raise DimensionError(
            f"actual {y.shape} and predicted {p.shape} must be equal-length vectors"
        )
    if y.size == 0:
        raise DimensionError("metrics are undefined for empty vectors")

    zeros = np.flatnonzero(y == 0.0)
    if zeros.size:
        raise UndefinedMetricError(
            f"MAPE undefined: actual value at index {zeros[0]} is zero"
        )
    mean_y = float(y.mean())
    if mean_y == 0.0:
        raise UndefinedMetricError("normalization undefined: actual values average to zero")
    var_y = float(np.var(y))
    if var_y == 0.0:
        raise UndefinedMetricError("EVS undefined: actual values have zero variance")

    err = y - p
    rmse = float(np.sqrt(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    mape = float(np.mean(np.abs(err / y)) * 100.0)
    evs = 1.0 - float(np.var(err)) / var_y
    return MetricsReport(
        rmse=rmse,
        mae=mae,
        mape_percent=mape,
        evs=evs,
        rmse_normalized=rmse / mean_y,
        mae_normalized=mae / mean_y,
        n=int(y.size),
    )
