"""Goodness-of-fit metrics and the R^2-based recovery accuracy."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

DEFAULT_TAU = 0.999


class DegenerateVarianceError(ValueError):
    """Raised when the targets have zero spread, so normalized metrics are undefined."""


@dataclass(frozen=True)
class MetricReport:
    mse: float
    nmse: float
    rmse: float
    nrmse: float
    inv_nmse: float
    inv_nrmse: float
    r2: float
    valid: bool = True

    def to_dict(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else repr(v)) for k, v in asdict(self).items()}

    @classmethod
    def worst(cls) -> MetricReport:
        inf = math.inf
        return cls(mse=inf, nmse=inf, rmse=inf, nrmse=inf, inv_nmse=0.0, inv_nrmse=0.0, r2=-inf, valid=False)


def compute_metrics(y_true: Sequence[float], y_pred: Sequence[float]) -> MetricReport:
    """All seven fit metrics. Population standard deviation normalizes NMSE/NRMSE.

    Non-finite predictions give the worst-possible report flagged ``valid=False``.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-d arrays of equal length")
    if y_true.size < 2:
        raise ValueError("need at least two samples")
    sigma = float(np.sqrt(np.mean((y_true - y_true.mean()) ** 2)))
    if sigma == 0.0:
        raise DegenerateVarianceError("targets have zero variance; normalized metrics are undefined")
    if not np.all(np.isfinite(y_pred)):
        return MetricReport.worst()
    mse = float(np.mean((y_true - y_pred) ** 2))
    if not math.isfinite(mse):
        return MetricReport.worst()
    nmse = mse / sigma**2
    rmse = math.sqrt(mse)
    nrmse = rmse / sigma
    return MetricReport(
        mse=mse,
        nmse=nmse,
        rmse=rmse,
        nrmse=nrmse,
        inv_nmse=1.0 / (1.0 + nmse),
        inv_nrmse=1.0 / (1.0 + nrmse),
        r2=1.0 - nmse,
    )


def accuracy_at(reports: Sequence[MetricReport], tau: float = DEFAULT_TAU) -> float:
    """Fraction of reports with ``r2 >= tau``."""
    if not reports:
        raise ValueError("accuracy over an empty list of reports")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    return sum(1 for r in reports if r.r2 >= tau) / len(reports)


def inv_nmse_reward(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Bounded reward 1/(1+NMSE) in [0, 1]; safe on degenerate or non-finite input."""
    with np.errstate(all="ignore"):
        mse = float(np.mean((y_true - y_pred) ** 2))
    if not math.isfinite(mse):
        return 0.0
    var = float(np.var(y_true))
    if var == 0.0:
        return 1.0 if mse == 0.0 else 1.0 / (1.0 + mse)
    return 1.0 / (1.0 + mse / var)
