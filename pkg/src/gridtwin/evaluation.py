"""Prediction metric battery and the linear-regression baseline.

Regression errors (MAE, RMSE, R2, MBE with the predicted-minus-actual
sign convention), confusion-matrix scores on series binarized at a
threshold, renewable coverage percentages, and a comparison table in the
fixed column order Model, MAE, RMSE, R2, MBE, Accuracy, Precision,
Recall, F1. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import GridTwinError, InputError

REPORT_COLUMNS = (
    "Model", "MAE", "RMSE", "R2", "MBE",
    "Accuracy", "Precision", "Recall", "F1",
)


class FitError(GridTwinError):
    """Design matrix unusable for least squares."""


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_degenerate: bool = False
    recall_degenerate: bool = False


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    rmse: float
    r2: float
    mbe: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    n_samples: int
    precision_degenerate: bool = False
    recall_degenerate: bool = False


def _pair(predicted, actual) -> tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise InputError("predicted and actual must be 1-d series of equal length")
    return predicted, actual


def regression_metrics(predicted, actual) -> tuple[float, float, float, float]:
    """(mae, rmse, r2, mbe); errors are predicted - actual."""
    predicted, actual = _pair(predicted, actual)
    if predicted.size < 2:
        raise InputError("regression metrics need at least 2 samples")
    err = predicted - actual
    mae = float(np.mean(np.abs(err)))
    rmse = float(math.sqrt(np.mean(err**2)))
    mbe = float(np.mean(err))
    ss_res = float(np.sum(err**2))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:  # constant (or numerically constant) targets
        raise InputError("r2 is undefined for a constant actual series")
    return mae, rmse, 1.0 - ss_res / ss_tot, mbe


def classification_metrics(predicted, actual, threshold: float) -> ClassificationMetrics:
    """Binarize both series at the threshold (>= means high) and score
    the confusion matrix. A zero denominator yields 0 plus a flag."""
    predicted, actual = _pair(predicted, actual)
    if predicted.size == 0:
        raise InputError("classification metrics need at least 1 sample")
    if not math.isfinite(threshold):
        raise InputError("threshold must be finite")
    pred_hi = predicted >= threshold
    act_hi = actual >= threshold
    tp = int(np.sum(pred_hi & act_hi))
    fp = int(np.sum(pred_hi & ~act_hi))
    fn = int(np.sum(~pred_hi & act_hi))
    tn = int(np.sum(~pred_hi & ~act_hi))
    accuracy = (tp + tn) / predicted.size
    precision_degenerate = (tp + fp) == 0
    recall_degenerate = (tp + fn) == 0
    precision = 0.0 if precision_degenerate else tp / (tp + fp)
    recall = 0.0 if recall_degenerate else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ClassificationMetrics(
        accuracy, precision, recall, f1, precision_degenerate, recall_degenerate
    )


def renewable_coverage(renewable_kwh: float, baseline_kwh: float) -> float:
    """Percent of baseline consumption supplied by on-site renewables."""
    if baseline_kwh <= 0:
        raise InputError("baseline consumption must be > 0")
    if renewable_kwh < 0:
        raise InputError("renewable energy must be >= 0")
    return 100.0 * renewable_kwh / baseline_kwh


def metrics_report(predicted, actual, threshold: float) -> MetricsReport:
    mae, rmse, r2, mbe = regression_metrics(predicted, actual)
    cls = classification_metrics(predicted, actual, threshold)
    return MetricsReport(
        mae=mae, rmse=rmse, r2=r2, mbe=mbe,
        accuracy=cls.accuracy, precision=cls.precision, recall=cls.recall, f1=cls.f1,
        n_samples=len(np.asarray(actual)),
        precision_degenerate=cls.precision_degenerate,
        recall_degenerate=cls.recall_degenerate,
    )


def ols_fit(features, targets) -> np.ndarray:
    """Least squares with intercept via the normal equations; the
    returned coefficients start with the intercept."""
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or len(features) != len(targets):
        raise InputError("features must be 2-d and aligned with targets")
    n, width = features.shape
    if n < width + 1:
        raise InputError(f"need at least {width + 1} samples, got {n}")
    design = np.hstack([np.ones((n, 1)), features])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise FitError("design matrix is rank deficient")
    return np.linalg.solve(design.T @ design, design.T @ targets)


def fit_linear_baseline(
    features,
    targets,
    seed: int = 0,
    test_fraction: float = 0.2,
    threshold: Optional[float] = None,
) -> tuple[np.ndarray, Optional[MetricsReport]]:
    """Ordinary least squares with intercept via the normal equations.

    Returns (coefficients, report): coefficients[0] is the intercept and
    the report is computed on a seeded held-out split (None when the
    held-out targets are constant, which leaves R2 undefined).
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or len(features) != len(targets):
        raise InputError("features must be 2-d and aligned with targets")
    n, width = features.shape
    if n < width + 1:
        raise InputError(f"need at least {width + 1} samples, got {n}")
    if not 0 < test_fraction < 1:
        raise InputError("test_fraction must be in (0, 1)")

    design = np.hstack([np.ones((n, 1)), features])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise FitError("design matrix is rank deficient")

    order = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    test_idx, train_idx = order[:n_test], order[n_test:]
    if len(train_idx) < design.shape[1]:
        raise InputError("train split too small for the feature width")
    coef = ols_fit(features[train_idx], targets[train_idx])

    y_test = targets[test_idx]
    pred_test = design[test_idx] @ coef
    if len(y_test) < 2 or np.all(y_test == y_test[0]):
        return coef, None
    if threshold is None:
        threshold = float(np.median(y_test))
    return coef, metrics_report(pred_test, y_test, threshold)


def predict_linear(coef: np.ndarray, features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    return np.hstack([np.ones((len(features), 1)), features]) @ coef


def comparison_report(
    runs: Sequence[tuple[str, np.ndarray]],
    actual,
    threshold: float,
) -> list[tuple[str, MetricsReport]]:
    """One MetricsReport row per named prediction set, in the given order."""
    return [(name, metrics_report(pred, actual, threshold)) for name, pred in runs]


def report_to_csv(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    for name, r in rows:
        lines.append(
            ",".join(
                [name]
                + [repr(v) for v in (r.mae, r.rmse, r.r2, r.mbe,
                                     r.accuracy, r.precision, r.recall, r.f1)]
            )
        )
    return "\n".join(lines) + "\n"


def report_to_text(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    header = REPORT_COLUMNS
    table = [
        [name] + [f"{v:.4f}" for v in (r.mae, r.rmse, r.r2, r.mbe,
                                        r.accuracy, r.precision, r.recall, r.f1)]
        for name, r in rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in table)) if table else len(h)
              for i, h in enumerate(header)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths))
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in table)
    return "\n".join(lines) + "\n"
