"""Calibration and learning-curve metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

ENTROPY_FLAVOR = "mean-entropy"
MAXPROB_FLAVOR = "max-probability"


@dataclass(frozen=True)
class CalibrationRecord:
    confidence: float
    outcome: int
    uncertainty: float
    predicted: int
    oracle: int

    @classmethod
    def from_advice(cls, uncertainty: float, predicted: int, oracle: int) -> "CalibrationRecord":
        return cls(1.0 - uncertainty, int(predicted == oracle), uncertainty, predicted, oracle)


def _arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(records, tuple) and len(records) == 2:
        f, o = (np.asarray(x, dtype=float) for x in records)
    else:
        records = list(records)
        f = np.array([r.confidence for r in records], dtype=float)
        o = np.array([r.outcome for r in records], dtype=float)
    if f.size == 0:
        raise ValueError("no calibration records")
    return f, o


def ece(records, bins: int = 10) -> float:
    """Expected calibration error over equal-width, right-closed confidence bins.

    ``records`` is an iterable of :class:`CalibrationRecord` or a
    ``(confidences, outcomes)`` pair of arrays. Confidence 0 falls in the
    first bin.
    """
    if bins < 1:
        raise ValueError("need at least one bin")
    f, o = _arrays(records)
    idx = np.clip(np.ceil(f * bins).astype(np.int64) - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    conf_sum = np.bincount(idx, weights=f, minlength=bins)
    acc_sum = np.bincount(idx, weights=o, minlength=bins)
    used = counts > 0
    gap = np.abs(acc_sum[used] - conf_sum[used]) / counts[used]
    return float((counts[used] / f.size * gap).sum())


def brier(records) -> float:
    f, o = _arrays(records)
    return float(np.mean((f - o) ** 2))


def discrimination(records: Iterable[CalibrationRecord], threshold: float = 0.5) -> Optional[float]:
    """Share of wrong predictions whose uncertainty exceeds ``threshold``.

    Returns None when there is no wrong prediction at all.
    """
    wrong = [r.uncertainty for r in records if r.outcome == 0]
    if not wrong:
        return None
    return float(np.mean(np.asarray(wrong) > threshold))


def discrimination_arrays(uncertainty: np.ndarray, outcome: np.ndarray, threshold: float = 0.5) -> Optional[float]:
    wrong = np.asarray(uncertainty)[np.asarray(outcome) == 0]
    if wrong.size == 0:
        return None
    return float(np.mean(wrong > threshold))


def moving_average(series: Sequence[float], window: int = 250) -> np.ndarray:
    """Trailing mean with a growing window over the first ``window - 1`` points."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x.copy()
    out = np.empty_like(x)
    head = min(window - 1, x.size)
    out[:head] = np.cumsum(x[:head]) / np.arange(1, head + 1)
    if x.size >= window:
        out[head:] = np.lib.stride_tricks.sliding_window_view(x, window).mean(axis=1)
    return out


def auc(smoothed: Sequence[float]) -> float:
    """Area under a per-episode curve at unit spacing (rectangle rule)."""
    x = np.asarray(smoothed, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    return float(x.sum())
