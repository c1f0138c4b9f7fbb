"""Probabilistic forecast quality metrics and the tail-cost statistic.

ACE, PINAW, IS and QS follow the usual coverage / width / interval-score /
pinball definitions; widths and scores are normalized per line by the mean
true rating over the evaluation window and reported as percentages.  CVaR is
the empirical mean of the worst beta-fraction of hourly costs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCosts, LevelOutOfRange, ZeroNormalizer


def pinball_values(predicted, actual, level: float) -> np.ndarray:
    """Elementwise pinball loss; the kernel shared with the training loss."""
    if not 0.0 < level < 1.0:
        raise LevelOutOfRange(f"quantile level must be in (0, 1), got {level}")
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    return np.where(predicted <= actual,
                    level * (actual - predicted),
                    (1.0 - level) * (predicted - actual))


@dataclass(frozen=True)
class IntervalSet:
    """Prediction interval per (line, hour) at nominal confidence 1 - alpha."""

    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower/upper shapes differ")
        if np.any(self.lower > self.upper + 1e-12):
            raise ValueError("interval lower bound exceeds upper bound")


def per_line_normalizer(truth) -> np.ndarray:
    """Mean true rating per line over the evaluation window."""
    return np.asarray(truth, dtype=float).mean(axis=1)


def _check_normalizer(normalizer, n_lines):
    normalizer = np.asarray(normalizer, dtype=float)
    if normalizer.shape != (n_lines,):
        raise ValueError(f"normalizer must have shape ({n_lines},)")
    if np.any(normalizer <= 0):
        raise ZeroNormalizer("per-line normalizer must be positive")
    return normalizer


def ace(intervals: IntervalSet, truth) -> float:
    """|empirical coverage - nominal confidence| in percentage points (closed bounds)."""
    truth = np.asarray(truth, dtype=float)
    inside = (intervals.lower <= truth) & (truth <= intervals.upper)
    return float(abs(inside.mean() - (1.0 - intervals.alpha)) * 100.0)


def pinaw(intervals: IntervalSet, normalizer) -> float:
    """Mean interval width normalized per line, as a percentage."""
    width = intervals.upper - intervals.lower
    norm = _check_normalizer(normalizer, width.shape[0])
    return float((width / norm[:, None]).mean() * 100.0)


def interval_score_points(intervals: IntervalSet, truth) -> np.ndarray:
    """Per-point interval score (higher is better, always <= 0)."""
    truth = np.asarray(truth, dtype=float)
    width_term = -2.0 * intervals.alpha * (intervals.upper - intervals.lower)
    below = 4.0 * np.maximum(intervals.lower - truth, 0.0)
    above = 4.0 * np.maximum(truth - intervals.upper, 0.0)
    return width_term - below - above


def interval_score(intervals: IntervalSet, truth, normalizer) -> float:
    """Average interval score, normalized like PINAW, as a percentage."""
    pts = interval_score_points(intervals, truth)
    norm = _check_normalizer(normalizer, pts.shape[0])
    return float((pts / norm[:, None]).mean() * 100.0)


def quantile_score(values, levels, truth, normalizer) -> float:
    """Mean pinball over (level, line, hour), normalized per line, as a percentage.

    values has shape (n_line, T, n_level) matching the ascending levels list.
    """
    values = np.asarray(values, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if not levels:
        raise ValueError("need at least one quantile level")
    norm = _check_normalizer(normalizer, values.shape[0])
    total = 0.0
    for j, level in enumerate(levels):
        loss = pinball_values(values[:, :, j], truth, level)
        total += float((loss / norm[:, None]).mean())
    return total / len(levels) * 100.0


def cvar(hourly_costs, beta: float = 0.10) -> float:
    """Mean of the worst ceil(beta * N) hourly costs (upper-tail empirical CVaR)."""
    costs = np.asarray(hourly_costs, dtype=float).ravel()
    if costs.size == 0:
        raise EmptyCosts("hourly cost list is empty")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    k = int(np.ceil(beta * costs.size))
    worst = np.sort(costs)[-k:]
    return float(worst.mean())


def forecast_metrics(values, levels, truth, interval_levels) -> dict:
    """Per-interval report: {\"80\": {ace, pinaw, interval_score, quantile_score}, ...}.

    interval_levels maps a label to its (lower, upper) quantile levels, e.g.
    {\"80\": (0.1, 0.9)}.  Levels must exist in the forecast's level list.
    """
    levels = list(levels)
    truth = np.asarray(truth, dtype=float)
    norm = per_line_normalizer(truth)
    report = {}
    for label, (lo, hi) in interval_levels.items():
        il = levels.index(lo)
        iu = levels.index(hi)
        alpha = round(1.0 - (hi - lo), 10)
        iv = IntervalSet(np.minimum(values[:, :, il], values[:, :, iu]),
                         np.maximum(values[:, :, il], values[:, :, iu]), alpha)
        report[label] = {
            "ace": ace(iv, truth),
            "pinaw": pinaw(iv, norm),
            "interval_score": interval_score(iv, truth, norm),
            "quantile_score": quantile_score(values[:, :, [il, iu]], [lo, hi], truth, norm),
        }
    return report
