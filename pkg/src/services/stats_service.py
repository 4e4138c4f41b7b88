"""Aggregates and significance tests over repetitions."""

import itertools
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy import stats

from src.exceptions import StatisticsError
from src.schemas.experiment import RepetitionRow, SignificanceRow, SummaryRow, TTestResult

SIGNIFICANCE_LEVEL = 0.05


def standard_error(values: Sequence[float]) -> float:
    """Sample standard deviation over sqrt(R); 0 for a single value."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def t_test(sample_a: Sequence[float], sample_b: Sequence[float], alpha: float = SIGNIFICANCE_LEVEL) -> TTestResult:
    """
    Welch's unequal-variance two-sample t-test, two-sided.

    When both samples have zero variance the statistic is undefined; the pair
    is then significant iff the means differ, and a warning is logged.

    Raises:
        StatisticsError: If either sample has fewer than two values
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise StatisticsError(f"t-test needs at least two values per sample, got {a.size} and {b.size}")

    diff = float(a.mean() - b.mean())
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va + vb == 0.0:
        logger.warning("t-test on two zero-variance samples; deciding on the means alone")
        if diff == 0.0:
            return TTestResult(t=0.0, dof=float(a.size + b.size - 2), p=1.0, significant=False)
        return TTestResult(t=float(np.copysign(np.inf, diff)), dof=float(a.size + b.size - 2), p=0.0,
                           significant=True)

    t = diff / np.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), dof)))
    return TTestResult(t=float(t), dof=float(dof), p=p, significant=p < alpha)


def _rewards_by_method(rows: Sequence[RepetitionRow]) -> dict[str, list[RepetitionRow]]:
    grouped: dict[str, list[RepetitionRow]] = {}
    for row in rows:
        grouped.setdefault(row.method, [])
        if not row.failed:
            grouped[row.method].append(row)
    return grouped


def summarize(rows: Sequence[RepetitionRow], sweep_value: Optional[float] = None) -> list[SummaryRow]:
    """Mean and standard error of the total reward per method (failed repetitions excluded)."""
    summary = []
    for method, ok in _rewards_by_method(rows).items():
        rewards = [r.total_reward for r in sorted(ok, key=lambda r: r.repetition)]
        fractions = [r.human_fraction for r in ok]
        summary.append(SummaryRow(
            method=method,
            mean=float(np.mean(rewards)) if rewards else float('nan'),
            stderr=standard_error(rewards),
            n=len(rewards),
            mean_human_fraction=float(np.mean(fractions)) if fractions else float('nan'),
            sweep_value=sweep_value,
        ))
    return summary


def pairwise_significance(
        rows: Sequence[RepetitionRow],
        sweep_value: Optional[float] = None,
        alpha: float = SIGNIFICANCE_LEVEL,
) -> list[SignificanceRow]:
    """Welch tests for every pair of methods with at least two successful repetitions each."""
    grouped = _rewards_by_method(rows)
    result = []
    for method_a, method_b in itertools.combinations(grouped, 2):
        a = [r.total_reward for r in grouped[method_a]]
        b = [r.total_reward for r in grouped[method_b]]
        if len(a) < 2 or len(b) < 2:
            continue
        test = t_test(a, b, alpha)
        result.append(SignificanceRow(method_a=method_a, method_b=method_b, t=test.t, dof=test.dof, p=test.p,
                                      significant=test.significant, sweep_value=sweep_value))
    return result


def spearman(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Spearman rank correlation and its p-value."""
    result = stats.spearmanr(x, y)
    return float(result.statistic), float(result.pvalue)
