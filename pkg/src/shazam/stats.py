"""Evaluation metrics and the statistical toolkit used by reports.

Everything here is numpy + stdlib math (normal and 1-dof chi-square tails
via ``erfc``); implementations are deliberately direct so they can be
cross-checked against brute-force oracles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateSplitError,
    InvalidArgumentError,
    NumericError,
    ShazamError,
    UndefinedCIndexError,
    UndefinedCorrelationError,
    UndefinedTestError,
)

__all__ = [
    "MetricReport",
    "pcc",
    "concordance_index",
    "classification_metrics",
    "bootstrap_ci",
    "WilcoxonResult",
    "wilcoxon_signed_rank",
    "KmCurve",
    "km_curve",
    "KmLogrankResult",
    "km_logrank",
    "BenchmarkTable",
    "RankSummary",
    "rank_aggregate",
]


@dataclass(frozen=True)
class MetricReport:
    """One reported metric value with an optional bootstrap CI."""

    name: str
    value: float
    ci_low: float | None = None
    ci_high: float | None = None
    n: int | None = None

    def __post_init__(self):
        if (self.ci_low is None) != (self.ci_high is None):
            raise InvalidArgumentError("ci_low and ci_high must be given together")
        if self.ci_low is not None and not (self.ci_low <= self.value <= self.ci_high):
            # Percentile CIs can exclude the point estimate on skewed
            # resamples; flag rather than fail.
            warnings.warn(
                f"{self.name}: point estimate {self.value} outside CI "
                f"[{self.ci_low}, {self.ci_high}]",
                stacklevel=2,
            )


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _chi2_1_sf(x: float) -> float:
    return math.erfc(math.sqrt(x / 2.0))


def pcc(x, y) -> float:
    """Pearson correlation coefficient.

    Raises :class:`UndefinedCorrelationError` for fewer than two points or a
    constant input.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidArgumentError("pcc expects two aligned 1-D arrays")
    if x.size < 2:
        raise UndefinedCorrelationError(f"need >= 2 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    return float(dx @ dy) / (sx * sy)


def concordance_index(risk, time, event) -> float:
    """Harrell's C-index for right-censored data.

    A pair is comparable iff the earlier time is an observed event and the
    times differ; tied risk on a comparable pair scores 0.5.  This *is* the
    O(n^2) definition, evaluated with broadcasting.
    """
    risk = np.asarray(risk, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event).astype(bool)
    if not (risk.ndim == 1 and risk.shape == time.shape == event.shape):
        raise InvalidArgumentError("risk, time and event must be aligned 1-D arrays")
    later = time[None, :] > time[:, None]  # strictly later than i
    comparable = later & event[:, None]
    n_comparable = int(comparable.sum())
    if n_comparable == 0:
        raise UndefinedCIndexError("no comparable pairs (check events and time ties)")
    higher = risk[:, None] > risk[None, :]
    tied = risk[:, None] == risk[None, :]
    score = (higher + 0.5 * tied) * comparable
    return float(score.sum()) / n_comparable


def classification_metrics(y_true, y_pred, num_classes: int | None = None) -> dict[str, float]:
    """Balanced accuracy, weighted F1, and top-1 accuracy.

    Balanced accuracy is the unweighted mean of per-class recall over the
    classes present in ``y_true``; declared classes absent from ``y_true``
    are excluded with a warning.  Weighted F1 weights per-class F1 by true
    support.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.ndim != 1 or y_true.shape != y_pred.shape or y_true.size == 0:
        raise InvalidArgumentError("y_true and y_pred must be aligned non-empty 1-D arrays")
    present = np.unique(y_true)
    if num_classes is not None:
        absent = sorted(set(range(num_classes)) - set(present.tolist()))
        if absent:
            warnings.warn(f"classes absent from y_true excluded from balanced accuracy: {absent}", stacklevel=2)
    recalls = []
    f1s = []
    supports = []
    for c in present:
        mask = y_true == c
        support = int(mask.sum())
        tp = int((y_pred[mask] == c).sum())
        recall = tp / support
        pred_c = int((y_pred == c).sum())
        precision = tp / pred_c if pred_c else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
        recalls.append(recall)
        f1s.append(f1)
        supports.append(support)
    supports_arr = np.asarray(supports, dtype=np.float64)
    return {
        "balanced_acc": float(np.mean(recalls)),
        "weighted_f1": float(np.asarray(f1s) @ (supports_arr / supports_arr.sum())),
        "top1_acc": float(np.mean(y_true == y_pred)),
    }


_RETRYABLE = (ShazamError,)


def bootstrap_ci(
    statistic: Callable[..., float],
    data: Sequence[np.ndarray],
    n_boot: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
    max_redraws: int = 10,
) -> tuple[float, float]:
    """Percentile bootstrap CI for ``statistic(*data)``.

    Samples are resampled with replacement, jointly across the aligned
    arrays in ``data``.  Replicate ``r`` draws from its own RNG substream
    derived from ``(seed, r)``, so results are independent of evaluation
    order and worker count.  A resample on which the statistic is undefined
    is redrawn from the same substream, at most ``max_redraws`` times.
    """
    arrays = [np.asarray(a) for a in data]
    if not arrays:
        raise InvalidArgumentError("bootstrap needs at least one data array")
    n = arrays[0].shape[0]
    if n < 2:
        raise InvalidArgumentError(f"bootstrap needs >= 2 samples, got {n}")
    if any(a.shape[0] != n for a in arrays):
        raise InvalidArgumentError("bootstrap arrays must share their first dimension")
    if not 0 < alpha < 1:
        raise InvalidArgumentError(f"alpha must be in (0, 1), got {alpha}")
    if n_boot < 1:
        raise InvalidArgumentError("n_boot must be >= 1")

    reps = np.empty(n_boot, dtype=np.float64)
    for r in range(n_boot):
        rng = np.random.default_rng([seed, r])
        for attempt in range(max_redraws + 1):
            idx = rng.integers(0, n, size=n)
            try:
                reps[r] = float(statistic(*(a[idx] for a in arrays)))
                break
            except _RETRYABLE:
                if attempt == max_redraws:
                    raise NumericError(
                        f"bootstrap replicate {r} undefined after {max_redraws} redraws"
                    ) from None
    lo, hi = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


# --------------------------------------------------------------------------
# Wilcoxon signed-rank


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+ (sum of positive-difference ranks)
    p_value: float
    n: int  # paired differences after dropping zeros
    method: str  # "exact" | "normal"


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_sf_counts(doubled_ranks: list[int]) -> np.ndarray:
    """Distribution of the doubled positive-rank sum over all sign flips."""
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r] if r > 0 else counts
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(
    x,
    y=None,
    alternative: str = "two-sided",
    exact_threshold: int = 25,
) -> WilcoxonResult:
    """Wilcoxon signed-rank test on paired data (or precomputed differences).

    Zero differences are dropped; ties in |d| get midranks.  With
    ``n <= exact_threshold`` the p-value is exact (full sign-flip
    distribution via subset-sum counting, valid with midranks); above that,
    a normal approximation with tie correction and 0.5 continuity
    correction is used.  ``alternative="greater"`` tests whether x tends to
    exceed y.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise InvalidArgumentError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=np.float64)
    if y is not None:
        y = np.asarray(y, dtype=np.float64)
        if x.shape != y.shape:
            raise InvalidArgumentError("paired arrays must have identical shape")
        d = x - y
    else:
        d = x
    if d.ndim != 1:
        raise InvalidArgumentError("differences must be 1-D")
    if not np.isfinite(d).all():
        raise InvalidArgumentError("paired differences contain non-finite values")
    nonzero = d[d != 0]
    if nonzero.size == 0:
        raise UndefinedTestError("all paired differences are zero")
    if nonzero.size < 5:
        raise InvalidArgumentError(
            f"need >= 5 non-zero differences for a meaningful test, got {nonzero.size}"
        )
    n = nonzero.size
    ranks = _midranks(np.abs(nonzero))
    w_plus = float(ranks[nonzero > 0].sum())

    if n <= exact_threshold:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _exact_sf_counts(doubled)
        denom = 2.0**n
        w2 = int(round(2 * w_plus))
        p_greater = float(counts[w2:].sum()) / denom
        p_less = float(counts[: w2 + 1].sum()) / denom
        method = "exact"
    else:
        mu = n * (n + 1) / 4.0
        tie_sizes = np.unique(np.abs(nonzero), return_counts=True)[1]
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_sizes**3 - tie_sizes) / 48.0).sum())
        if sigma2 <= 0:
            raise UndefinedTestError("zero variance in normal approximation (all |d| tied)")
        sigma = math.sqrt(sigma2)
        p_greater = _normal_sf((w_plus - mu - 0.5) / sigma)
        p_less = 1.0 - _normal_sf((w_plus - mu + 0.5) / sigma)
        method = "normal"

    if alternative == "greater":
        p = p_greater
    elif alternative == "less":
        p = p_less
    else:
        p = min(1.0, 2.0 * min(p_greater, p_less))
    return WilcoxonResult(statistic=w_plus, p_value=p, n=n, method=method)


# --------------------------------------------------------------------------
# Kaplan-Meier and log-rank


@dataclass(frozen=True)
class KmCurve:
    """Step survival curve: S(t) drops at each event time."""

    times: np.ndarray  # distinct event times, ascending
    survival: np.ndarray  # S(t) just after each time
    at_risk: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.survival) > 1e-15):
            raise InvalidArgumentError("survival curve must be non-increasing")


def km_curve(time, event) -> KmCurve:
    """Kaplan-Meier estimator for one group."""
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event).astype(bool)
    if time.ndim != 1 or time.shape != event.shape or time.size == 0:
        raise InvalidArgumentError("time and event must be aligned non-empty 1-D arrays")
    event_times = np.unique(time[event])
    times, surv, at_risk_list, d_list = [], [], [], []
    s = 1.0
    for t in event_times:
        n_at_risk = int((time >= t).sum())
        d = int(((time == t) & event).sum())
        s *= 1.0 - d / n_at_risk
        times.append(t)
        surv.append(s)
        at_risk_list.append(n_at_risk)
        d_list.append(d)
    return KmCurve(
        times=np.asarray(times),
        survival=np.asarray(surv),
        at_risk=np.asarray(at_risk_list, dtype=np.int64),
        events=np.asarray(d_list, dtype=np.int64),
    )


@dataclass(frozen=True)
class KmLogrankResult:
    cutoff: float
    high: KmCurve
    low: KmCurve
    n_high: int
    n_low: int
    chi2: float
    p_value: float  # two-sided


def km_logrank(risk, time, event) -> KmLogrankResult:
    """Median-risk split plus two-group log-rank test.

    Samples with risk strictly above the median form the high-risk group;
    ties at the median go to the low-risk group.  The test statistic is the
    standard (O-E)^2/V chi-square with one degree of freedom.
    """
    risk = np.asarray(risk, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event).astype(bool)
    if not (risk.ndim == 1 and risk.shape == time.shape == event.shape):
        raise InvalidArgumentError("risk, time and event must be aligned 1-D arrays")
    cutoff = float(np.median(risk))
    high = risk > cutoff
    if not high.any() or high.all():
        raise DegenerateSplitError("median split produced an empty risk group")

    o_minus_e = 0.0
    var = 0.0
    for t in np.unique(time[event]):
        at_risk = time >= t
        n = int(at_risk.sum())
        n_high = int((at_risk & high).sum())
        d = int(((time == t) & event).sum())
        d_high = int(((time == t) & event & high).sum())
        expected = d * n_high / n
        o_minus_e += d_high - expected
        if n > 1:
            var += d * (n_high / n) * (1 - n_high / n) * (n - d) / (n - 1)
    if var == 0.0:
        raise DegenerateSplitError("log-rank variance is zero (no overlapping risk sets)")
    chi2 = o_minus_e**2 / var
    return KmLogrankResult(
        cutoff=cutoff,
        high=km_curve(time[high], event[high]),
        low=km_curve(time[~high], event[~high]),
        n_high=int(high.sum()),
        n_low=int((~high).sum()),
        chi2=float(chi2),
        p_value=_chi2_1_sf(float(chi2)),
    )


# --------------------------------------------------------------------------
# Cross-task rank aggregation


@dataclass(frozen=True)
class BenchmarkTable:
    """One task's primary-metric column: model -> value (higher is better).

    ``tiebreak`` optionally refines ordering among equal values (e.g. the CI
    midpoint from the source table); models still tied after the tiebreak
    share the mean of the ranks they span.
    """

    task_id: str
    metric: str
    values: Mapping[str, float]
    tiebreak: Mapping[str, float] | None = None

    def __post_init__(self):
        if not self.values:
            raise InvalidArgumentError(f"{self.task_id}: empty benchmark table")


@dataclass
class RankSummary:
    models: tuple[str, ...]
    n_tasks: int
    mean_rank: dict[str, float]
    first_places: dict[str, int]
    per_task_rank: dict[str, dict[str, float]] = field(default_factory=dict)
    per_task_value: dict[str, dict[str, float]] = field(default_factory=dict)


def _table_ranks(table: BenchmarkTable, models: Sequence[str]) -> dict[str, float]:
    for m in models:
        if m not in table.values:
            raise InvalidArgumentError(f"task {table.task_id!r} missing model {m!r}")
    tb = table.tiebreak or {}
    keys = {m: (-float(table.values[m]), -float(tb.get(m, 0.0))) for m in models}
    ordered = sorted(models, key=lambda m: keys[m])
    ranks: dict[str, float] = {}
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and keys[ordered[j + 1]] == keys[ordered[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for m in ordered[i : j + 1]:
            ranks[m] = shared
        i = j + 1
    return ranks


def rank_aggregate(tables: Sequence[BenchmarkTable], models: Sequence[str] | None = None) -> RankSummary:
    """Mean rank and first-place count per model across benchmark tables.

    Rank 1 is the best (highest) value; ties share the mean of their rank
    span.  A model counts as "first" on a task when its value equals the
    task's maximum (so shared bests all count).  Every table must cover
    every model.
    """
    if not tables:
        raise InvalidArgumentError("no benchmark tables given")
    if models is None:
        models = tuple(sorted(tables[0].values))
    else:
        models = tuple(models)
    rank_sum = {m: 0.0 for m in models}
    firsts = {m: 0 for m in models}
    per_task_rank: dict[str, dict[str, float]] = {}
    per_task_value: dict[str, dict[str, float]] = {}
    for table in tables:
        ranks = _table_ranks(table, models)
        best = max(float(table.values[m]) for m in models)
        for m in models:
            rank_sum[m] += ranks[m]
            if float(table.values[m]) == best:
                firsts[m] += 1
        per_task_rank[table.task_id] = ranks
        per_task_value[table.task_id] = {m: float(table.values[m]) for m in models}
    n = len(tables)
    return RankSummary(
        models=models,
        n_tasks=n,
        mean_rank={m: rank_sum[m] / n for m in models},
        first_places=firsts,
        per_task_rank=per_task_rank,
        per_task_value=per_task_value,
    )
