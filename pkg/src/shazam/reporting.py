"""Cross-benchmark reporting: mean ranks, paired significance, KM export.

Input is a directory of benchmark CSVs (``task_id,model,metric,value,
ci_low,ci_high``; ``#`` lines are comments).  Each task family has one
primary metric; per task, models are ranked on it with the CI midpoint as
tiebreaker, then ranks are aggregated and the leader is compared against
every other model with one-sided Wilcoxon signed-rank tests.  All outputs
are CSV plus deterministic SVG plots (fixed hashsalt, no embedded dates):
rendering twice yields identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .errors import InvalidArgumentError, ShazamError  # noqa: E402
from .stats import (  # noqa: E402
    BenchmarkTable,
    KmLogrankResult,
    RankSummary,
    WilcoxonResult,
    km_logrank,
    rank_aggregate,
    wilcoxon_signed_rank,
)

__all__ = [
    "BenchmarkRow",
    "load_benchmark_rows",
    "primary_metric",
    "benchmark_tables",
    "write_rank_report",
    "WilcoxonRow",
    "wilcoxon_report",
    "write_wilcoxon_report",
    "export_km",
    "plot_mean_ranks",
    "render_benchmark_report",
]

# Primary metric per task-id prefix (the part before the first "/").
PRIMARY_METRICS: dict[str, str] = {
    "st": "pcc",
    "survival": "cindex",
    "tile": "weighted_f1",
    "vqa": "acc",
}

_SVG_RC = {"svg.hashsalt": "shazam", "svg.fonttype": "none"}


@dataclass(frozen=True)
class BenchmarkRow:
    task_id: str
    model: str
    metric: str
    value: float
    ci_low: float | None = None
    ci_high: float | None = None

    @property
    def ci_midpoint(self) -> float:
        if self.ci_low is None or self.ci_high is None:
            return self.value
        return 0.5 * (self.ci_low + self.ci_high)


def primary_metric(task_id: str) -> str:
    prefix = task_id.split("/", 1)[0]
    try:
        return PRIMARY_METRICS[prefix]
    except KeyError:
        raise InvalidArgumentError(
            f"task id {task_id!r} has no known family prefix (expected one of "
            f"{sorted(PRIMARY_METRICS)})"
        ) from None


def _parse_float(text: str, where: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        return float(text)
    except ValueError:
        raise InvalidArgumentError(f"{where}: not a number: {text!r}") from None


def load_benchmark_rows(path: str | Path) -> list[BenchmarkRow]:
    """Read one CSV file or every ``*.csv`` in a directory (sorted by name)."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise InvalidArgumentError(f"no benchmark CSVs under {path}")
    rows: list[BenchmarkRow] = []
    seen: set[tuple[str, str, str]] = set()
    for file in files:
        with open(file, newline="") as f:
            lines = [ln for ln in f if not ln.lstrip().startswith("#")]
        reader = csv.reader(lines)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidArgumentError(f"{file}: empty benchmark CSV") from None
        expected = ["task_id", "model", "metric", "value", "ci_low", "ci_high"]
        if [h.strip() for h in header] != expected:
            raise InvalidArgumentError(f"{file}: header {header} != {expected}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 6:
                raise InvalidArgumentError(f"{file}:{lineno}: expected 6 columns, got {len(rec)}")
            task_id, model, metric = rec[0].strip(), rec[1].strip(), rec[2].strip()
            key = (task_id, model, metric)
            if key in seen:
                raise InvalidArgumentError(f"{file}:{lineno}: duplicate row for {key}")
            seen.add(key)
            value = _parse_float(rec[3], f"{file}:{lineno}")
            if value is None:
                raise InvalidArgumentError(f"{file}:{lineno}: missing value")
            rows.append(
                BenchmarkRow(
                    task_id=task_id,
                    model=model,
                    metric=metric,
                    value=value,
                    ci_low=_parse_float(rec[4], f"{file}:{lineno}"),
                    ci_high=_parse_float(rec[5], f"{file}:{lineno}"),
                )
            )
    return rows


def benchmark_tables(rows: list[BenchmarkRow], prefix: str | None = None) -> list[BenchmarkTable]:
    """Group rows into per-task primary-metric tables, in first-seen order.

    ``prefix`` restricts to one task family (e.g. ``"survival"``).  The CI
    midpoint rides along as the rank tiebreaker.
    """
    by_task: dict[str, dict[str, BenchmarkRow]] = {}
    for row in rows:
        if prefix is not None and row.task_id.split("/", 1)[0] != prefix:
            continue
        if row.metric != primary_metric(row.task_id):
            continue
        by_task.setdefault(row.task_id, {})[row.model] = row
    if not by_task:
        raise InvalidArgumentError(
            "no benchmark rows matched" + (f" prefix {prefix!r}" if prefix else "")
        )
    tables = []
    for task_id, models in by_task.items():
        tables.append(
            BenchmarkTable(
                task_id=task_id,
                metric=primary_metric(task_id),
                values={m: r.value for m, r in models.items()},
                tiebreak={m: r.ci_midpoint for m, r in models.items()},
            )
        )
    return tables


def write_rank_report(summary: RankSummary, out_dir: str | Path) -> tuple[Path, Path]:
    """``ranks.csv`` (aggregate) and ``per_task_ranks.csv`` (task detail)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ranks_path = out / "ranks.csv"
    detail_path = out / "per_task_ranks.csv"
    ordered = sorted(summary.models, key=lambda m: summary.mean_rank[m])
    with open(ranks_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "mean_rank", "first_places", "n_tasks"])
        for m in ordered:
            w.writerow([m, repr(summary.mean_rank[m]), summary.first_places[m], summary.n_tasks])
    with open(detail_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task_id", "model", "rank", "value"])
        for task_id, ranks in summary.per_task_rank.items():
            for m in summary.models:
                w.writerow([task_id, m, repr(ranks[m]), repr(summary.per_task_value[task_id][m])])
    return ranks_path, detail_path


@dataclass(frozen=True)
class WilcoxonRow:
    scope: str
    model_a: str
    model_b: str
    n: int
    statistic: float
    p_value: float
    method: str
    alternative: str


def wilcoxon_report(
    rows: list[BenchmarkRow], reference: str | None = None
) -> list[WilcoxonRow]:
    """Paired one-sided tests of the leader against every other model.

    Three scopes: survival C-indexes, expression correlations (both
    ``alternative="greater"`` on metric values), and all-task ranks
    (``alternative="less"``: smaller rank is better).  Pairs whose test is
    undefined (too few usable differences) are skipped.
    """
    all_tables = benchmark_tables(rows)
    overall = rank_aggregate(all_tables)
    if reference is None:
        reference = min(overall.models, key=lambda m: overall.mean_rank[m])
    elif reference not in overall.models:
        raise InvalidArgumentError(f"reference model {reference!r} not in benchmarks")
    others = [m for m in overall.models if m != reference]

    out: list[WilcoxonRow] = []

    def _scoped(scope: str, a_vals: list[float], b_vals: list[float], other: str, alt: str):
        try:
            res: WilcoxonResult = wilcoxon_signed_rank(a_vals, b_vals, alternative=alt)
        except ShazamError:
            return
        out.append(
            WilcoxonRow(scope, reference, other, res.n, res.statistic, res.p_value, res.method, alt)
        )

    for prefix, scope in (("survival", "survival_cindex"), ("st", "st_pcc")):
        try:
            tables = benchmark_tables(rows, prefix)
        except InvalidArgumentError:
            continue
        for other in others:
            a = [t.values[reference] for t in tables]
            b = [t.values[other] for t in tables]
            _scoped(scope, a, b, other, "greater")

    for other in others:
        a = [overall.per_task_rank[t][reference] for t in overall.per_task_rank]
        b = [overall.per_task_rank[t][other] for t in overall.per_task_rank]
        _scoped("all_ranks", a, b, other, "less")
    return out


def write_wilcoxon_report(rows: list[WilcoxonRow], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "wilcoxon.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scope", "model_a", "model_b", "n", "statistic", "p_value", "method", "alternative"])
        for r in rows:
            w.writerow(
                [r.scope, r.model_a, r.model_b, r.n, repr(r.statistic), repr(r.p_value), r.method, r.alternative]
            )
    return path


# --------------------------------------------------------------------------
# Plots and survival export


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_mean_ranks(summary: RankSummary, path: str | Path) -> Path:
    """Horizontal bar chart of mean rank (best on top)."""
    path = Path(path)
    ordered = sorted(summary.models, key=lambda m: summary.mean_rank[m], reverse=True)
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 0.5 * len(ordered) + 1))
        ax.barh(ordered, [summary.mean_rank[m] for m in ordered], color="#4878a8")
        ax.set_xlabel(f"mean rank over {summary.n_tasks} tasks (lower is better)")
        ax.set_xlim(0, len(summary.models) + 0.5)
        for i, m in enumerate(ordered):
            ax.text(summary.mean_rank[m] + 0.05, i, f"{summary.mean_rank[m]:.2f}", va="center")
        fig.tight_layout()
        _save_svg(fig, path)
    return path


def export_km(
    risks,
    times,
    events,
    out_dir: str | Path,
    name: str = "km",
) -> tuple[Path, Path, KmLogrankResult]:
    """Median-risk KM split: curves CSV, SVG plot, and the log-rank result.

    The CSV holds one row per (group, event time) with survival, at-risk and
    event counts; the log-rank chi-square and p ride in ``#`` comments.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = km_logrank(risks, times, events)
    csv_path = out / f"{name}.csv"
    with open(csv_path, "w", newline="") as f:
        f.write(f"# cutoff={res.cutoff!r} chi2={res.chi2!r} p_value={res.p_value!r} ")
        f.write(f"n_high={res.n_high} n_low={res.n_low}\n")
        w = csv.writer(f)
        w.writerow(["group", "time", "survival", "at_risk", "events"])
        for group, curve in (("high", res.high), ("low", res.low)):
            for t, s, r, d in zip(curve.times, curve.survival, curve.at_risk, curve.events):
                w.writerow([group, repr(float(t)), repr(float(s)), int(r), int(d)])

    svg_path = out / f"{name}.svg"
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for group, curve, color in (("high risk", res.high, "#b2453c"), ("low risk", res.low, "#4878a8")):
            xs = [0.0, *[float(t) for t in curve.times]]
            ys = [1.0, *[float(s) for s in curve.survival]]
            ax.step(xs, ys, where="post", label=group, color=color)
        ax.set_xlabel("time")
        ax.set_ylabel("survival probability")
        ax.set_ylim(0, 1.05)
        ax.legend(title=f"log-rank p = {res.p_value:.2e}")
        fig.tight_layout()
        _save_svg(fig, svg_path)
    return csv_path, svg_path, res


@dataclass
class ReportPaths:
    ranks: Path
    per_task_ranks: Path
    wilcoxon: Path
    rank_plot: Path | None


def render_benchmark_report(
    csv_path: str | Path, out_dir: str | Path, make_plots: bool = True
) -> ReportPaths:
    """Full pipeline: load benchmark CSVs, rank, test, plot."""
    rows = load_benchmark_rows(csv_path)
    summary = rank_aggregate(benchmark_tables(rows))
    ranks_path, detail_path = write_rank_report(summary, out_dir)
    wilcoxon_path = write_wilcoxon_report(wilcoxon_report(rows), out_dir)
    plot_path = None
    if make_plots:
        plot_path = plot_mean_ranks(summary, Path(out_dir) / "mean_ranks.svg")
    return ReportPaths(ranks_path, detail_path, wilcoxon_path, plot_path)
