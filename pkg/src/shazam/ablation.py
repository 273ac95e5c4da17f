"""Ablation studies: teacher removal, scale combinations, gating on/off.

Every variant of one study trains on the *same* patient-stratified folds
(the fold assignment is hashed into the plan so runs are provably
comparable), differing only in which teachers, scales, or gating mode the
student sees.  Results are per-run rows plus a mean/std summary per
variant.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .features import SCALE_ORDER, FeatureSet, Fold, SampleRecord, ScaleLevel, patient_split, slide_bags
from .fusion import FusionConfig
from .stats import concordance_index, pcc
from .tasks import TaskKind, TrainConfig
from .train import evaluate, train

__all__ = [
    "AblationKind",
    "AblationVariant",
    "AblationPlan",
    "plan_ablation",
    "teacher_order",
    "restrict_teachers",
    "AblationRun",
    "AblationResult",
    "run_ablation",
    "write_ablation_csv",
]


class AblationKind(str, Enum):
    TEACHER_REMOVAL = "teacher_removal"
    SCALE_COMBO = "scale_combo"
    MOE_SWITCH = "moe_switch"


@dataclass(frozen=True)
class AblationVariant:
    """One training condition: which teachers/scales/gating the student gets."""

    name: str
    teachers: tuple[str, ...]
    scales: tuple[ScaleLevel, ...]
    use_gate: bool = True


@dataclass
class AblationPlan:
    kind: AblationKind
    variants: list[AblationVariant]
    folds: list[Fold]
    splits_hash: str
    teacher_ranking: tuple[str, ...]  # best first
    standalone_scores: dict[str, float]


def _splits_hash(folds: list[Fold]) -> str:
    h = hashlib.sha256()
    for i, fold in enumerate(folds):
        h.update(f"fold{i}:".encode())
        h.update(",".join(sorted(fold.test_ids)).encode())
        h.update(b"\n")
    return h.hexdigest()


def _standalone_probe(fs: FeatureSet, teacher_idx: int, seed: int = 0) -> float:
    """Cheap solo-teacher score: closed-form ridge probe on a 50/50 split.

    Used only when the container doesn't record teacher scores.  The probe
    concatenates the teacher's three scale vectors (slide-mean for bag
    cohorts) and fits ridge regression against the task target.
    """
    if fs.manifest.task_kind is TaskKind.SURVIVAL:
        bags = slide_bags(fs)
        x = np.stack(
            [
                np.concatenate(
                    [
                        np.mean([t.features[teacher_idx].vector(s) for t in bag.tiles], axis=0)
                        for s in SCALE_ORDER
                    ]
                )
                for bag in bags
            ]
        ).astype(np.float64)
        times = np.array([b.label.time for b in bags])
        events = np.array([b.label.event for b in bags], dtype=bool)
        y = (-np.log(times))[:, None]
    else:
        x = np.stack(
            [
                np.concatenate([rec.features[teacher_idx].vector(s) for s in SCALE_ORDER])
                for rec in fs.samples
            ]
        ).astype(np.float64)
        if fs.manifest.task_kind is TaskKind.CLASSIFICATION:
            labels = np.array([rec.label.class_index for rec in fs.samples])
            n_classes = int(labels.max()) + 1
            y = np.eye(n_classes)[labels]
        else:
            y = np.log1p(np.stack([rec.label.values for rec in fs.samples]).astype(np.float64))

    rng = np.random.default_rng([seed, teacher_idx])
    order = rng.permutation(x.shape[0])
    half = x.shape[0] // 2
    tr, te = order[:half], order[half:]
    if len(tr) < 2 or len(te) < 2:
        raise InvalidArgumentError("cohort too small for a standalone probe")
    xm = x[tr].mean(axis=0)
    xtr, xte = x[tr] - xm, x[te] - xm
    alpha = 1.0
    w = np.linalg.solve(xtr.T @ xtr + alpha * np.eye(x.shape[1]), xtr.T @ (y[tr] - y[tr].mean(axis=0)))
    pred = xte @ w + y[tr].mean(axis=0)

    if fs.manifest.task_kind is TaskKind.CLASSIFICATION:
        return float(np.mean(pred.argmax(axis=1) == np.argmax(y[te], axis=1)))
    if fs.manifest.task_kind is TaskKind.EXPRESSION:
        vals = []
        for g in range(y.shape[1]):
            col_p, col_t = pred[:, g], y[te][:, g]
            if np.ptp(col_t) > 0 and np.ptp(col_p) > 0:
                vals.append(pcc(col_p, col_t))
        return float(np.mean(vals)) if vals else 0.0
    return concordance_index(pred[:, 0], times[te], events[te])


def teacher_order(fs: FeatureSet, seed: int = 0) -> tuple[tuple[str, ...], dict[str, float]]:
    """Teachers sorted best-first by solo score (recorded, spec'd, or probed)."""
    scores: dict[str, float] = {}
    recorded = fs.manifest.teacher_scores or {}
    for i, t in enumerate(fs.teachers):
        if t.name in recorded:
            scores[t.name] = float(recorded[t.name])
        elif t.standalone_score is not None:
            scores[t.name] = float(t.standalone_score)
        else:
            scores[t.name] = _standalone_probe(fs, i, seed)
    ranking = tuple(sorted(scores, key=lambda n: (-scores[n], n)))
    return ranking, scores


def restrict_teachers(fs: FeatureSet, names: tuple[str, ...]) -> FeatureSet:
    """Project a feature set onto a subset of its teachers (order preserved)."""
    keep = [i for i, t in enumerate(fs.teachers) if t.name in set(names)]
    if len(keep) != len(names):
        missing = set(names) - {t.name for t in fs.teachers}
        raise InvalidArgumentError(f"unknown teachers: {sorted(missing)}")
    if len(keep) == len(fs.teachers):
        return fs
    teachers = tuple(fs.teachers[i] for i in keep)
    samples = [
        SampleRecord(rec.sample_id, rec.label, tuple(rec.features[i] for i in keep))
        for rec in fs.samples
    ]
    return FeatureSet(teachers, samples, fs.manifest)


_SCALE_COMBOS: tuple[tuple[ScaleLevel, ...], ...] = (
    (ScaleLevel.LOW,),
    (ScaleLevel.MID,),
    (ScaleLevel.HIGH,),
    (ScaleLevel.LOW, ScaleLevel.MID),
    (ScaleLevel.LOW, ScaleLevel.HIGH),
    (ScaleLevel.MID, ScaleLevel.HIGH),
    (ScaleLevel.LOW, ScaleLevel.MID, ScaleLevel.HIGH),
)


def plan_ablation(
    fs: FeatureSet,
    kind: AblationKind,
    k_folds: int = 2,
    seed: int = 0,
) -> AblationPlan:
    """Enumerate variants and fix the shared folds for one study.

    Teacher removal follows the solo-score ranking: drop the best teacher,
    drop the runner-up, then cumulatively drop the top-k for
    ``k = 2 .. N-2`` (always keeping at least two).
    """
    folds = patient_split(fs, k_folds, seed)
    ranking, scores = teacher_order(fs, seed)
    all_names = tuple(t.name for t in fs.teachers)
    n = len(all_names)

    variants: list[AblationVariant] = []
    if kind is AblationKind.TEACHER_REMOVAL:
        if n < 3:
            raise InvalidArgumentError("teacher removal needs at least three teachers")
        variants.append(AblationVariant("full", all_names, SCALE_ORDER))
        for t in ranking[:2]:
            kept = tuple(name for name in all_names if name != t)
            variants.append(AblationVariant(f"drop_{t}", kept, SCALE_ORDER))
        for k in range(2, n - 1):
            dropped = set(ranking[:k])
            kept = tuple(name for name in all_names if name not in dropped)
            variants.append(AblationVariant(f"drop_top{k}", kept, SCALE_ORDER))
    elif kind is AblationKind.SCALE_COMBO:
        for combo in _SCALE_COMBOS:
            name = "_".join(s.name.lower() for s in combo)
            variants.append(AblationVariant(name, all_names, combo))
    elif kind is AblationKind.MOE_SWITCH:
        variants.append(AblationVariant("moe_on", all_names, SCALE_ORDER, use_gate=True))
        variants.append(AblationVariant("moe_off", all_names, SCALE_ORDER, use_gate=False))
    else:  # pragma: no cover - exhaustive over the enum
        raise InvalidArgumentError(f"unknown ablation kind {kind!r}")

    return AblationPlan(
        kind=kind,
        variants=variants,
        folds=folds,
        splits_hash=_splits_hash(folds),
        teacher_ranking=ranking,
        standalone_scores=scores,
    )


@dataclass
class AblationRun:
    variant: str
    fold: int
    repeat: int
    seed: int
    metrics: dict[str, float]


@dataclass
class AblationResult:
    plan: AblationPlan
    runs: list[AblationRun]

    def summary(self) -> dict[tuple[str, str], tuple[float, float, int]]:
        """(variant, metric) -> (mean, std over runs, n_runs); std is population."""
        grouped: dict[tuple[str, str], list[float]] = {}
        for run in self.runs:
            for metric, value in run.metrics.items():
                grouped.setdefault((run.variant, metric), []).append(value)
        return {
            key: (float(np.mean(vals)), float(np.std(vals)), len(vals))
            for key, vals in grouped.items()
        }


def _run_seed(base: int, fold: int, repeat: int) -> int:
    return base * 10_000 + fold * 100 + repeat


def _run_single(args) -> AblationRun:
    fs, variant, fold, fold_idx, repeat, cfg, fusion_template, head_hidden, head_dropout = args
    sub = restrict_teachers(fs, variant.teachers)
    train_fs = sub.subset(fold.train_ids)
    test_fs = sub.subset(fold.test_ids)
    run_seed = _run_seed(cfg.seed, fold_idx, repeat)
    run_cfg = replace(cfg, seed=run_seed)
    fusion = replace(
        fusion_template, scales=variant.scales, use_gate=variant.use_gate, seed=run_seed
    )
    result = train(train_fs, run_cfg, fusion, head_hidden=head_hidden, head_dropout=head_dropout)
    ev = evaluate(result.model, test_fs, with_ci=False)
    return AblationRun(
        variant=variant.name,
        fold=fold_idx,
        repeat=repeat,
        seed=run_seed,
        metrics={name: report.value for name, report in ev.metrics.items()},
    )


def run_ablation(
    fs: FeatureSet,
    plan: AblationPlan,
    cfg: TrainConfig,
    fusion: FusionConfig | None = None,
    repeats: int = 1,
    jobs: int = 1,
    *,
    head_hidden: tuple[int, ...] = (64,),
    head_dropout: float = 0.0,
) -> AblationResult:
    """Train and score every (variant, fold, repeat) cell of the study.

    Runs are independent and seeded by (config seed, fold, repeat), so the
    result is identical whatever ``jobs`` is.  The compact head default
    suits ablation-scale cohorts; pass wider widths for full runs.
    """
    if repeats < 1:
        raise InvalidArgumentError("repeats must be >= 1")
    if fusion is None:
        fusion = FusionConfig(seed=cfg.seed)
    tasks = [
        (fs, variant, fold, fold_idx, repeat, cfg, fusion, head_hidden, head_dropout)
        for variant in plan.variants
        for fold_idx, fold in enumerate(plan.folds)
        for repeat in range(repeats)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_single, tasks))
    else:
        runs = [_run_single(t) for t in tasks]
    return AblationResult(plan=plan, runs=runs)


def write_ablation_csv(result: AblationResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Write per-run rows and the mean/std summary; returns both paths.

    The summary also carries the solo-teacher scores (rows named
    ``standalone_<teacher>``) so removal studies read like the published
    comparison: baselines, removals, full model.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs_path = out / "ablation_runs.csv"
    summary_path = out / "ablation_summary.csv"

    with open(runs_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "splits_hash", "variant", "fold", "repeat", "seed", "metric", "value"])
        for run in result.runs:
            for metric, value in sorted(run.metrics.items()):
                w.writerow(
                    [
                        result.plan.kind.value,
                        result.plan.splits_hash,
                        run.variant,
                        run.fold,
                        run.repeat,
                        run.seed,
                        metric,
                        repr(value),
                    ]
                )

    summary = result.summary()
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "splits_hash", "variant", "metric", "mean", "std", "n_runs"])
        if result.plan.kind is AblationKind.TEACHER_REMOVAL:
            for name in result.plan.teacher_ranking:
                w.writerow(
                    [
                        result.plan.kind.value,
                        result.plan.splits_hash,
                        f"standalone_{name}",
                        "solo_score",
                        repr(result.plan.standalone_scores[name]),
                        repr(0.0),
                        1,
                    ]
                )
        for (variant, metric), (mean, std, n) in sorted(summary.items()):
            w.writerow(
                [
                    result.plan.kind.value,
                    result.plan.splits_hash,
                    variant,
                    metric,
                    repr(mean),
                    repr(std),
                    n,
                ]
            )
    return runs_path, summary_path
