"""Training and evaluation loops for the three task families.

The trainer consumes feature containers (teachers stay frozen — their
features are inputs, never parameters), fits the fusion student plus one
task head with the decoupled-decay optimizer, and logs per-epoch loss
composition, per-step breakdowns, and gate diagnostics as CSV.  Everything
is seeded: global torch RNG for dropout masks, one RNG substream per epoch
for batch order, per-component generators for parameter init.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import save_checkpoint
from .distill import DistillConfig, distill_total, total_loss
from .errors import InvalidArgumentError, NumericError, UndefinedCorrelationError
from .features import (
    FeatureSet,
    SampleRecord,
    ScaleLevel,
    slide_bags,
    stacked_features,
)
from .fusion import FusionConfig
from .model import StudentModel
from .optim import AdamW
from .stats import MetricReport, bootstrap_ci, classification_metrics, concordance_index, pcc
from .tasks import (
    ClassLabel,
    ExpressionLabel,
    HeadConfig,
    SurvivalLabel,
    TaskKind,
    TrainConfig,
    cosine_lr,
    filter_cohort,
    log_normalize_expression,
    nll_survival_loss,
    ridge_loss,
    survival_bins,
)

__all__ = [
    "TileData",
    "BagData",
    "classification_data",
    "expression_data",
    "prepare_expression_cohort",
    "survival_data",
    "build_model",
    "TrainResult",
    "train",
    "EvalResult",
    "evaluate",
    "cumulative_hazard_risk",
    "write_predictions",
]


# --------------------------------------------------------------------------
# Dataset assembly


@dataclass
class TileData:
    """Per-sample feature arrays for tile-level tasks (one row per sample)."""

    sample_ids: tuple[str, ...]
    features: dict[tuple[int, ScaleLevel], np.ndarray]  # (n, native_dim) float32
    y_class: np.ndarray | None = None  # (n,) int64
    y_expr: np.ndarray | None = None  # (n, n_genes) float32, log1p-transformed
    gene_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return len(self.sample_ids)


@dataclass
class BagData:
    """Slide bags for bag-level survival."""

    slide_ids: tuple[str, ...]
    bags: list[dict[tuple[int, ScaleLevel], np.ndarray]]  # (n_tiles, native_dim) each
    times: np.ndarray  # (n_slides,) float64
    events: np.ndarray  # (n_slides,) bool

    @property
    def n(self) -> int:
        return len(self.slide_ids)


def classification_data(fs: FeatureSet) -> TileData:
    labels = []
    for rec in fs.samples:
        if not isinstance(rec.label, ClassLabel):
            raise InvalidArgumentError(
                f"sample {rec.sample_id!r} has a {type(rec.label).__name__}, expected ClassLabel"
            )
        labels.append(rec.label.class_index)
    return TileData(
        sample_ids=fs.sample_ids(),
        features=stacked_features(fs),
        y_class=np.asarray(labels, dtype=np.int64),
    )


def prepare_expression_cohort(
    fs: FeatureSet,
    *,
    slide_zero_frac: float = 0.5,
    gene_zero_frac: float = 0.5,
) -> FeatureSet:
    """Quality-filter an expression cohort before any split.

    Drops slides where at least half the genes are all-zero, then genes that
    are all-zero in at least half of the remaining slides — a single pass,
    slides first.  Samples of dropped slides are removed and every kept
    spot's expression vector is sliced down to the kept genes.  Raw counts
    are preserved; the log1p transform happens at array-build time.
    """
    if fs.manifest.slide_map is None:
        raise InvalidArgumentError("expression cohort needs a slide map for filtering")
    by_slide: dict[str, list[np.ndarray]] = {}
    for rec in fs.samples:
        if not isinstance(rec.label, ExpressionLabel):
            raise InvalidArgumentError(
                f"sample {rec.sample_id!r} has a {type(rec.label).__name__}, expected ExpressionLabel"
            )
        by_slide.setdefault(fs.manifest.slide_map[rec.sample_id], []).append(rec.label.values)
    expr_by_slide = {sid: np.stack(rows) for sid, rows in by_slide.items()}
    kept_slides, kept_genes = filter_cohort(
        expr_by_slide, slide_zero_frac=slide_zero_frac, gene_zero_frac=gene_zero_frac
    )
    kept_slide_set = set(kept_slides)

    samples = []
    for rec in fs.samples:
        if fs.manifest.slide_map[rec.sample_id] not in kept_slide_set:
            continue
        sliced = ExpressionLabel(values=np.ascontiguousarray(rec.label.values[kept_genes]))
        samples.append(SampleRecord(rec.sample_id, sliced, rec.features))
    old_names = fs.manifest.gene_names
    gene_names = (
        tuple(old_names[g] for g in kept_genes)
        if old_names is not None
        else tuple(f"g{g}" for g in kept_genes)
    )
    manifest = replace(
        fs.manifest,
        n_samples=len(samples),
        gene_names=gene_names,
        patient_map={r.sample_id: fs.manifest.patient_map.get(r.sample_id) for r in samples},
        slide_map={r.sample_id: fs.manifest.slide_map[r.sample_id] for r in samples},
    )
    return FeatureSet(fs.teachers, samples, manifest)


def expression_data(fs: FeatureSet) -> TileData:
    """Arrays for a (pre-filtered) expression cohort; targets are log1p counts."""
    rows = []
    for rec in fs.samples:
        if not isinstance(rec.label, ExpressionLabel):
            raise InvalidArgumentError(
                f"sample {rec.sample_id!r} has a {type(rec.label).__name__}, expected ExpressionLabel"
            )
        rows.append(log_normalize_expression(rec.label.values))
    y = np.stack(rows).astype(np.float32) if rows else np.zeros((0, 0), dtype=np.float32)
    names = fs.manifest.gene_names
    if names is None and y.shape[1] > 0:
        names = tuple(f"g{j}" for j in range(y.shape[1]))
    return TileData(
        sample_ids=fs.sample_ids(),
        features=stacked_features(fs),
        y_expr=y,
        gene_names=names,
    )


def survival_data(fs: FeatureSet) -> BagData:
    bags = slide_bags(fs)
    feats, times, events, ids = [], [], [], []
    for bag in bags:
        if not isinstance(bag.label, SurvivalLabel):
            raise InvalidArgumentError(
                f"slide {bag.slide_id!r} has a {type(bag.label).__name__}, expected SurvivalLabel"
            )
        feats.append(stacked_features(bag.tiles, fs.teachers))
        times.append(bag.label.time)
        events.append(bag.label.event)
        ids.append(bag.slide_id)
    return BagData(
        slide_ids=tuple(ids),
        bags=feats,
        times=np.asarray(times, dtype=np.float64),
        events=np.asarray(events, dtype=bool),
    )


# --------------------------------------------------------------------------
# Model assembly


def build_model(
    fs: FeatureSet,
    cfg: TrainConfig,
    fusion: FusionConfig | None = None,
    *,
    head_hidden: tuple[int, ...] = (256, 128),
    head_dropout: float = 0.1,
    mil_hidden: int = 128,
) -> StudentModel:
    """Construct the student for a cohort: head width follows the task."""
    if fusion is None:
        fusion = FusionConfig(seed=cfg.seed)
    if cfg.task is TaskKind.CLASSIFICATION:
        num_classes = fs.manifest.num_classes
        if num_classes is None:
            num_classes = 1 + max(
                rec.label.class_index for rec in fs.samples if isinstance(rec.label, ClassLabel)
            )
        out_dim = int(num_classes)
    elif cfg.task is TaskKind.EXPRESSION:
        first = fs.samples[0].label
        if not isinstance(first, ExpressionLabel):
            raise InvalidArgumentError("expression task needs ExpressionLabel samples")
        out_dim = int(first.values.shape[0])
    else:
        out_dim = cfg.num_bins
    head = HeadConfig(
        task=cfg.task,
        in_dim=len(fusion.scales) * fusion.embed_dim,
        out_dim=out_dim,
        hidden=head_hidden,
        dropout=head_dropout,
    )
    return StudentModel(
        teachers=fs.teachers,
        fusion_config=fusion,
        head_config=head,
        with_mil=cfg.task is TaskKind.SURVIVAL,
        mil_hidden=mil_hidden,
    )


# --------------------------------------------------------------------------
# Training


@dataclass
class EpochRow:
    epoch: int
    split: str  # "train" | "val"
    task_loss: float
    distill_total: float
    total: float
    lr: float


@dataclass
class TrainResult:
    model: StudentModel
    history: list[EpochRow]
    best_epoch: int
    stopped_early: bool
    bin_edges: np.ndarray | None = None  # survival only
    gene_names: tuple[str, ...] | None = None  # expression only
    checkpoint_path: Path | None = None
    gate_means: dict[tuple[int, ScaleLevel, str], float] = field(default_factory=dict)
    # gate_means keys: (epoch, scale, teacher_name)


def _batch_tensors(
    features: dict[tuple[int, ScaleLevel], np.ndarray], idx: np.ndarray
) -> dict[tuple[int, ScaleLevel], torch.Tensor]:
    return {k: torch.from_numpy(v[idx]) for k, v in features.items()}


def _bag_tensors(bag: dict[tuple[int, ScaleLevel], np.ndarray]) -> dict[tuple[int, ScaleLevel], torch.Tensor]:
    return {k: torch.from_numpy(v) for k, v in bag.items()}


class _GateMeter:
    """Streaming float64 mean of gate weights per (scale, teacher)."""

    def __init__(self, teachers: Sequence[str], scales: Sequence[ScaleLevel]):
        self.teachers = tuple(teachers)
        self.scales = tuple(scales)
        self.sums = {(s, t): 0.0 for s in self.scales for t in self.teachers}
        self.count = 0

    def update(self, gates_by_scale: dict[ScaleLevel, torch.Tensor]) -> None:
        n_rows = None
        for scale in self.scales:
            g = gates_by_scale[scale].detach().double().reshape(-1, len(self.teachers))
            n_rows = g.shape[0]
            col_sums = g.sum(dim=0)
            for j, t in enumerate(self.teachers):
                self.sums[(scale, t)] += float(col_sums[j])
        if n_rows:
            self.count += n_rows

    def means(self) -> dict[tuple[ScaleLevel, str], float]:
        if self.count == 0:
            return {k: float("nan") for k in self.sums}
        return {k: v / self.count for k, v in self.sums.items()}


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float | None:
    """Scheduled LR for this epoch, or None when plateau logic owns it."""
    if cfg.schedule == "cosine":
        return cosine_lr(epoch, cfg.epochs, cfg.learning_rate, cfg.lr_min)
    if cfg.schedule == "none":
        return cfg.learning_rate
    return None


def train(
    train_fs: FeatureSet,
    cfg: TrainConfig,
    fusion: FusionConfig | None = None,
    val_fs: FeatureSet | None = None,
    out_dir: str | Path | None = None,
    *,
    head_hidden: tuple[int, ...] = (256, 128),
    head_dropout: float = 0.1,
    mil_hidden: int = 128,
    log_steps: bool = False,
) -> TrainResult:
    """Fit a student on one cohort.

    Expression cohorts must already be filtered
    (:func:`prepare_expression_cohort`) so train and validation share a gene
    panel.  Early stopping and the plateau schedule monitor validation total
    loss when ``val_fs`` is given, else training total loss; early stopping
    restores the best-epoch weights.
    """
    if cfg.task is not train_fs_task(train_fs):
        raise InvalidArgumentError(
            f"config task {cfg.task.value!r} != cohort task {train_fs_task(train_fs).value!r}"
        )
    model = build_model(
        train_fs,
        cfg,
        fusion,
        head_hidden=head_hidden,
        head_dropout=head_dropout,
        mil_hidden=mil_hidden,
    )
    torch.manual_seed(cfg.seed)  # dropout masks; parameter init has its own generators

    tile_train = tile_val = None
    bag_train = bag_val = None
    bin_edges = None
    train_bins = None
    if cfg.task is TaskKind.CLASSIFICATION:
        tile_train = classification_data(train_fs)
        tile_val = classification_data(val_fs) if val_fs is not None else None
        n_train = tile_train.n
    elif cfg.task is TaskKind.EXPRESSION:
        tile_train = expression_data(train_fs)
        tile_val = expression_data(val_fs) if val_fs is not None else None
        if tile_val is not None and tile_val.y_expr.shape[1] != tile_train.y_expr.shape[1]:
            raise InvalidArgumentError(
                "train/val gene panels differ; filter the cohort before splitting"
            )
        n_train = tile_train.n
    else:
        bag_train = survival_data(train_fs)
        bag_val = survival_data(val_fs) if val_fs is not None else None
        edges, bins = survival_bins(bag_train.times, bag_train.events, cfg.num_bins)
        bin_edges, train_bins = edges, bins
        n_train = bag_train.n
    if n_train == 0:
        raise InvalidArgumentError("training cohort is empty")

    opt = AdamW(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    dcfg = DistillConfig(lambda_distill=cfg.lambda_distill, huber_delta=cfg.huber_delta)

    out_path = Path(out_dir) if out_dir is not None else None
    epoch_writer = step_writer = gate_writer = None
    files = []
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        f_epoch = open(out_path / "epochs.csv", "w", newline="")
        files.append(f_epoch)
        epoch_writer = csv.writer(f_epoch)
        epoch_writer.writerow(["epoch", "split", "task_loss", "distill_total", "total", "lr"])
        f_gates = open(out_path / "gates.csv", "w", newline="")
        files.append(f_gates)
        gate_writer = csv.writer(f_gates)
        gate_writer.writerow(["epoch", "scale", "teacher", "mean_gate"])
        if log_steps:
            f_steps = open(out_path / "steps.csv", "w", newline="")
            files.append(f_steps)
            step_writer = csv.writer(f_steps)

    history: list[EpochRow] = []
    gate_means: dict[tuple[int, ScaleLevel, str], float] = {}
    teacher_names = [t.name for t in model.teachers]
    monitor_best = float("inf")
    best_epoch = -1
    best_state: dict[str, torch.Tensor] | None = None
    epochs_since_best = 0
    plateau_bad = 0
    plateau_lr = cfg.learning_rate
    stopped_early = False
    global_step = 0
    step_header_written = False

    try:
        for epoch in range(cfg.epochs):
            lr = _epoch_lr(cfg, epoch)
            if lr is None:
                lr = plateau_lr
            model.train()
            rng = np.random.default_rng([cfg.seed, epoch])
            order = rng.permutation(n_train)
            meter = _GateMeter(teacher_names, model.fusion_config.scales)

            sums = np.zeros(3, dtype=np.float64)  # task, distill, total (sample-weighted)
            weight = 0
            for start in range(0, n_train, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                if cfg.task is TaskKind.SURVIVAL:
                    out, task_t = _survival_batch(model, bag_train, train_bins, idx)
                else:
                    out, task_t = _tile_batch(model, cfg, tile_train, idx)
                if cfg.lambda_distill > 0:
                    dist_t, terms = distill_total(out.z_by_scale, out.distill_targets, dcfg)
                else:
                    dist_t, terms = 0.0, None
                loss_t, breakdown = total_loss(task_t, dist_t, dcfg, terms)
                if not torch.isfinite(loss_t):
                    raise NumericError("non-finite training loss", step=global_step)
                opt.zero_grad()
                loss_t.backward()
                opt.step(lr=lr)

                if model.fusion_config.use_gate:
                    meter.update(out.gates_by_scale)
                if step_writer is not None:
                    if not step_header_written:
                        step_writer.writerow(breakdown.csv_header())
                        step_header_written = True
                    step_writer.writerow(breakdown.csv_row(global_step))
                k = len(idx)
                sums += k * np.array([breakdown.task_loss, breakdown.distill_total, breakdown.total])
                weight += k
                global_step += 1

            train_row = EpochRow(
                epoch,
                "train",
                float(sums[0] / weight),
                float(sums[1] / weight),
                float(sums[2] / weight),
                lr,
            )
            history.append(train_row)

            if model.fusion_config.use_gate:
                epoch_gates = meter.means()
            else:
                # Gating disabled: the mixing weight is the constant 1/N.
                uniform = 1.0 / len(teacher_names)
                epoch_gates = {
                    (s, t): uniform for s in model.fusion_config.scales for t in teacher_names
                }
            for (scale, teacher), value in epoch_gates.items():
                gate_means[(epoch, scale, teacher)] = value
                if gate_writer is not None:
                    gate_writer.writerow([epoch, scale.name, teacher, repr(value)])

            if val_fs is not None:
                val_row = _validation_row(
                    model, cfg, dcfg, epoch, lr, tile_val, bag_val, bin_edges
                )
                history.append(val_row)
                monitor = val_row.total
            else:
                monitor = train_row.total

            if epoch_writer is not None:
                for row in history[-(2 if val_fs is not None else 1) :]:
                    epoch_writer.writerow(
                        [
                            row.epoch,
                            row.split,
                            repr(row.task_loss),
                            repr(row.distill_total),
                            repr(row.total),
                            repr(row.lr),
                        ]
                    )

            if monitor < monitor_best:
                monitor_best = monitor
                best_epoch = epoch
                epochs_since_best = 0
                plateau_bad = 0
                if cfg.early_stop_patience is not None:
                    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            else:
                epochs_since_best += 1
                plateau_bad += 1
                if cfg.schedule == "plateau" and plateau_bad > cfg.plateau_patience:
                    plateau_lr *= cfg.plateau_factor
                    plateau_bad = 0
                if (
                    cfg.early_stop_patience is not None
                    and epochs_since_best >= cfg.early_stop_patience
                ):
                    stopped_early = True
                    break
        # With early stopping enabled the best-monitor weights win, whether
        # or not the patience actually triggered.
        if best_state is not None:
            model.load_state_dict(best_state)
    finally:
        for f in files:
            f.close()

    result = TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        stopped_early=stopped_early,
        bin_edges=bin_edges,
        gene_names=tile_train.gene_names if cfg.task is TaskKind.EXPRESSION else None,
        gate_means=gate_means,
    )
    if out_path is not None:
        ckpt = out_path / "model.shzc"
        save_checkpoint(model, ckpt)
        result.checkpoint_path = ckpt
    return result


def train_fs_task(fs: FeatureSet) -> TaskKind:
    return fs.manifest.task_kind


def _tile_batch(
    model: StudentModel, cfg: TrainConfig, data: TileData, idx: np.ndarray
):
    out = model.forward_tiles(_batch_tensors(data.features, idx))
    if cfg.task is TaskKind.CLASSIFICATION:
        y = torch.from_numpy(data.y_class[idx])
        task_t = F.cross_entropy(out.logits, y)
    else:
        y = torch.from_numpy(data.y_expr[idx])
        task_t = ridge_loss(out.logits, y, cfg.ridge_l2, model.head.penalized_weights())
    return out, task_t


def _survival_batch(model: StudentModel, data: BagData, bins: np.ndarray, idx: np.ndarray):
    outs = [model.forward_slide(_bag_tensors(data.bags[i])) for i in idx]
    logits = torch.stack([o.logits for o in outs])
    merged = _stack_outputs(outs, logits)
    task_t = nll_survival_loss(
        logits,
        torch.from_numpy(bins[idx]),
        torch.from_numpy(data.events[idx].astype(np.bool_)),
    )
    return merged, task_t


def _stack_outputs(outs, logits: torch.Tensor) -> "StudentOutputLike":
    z_by_scale = {
        scale: torch.stack([o.z_by_scale[scale] for o in outs]) for scale in outs[0].z_by_scale
    }
    targets = {
        key: torch.stack([o.distill_targets[key] for o in outs])
        for key in outs[0].distill_targets
    }
    gates = {
        scale: torch.stack([o.gates_by_scale[scale] for o in outs])
        for scale in outs[0].gates_by_scale
    }
    return StudentOutputLike(logits, z_by_scale, targets, gates)


@dataclass
class StudentOutputLike:
    """Batch-stacked slide outputs (same field contract as StudentOutput)."""

    logits: torch.Tensor
    z_by_scale: dict[ScaleLevel, torch.Tensor]
    distill_targets: dict[tuple[ScaleLevel, str], torch.Tensor]
    gates_by_scale: dict[ScaleLevel, torch.Tensor]


@torch.no_grad()
def _validation_row(
    model: StudentModel,
    cfg: TrainConfig,
    dcfg: DistillConfig,
    epoch: int,
    lr: float,
    tile_val: TileData | None,
    bag_val: BagData | None,
    bin_edges: np.ndarray | None,
) -> EpochRow:
    model.eval()
    if cfg.task is TaskKind.SURVIVAL:
        idx = np.arange(bag_val.n)
        bins = (
            np.searchsorted(bin_edges, bag_val.times, side="left")
            if bin_edges is not None
            else np.zeros(bag_val.n, dtype=np.int64)
        )
        bins = np.clip(bins, 0, cfg.num_bins - 1)
        out, task_t = _survival_batch(model, bag_val, bins, idx)
    else:
        data = tile_val
        idx = np.arange(data.n)
        out, task_t = _tile_batch(model, cfg, data, idx)
    if cfg.lambda_distill > 0:
        dist_t, terms = distill_total(out.z_by_scale, out.distill_targets, dcfg)
    else:
        dist_t, terms = 0.0, None
    _, breakdown = total_loss(task_t, dist_t, dcfg, terms)
    return EpochRow(epoch, "val", breakdown.task_loss, breakdown.distill_total, breakdown.total, lr)


# --------------------------------------------------------------------------
# Evaluation


def cumulative_hazard_risk(logits: torch.Tensor) -> np.ndarray:
    """Scalar risk per sample: ``-sum_b log(1 - h_b)`` in float64.

    Monotone in every hazard, so concordance sees exactly the model's
    ordering of discrete-time risk.
    """
    if logits.ndim != 2:
        raise InvalidArgumentError(f"logits must be 2-D, got shape {tuple(logits.shape)}")
    hazards = torch.sigmoid(logits.detach().double())
    return (-torch.log1p(-hazards).sum(dim=1)).cpu().numpy()


@dataclass
class EvalResult:
    task: TaskKind
    metrics: dict[str, MetricReport]
    sample_ids: tuple[str, ...]
    y_true: np.ndarray | None = None
    y_pred: np.ndarray | None = None
    risks: np.ndarray | None = None
    times: np.ndarray | None = None
    events: np.ndarray | None = None
    gene_names: tuple[str, ...] | None = None
    per_gene_pcc: dict[str, float] | None = None


def _mean_gene_pcc(pred: np.ndarray, true: np.ndarray) -> float:
    vals = []
    for g in range(true.shape[1]):
        try:
            vals.append(pcc(pred[:, g], true[:, g]))
        except UndefinedCorrelationError:
            continue
    if not vals:
        raise UndefinedCorrelationError("every gene was constant; mean correlation undefined")
    return float(np.mean(vals))


@torch.no_grad()
def evaluate(
    model: StudentModel,
    fs: FeatureSet,
    *,
    n_boot: int = 1000,
    seed: int = 0,
    with_ci: bool = True,
) -> EvalResult:
    """Compute the task's primary metric family with bootstrap CIs."""
    model.eval()
    task = model.task
    if task is TaskKind.CLASSIFICATION:
        data = classification_data(fs)
        logits = model.forward_tiles(_batch_tensors(data.features, np.arange(data.n))).logits
        y_pred = logits.argmax(dim=1).cpu().numpy()
        y_true = data.y_class
        num_classes = fs.manifest.num_classes
        base = classification_metrics(y_true, y_pred, num_classes)
        metrics = {}
        for name, value in base.items():
            ci = (
                bootstrap_ci(
                    lambda yt, yp, _n=name: classification_metrics(yt, yp)[_n],
                    (y_true, y_pred),
                    n_boot=n_boot,
                    seed=seed,
                )
                if with_ci
                else (None, None)
            )
            metrics[name] = MetricReport(name, value, *ci, n=data.n)
        return EvalResult(task, metrics, data.sample_ids, y_true=y_true, y_pred=y_pred)

    if task is TaskKind.EXPRESSION:
        data = expression_data(fs)
        pred = (
            model.forward_tiles(_batch_tensors(data.features, np.arange(data.n)))
            .logits.double()
            .cpu()
            .numpy()
        )
        true = data.y_expr.astype(np.float64)
        value = _mean_gene_pcc(pred, true)
        ci = (
            bootstrap_ci(_mean_gene_pcc, (pred, true), n_boot=n_boot, seed=seed)
            if with_ci
            else (None, None)
        )
        per_gene = {}
        names = data.gene_names or tuple(f"g{j}" for j in range(true.shape[1]))
        for g, gname in enumerate(names):
            try:
                per_gene[gname] = pcc(pred[:, g], true[:, g])
            except UndefinedCorrelationError:
                warnings.warn(f"gene {gname} constant on this split; excluded from mean", stacklevel=2)
        return EvalResult(
            task,
            {"pcc": MetricReport("pcc", value, *ci, n=data.n)},
            data.sample_ids,
            y_true=true,
            y_pred=pred,
            gene_names=names,
            per_gene_pcc=per_gene,
        )

    data = survival_data(fs)
    logits = torch.stack(
        [model.forward_slide(_bag_tensors(bag)).logits for bag in data.bags]
    )
    risks = cumulative_hazard_risk(logits)
    value = concordance_index(risks, data.times, data.events)
    ci = (
        bootstrap_ci(concordance_index, (risks, data.times, data.events), n_boot=n_boot, seed=seed)
        if with_ci
        else (None, None)
    )
    return EvalResult(
        task,
        {"cindex": MetricReport("cindex", value, *ci, n=data.n)},
        data.slide_ids,
        risks=risks,
        times=data.times,
        events=data.events.astype(np.int64),
    )


def write_predictions(result: EvalResult, path: str | Path) -> None:
    """Per-sample predictions as CSV (shape depends on the task)."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        if result.task is TaskKind.CLASSIFICATION:
            w.writerow(["sample_id", "y_true", "y_pred"])
            for sid, yt, yp in zip(result.sample_ids, result.y_true, result.y_pred):
                w.writerow([sid, int(yt), int(yp)])
        elif result.task is TaskKind.EXPRESSION:
            names = result.gene_names or tuple(f"g{j}" for j in range(result.y_pred.shape[1]))
            w.writerow(["sample_id", *names])
            for i, sid in enumerate(result.sample_ids):
                w.writerow([sid, *(repr(float(v)) for v in result.y_pred[i])])
        else:
            w.writerow(["slide_id", "time", "event", "risk"])
            for sid, t, e, r in zip(result.sample_ids, result.times, result.events, result.risks):
                w.writerow([sid, repr(float(t)), int(e), repr(float(r))])
