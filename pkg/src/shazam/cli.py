"""Command-line interface.

Five subcommands: ``synth`` (generate a planted-structure feature
container), ``train`` (fit a student on a container), ``eval`` (score a
checkpoint on a container), ``ablate`` (teacher/scale/gating studies), and
``report`` (rank + significance tables from benchmark CSVs).

Exit codes: 0 success, 2 usage or configuration errors, 3 runtime failures
(corrupt containers, numeric blow-ups, degenerate statistics).  Relative
data paths resolve against ``$SHAZAM_DATA_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import __version__
from .ablation import AblationKind, plan_ablation, run_ablation, write_ablation_csv
from .checkpoint import load_checkpoint
from .errors import InvalidArgumentError, ShazamError
from .features import (
    ScaleLevel,
    SynthConfig,
    patient_split,
    read_feature_set,
    synth_teacher_set,
    write_feature_set,
)
from .fusion import FusionConfig
from .reporting import export_km, render_benchmark_report
from .tasks import TRAIN_PRESETS, TaskKind, preset
from .train import evaluate, prepare_expression_cohort, train, write_predictions

__all__ = ["build_parser", "main", "entrypoint"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _data_path(raw: str) -> Path:
    """Resolve a data path, honouring $SHAZAM_DATA_DIR for relative paths."""
    p = Path(raw)
    base = os.environ.get("SHAZAM_DATA_DIR")
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def _parse_scales(raw: str) -> tuple[ScaleLevel, ...]:
    names = [part.strip().upper() for part in raw.split(",") if part.strip()]
    if not names:
        raise InvalidArgumentError("--scales needs at least one of low, mid, high")
    try:
        scales = tuple(ScaleLevel[n] for n in names)
    except KeyError as exc:
        raise InvalidArgumentError(f"unknown scale {exc.args[0]!r} (use low, mid, high)") from None
    return tuple(sorted(set(scales), key=int))


# --------------------------------------------------------------------------
# synth


_SYNTH_FIELDS = {f.name: f for f in dataclasses.fields(SynthConfig)}


def _coerce_synth_value(name: str, raw: str):
    """Parse one ``key=value`` override against the synth config's field type."""
    if name not in _SYNTH_FIELDS:
        raise InvalidArgumentError(
            f"unknown synth key {name!r}; valid keys: {', '.join(sorted(_SYNTH_FIELDS))}"
        )
    if name == "task":
        return TaskKind(raw)
    if name in ("native_dims", "depths"):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if name == "strengths":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if name == "tiles_per_slide":
        parts = [int(v) for v in raw.split(",")]
        if len(parts) != 2:
            raise InvalidArgumentError("tiles_per_slide takes exactly two values: min,max")
        return (parts[0], parts[1])
    if name in ("noise", "scale_bleed", "censor_rate", "unassigned_frac"):
        return float(raw)
    if name == "n_patients":
        return int(raw)
    return int(raw)


def cmd_synth(args: argparse.Namespace) -> int:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise InvalidArgumentError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip().replace("-", "_")
        overrides[key] = _coerce_synth_value(key, raw.strip())
    overrides.setdefault("task", TaskKind(args.task))
    overrides.setdefault("seed", args.seed)
    cfg = SynthConfig(**overrides)
    fs = synth_teacher_set(cfg)
    out = _data_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_set(fs, out)
    if args.verbose:
        print(
            f"wrote {fs.n_samples} samples x {len(fs.teachers)} teachers "
            f"({cfg.task.value}) to {out}",
            file=sys.stderr,
        )
    print(str(out))
    return EXIT_OK


# --------------------------------------------------------------------------
# train


def _fusion_from_args(args: argparse.Namespace, seed: int) -> FusionConfig:
    return FusionConfig(
        embed_dim=args.embed_dim,
        num_heads=args.heads,
        num_layers=args.layers,
        scales=_parse_scales(args.scales),
        use_gate=not args.no_moe,
        seed=seed,
    )


def _holdout_split(fs, val_frac: float, seed: int):
    """Patient-aware single holdout: ~val_frac of patients become validation."""
    if not 0.0 < val_frac < 1.0:
        raise InvalidArgumentError(f"--val-frac must be in (0, 1), got {val_frac}")
    k = max(2, round(1.0 / val_frac))
    folds = patient_split(fs, k, seed)
    fold = folds[0]
    return fs.subset(fold.train_ids), fs.subset(fold.test_ids)


def cmd_train(args: argparse.Namespace) -> int:
    fs = read_feature_set(_data_path(args.container))
    overrides = {"seed": args.seed}
    for attr, key in (
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("lr", "learning_rate"),
        ("weight_decay", "weight_decay"),
        ("lambda_distill", "lambda_distill"),
    ):
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = value
    cfg = preset(args.preset, **overrides)
    if cfg.task is not fs.manifest.task_kind:
        raise InvalidArgumentError(
            f"preset {args.preset!r} targets {cfg.task.value}, container holds "
            f"{fs.manifest.task_kind.value}"
        )
    if cfg.task is TaskKind.EXPRESSION:
        fs = prepare_expression_cohort(fs)
    val_fs = None
    if args.val_frac is not None:
        fs, val_fs = _holdout_split(fs, args.val_frac, cfg.seed)
    fusion = _fusion_from_args(args, cfg.seed)
    result = train(
        fs,
        cfg,
        fusion,
        val_fs=val_fs,
        out_dir=args.out,
        head_hidden=tuple(args.head_hidden),
        log_steps=args.log_steps,
    )
    if args.verbose:
        last = result.history[-1]
        print(
            f"trained {cfg.epochs} epoch budget (stopped early: {result.stopped_early}); "
            f"final {last.split} total loss {last.total:.6f}",
            file=sys.stderr,
        )
    print(str(result.checkpoint_path))
    return EXIT_OK


# --------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    fs = read_feature_set(_data_path(args.container))
    model = load_checkpoint(_data_path(args.checkpoint))
    if model.task is not fs.manifest.task_kind:
        raise InvalidArgumentError(
            f"checkpoint task {model.task.value!r} != container task "
            f"{fs.manifest.task_kind.value!r}"
        )
    if model.task is TaskKind.EXPRESSION:
        fs = prepare_expression_cohort(fs)
    result = evaluate(model, fs, n_boot=args.n_boot, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(result, out / "predictions.csv")
    with open(out / "metrics.csv", "w", newline="") as f:
        f.write("metric,value,ci_low,ci_high,n\n")
        for name, rep in sorted(result.metrics.items()):
            f.write(
                f"{name},{rep.value!r},{'' if rep.ci_low is None else repr(rep.ci_low)},"
                f"{'' if rep.ci_high is None else repr(rep.ci_high)},{rep.n}\n"
            )
    if model.task is TaskKind.SURVIVAL and args.km:
        export_km(result.risks, result.times, result.events, out)
    for name, rep in sorted(result.metrics.items()):
        ci = f" [{rep.ci_low:.4f}, {rep.ci_high:.4f}]" if rep.ci_low is not None else ""
        print(f"{name}: {rep.value:.4f}{ci}")
    return EXIT_OK


# --------------------------------------------------------------------------
# ablate


_KIND_ALIASES = {
    "teacher-removal": AblationKind.TEACHER_REMOVAL,
    "scale-combo": AblationKind.SCALE_COMBO,
    "moe-switch": AblationKind.MOE_SWITCH,
}


def cmd_ablate(args: argparse.Namespace) -> int:
    fs = read_feature_set(_data_path(args.container))
    if fs.manifest.task_kind is TaskKind.EXPRESSION:
        fs = prepare_expression_cohort(fs)
    kind = _KIND_ALIASES[args.kind]
    plan = plan_ablation(fs, kind, k_folds=args.folds, seed=args.seed)
    base = TRAIN_PRESETS.get(args.preset)
    if base is None:
        raise InvalidArgumentError(f"unknown preset {args.preset!r}")
    overrides = {"seed": args.seed}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    cfg = preset(args.preset, **overrides)
    if cfg.task is not fs.manifest.task_kind:
        raise InvalidArgumentError(
            f"preset {args.preset!r} targets {cfg.task.value}, container holds "
            f"{fs.manifest.task_kind.value}"
        )
    fusion = FusionConfig(
        embed_dim=args.embed_dim, num_heads=args.heads, num_layers=args.layers, seed=args.seed
    )
    result = run_ablation(fs, plan, cfg, fusion, repeats=args.repeats, jobs=args.jobs)
    _, summary_path = write_ablation_csv(result, args.out)
    if args.verbose:
        print(f"{len(result.runs)} runs over {len(plan.variants)} variants", file=sys.stderr)
    print(str(summary_path))
    return EXIT_OK


# --------------------------------------------------------------------------
# report


def cmd_report(args: argparse.Namespace) -> int:
    paths = render_benchmark_report(
        _data_path(args.benchmarks), args.out, make_plots=not args.no_plots
    )
    print(str(paths.ranks))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser / dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shazam",
        description="Multi-teacher fusion student: data synthesis, training, evaluation, reporting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="master RNG seed (default 0)")
        p.add_argument("--verbose", action="store_true", help="progress notes on stderr")

    p_synth = sub.add_parser("synth", help="generate a planted-structure feature container")
    p_synth.add_argument("out", help="output container path (.shzf)")
    p_synth.add_argument(
        "--task",
        choices=[t.value for t in TaskKind],
        default=TaskKind.CLASSIFICATION.value,
        help="label family to plant",
    )
    p_synth.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="synth config override (repeatable), e.g. --set n_samples=500",
    )
    common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a fusion student on a container")
    p_train.add_argument("container", help="feature container (.shzf)")
    p_train.add_argument("--preset", choices=sorted(TRAIN_PRESETS), required=True)
    p_train.add_argument("--out", required=True, help="output directory for logs + checkpoint")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--lr", type=float, default=None)
    p_train.add_argument("--weight-decay", type=float, default=None)
    p_train.add_argument("--lambda-distill", type=float, default=None)
    p_train.add_argument("--embed-dim", type=int, default=256)
    p_train.add_argument("--heads", type=int, default=4)
    p_train.add_argument("--layers", type=int, default=4)
    p_train.add_argument(
        "--scales", default="low,mid,high", help="comma list of active scales (default all)"
    )
    p_train.add_argument(
        "--no-moe", action="store_true", help="disable gating; mix teachers uniformly (1/N)"
    )
    p_train.add_argument(
        "--head-hidden", type=int, nargs="*", default=[256, 128], help="task head hidden widths"
    )
    p_train.add_argument(
        "--val-frac", type=float, default=None, help="hold out this patient fraction for validation"
    )
    p_train.add_argument("--log-steps", action="store_true", help="write per-step loss breakdowns")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a container")
    p_eval.add_argument("container", help="feature container (.shzf)")
    p_eval.add_argument("--checkpoint", required=True, help="model checkpoint (.shzc)")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--n-boot", type=int, default=1000, help="bootstrap replicates")
    p_eval.add_argument("--km", action="store_true", help="also export the median-risk KM split")
    common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="run a teacher/scale/gating ablation study")
    p_abl.add_argument("container", help="feature container (.shzf)")
    p_abl.add_argument("--kind", choices=sorted(_KIND_ALIASES), required=True)
    p_abl.add_argument("--preset", choices=sorted(TRAIN_PRESETS), required=True)
    p_abl.add_argument("--out", required=True)
    p_abl.add_argument("--folds", type=int, default=2)
    p_abl.add_argument("--repeats", type=int, default=1)
    p_abl.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_abl.add_argument("--epochs", type=int, default=None)
    p_abl.add_argument("--batch-size", type=int, default=None)
    p_abl.add_argument("--embed-dim", type=int, default=64)
    p_abl.add_argument("--heads", type=int, default=4)
    p_abl.add_argument("--layers", type=int, default=2)
    common(p_abl)
    p_abl.set_defaults(func=cmd_ablate)

    p_rep = sub.add_parser("report", help="rank models across benchmark CSVs")
    p_rep.add_argument("benchmarks", help="benchmark CSV file or directory")
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--no-plots", action="store_true")
    common(p_rep)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShazamError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:  # console_scripts target
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
