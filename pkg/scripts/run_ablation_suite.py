#!/usr/bin/env python3
"""Run the three ablation studies on planted synthetic cohorts.

Teacher removal trains on an expression cohort whose third teacher is pure
noise; scale combinations and the gate on/off switch train on tile
classification cohorts.  Each study writes runs.csv + summary.csv under its
own subdirectory of --out and prints the directional readout.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from shazam.ablation import AblationKind, plan_ablation, run_ablation, write_ablation_csv
from shazam.features import SynthConfig, synth_teacher_set
from shazam.fusion import FusionConfig
from shazam.tasks import TaskKind, TrainConfig
from shazam.train import prepare_expression_cohort


def _train_cfg(task: TaskKind, lr: float, epochs: int, seed: int) -> TrainConfig:
    return TrainConfig(
        task=task, learning_rate=lr, weight_decay=1e-4,
        epochs=epochs, batch_size=32, schedule="cosine", seed=seed,
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/ablations"))
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--embed-dim", type=int, default=16)
    parser.add_argument("--seed", type=int, default=61)
    args = parser.parse_args()
    fusion = FusionConfig(embed_dim=args.embed_dim, num_heads=2, num_layers=1, seed=5)

    # 1. teacher removal: expression cohort, teacher2 planted with zero signal
    start = time.perf_counter()
    fs = synth_teacher_set(
        SynthConfig(
            task=TaskKind.EXPRESSION, n_teachers=3, n_samples=200, num_genes=6,
            spots_per_slide=25, strengths=(1.0, 0.8, 0.0), noise=0.3,
            n_patients=10, seed=args.seed,
        )
    )
    fs = prepare_expression_cohort(fs)
    plan = plan_ablation(fs, AblationKind.TEACHER_REMOVAL, k_folds=2, seed=args.seed)
    result = run_ablation(
        fs, plan, _train_cfg(TaskKind.EXPRESSION, 3e-3, args.epochs, 5),
        fusion, repeats=args.repeats, jobs=args.jobs, head_hidden=(16,),
    )
    write_ablation_csv(result, args.out / "teacher_removal")
    print(f"teacher removal ({time.perf_counter() - start:.1f}s), mean held-out PCC:")
    for (variant, metric), (mean, std, n) in sorted(result.summary().items()):
        if metric == "pcc":
            print(f"  {variant:<16} {mean:.4f} ± {std:.4f}  (n={n})")

    # 2. scale combinations: tile cohort with cross-scale bleed
    start = time.perf_counter()
    fs_tile = synth_teacher_set(
        SynthConfig(
            task=TaskKind.CLASSIFICATION, n_teachers=3, n_samples=240,
            num_classes=3, n_patients=12, scale_bleed=0.15, noise=0.5,
            seed=args.seed + 1,
        )
    )
    plan = plan_ablation(fs_tile, AblationKind.SCALE_COMBO, k_folds=2, seed=args.seed + 1)
    result = run_ablation(
        fs_tile, plan, _train_cfg(TaskKind.CLASSIFICATION, 1e-3, 12, 5),
        fusion, repeats=args.repeats, jobs=args.jobs, head_hidden=(16,),
    )
    write_ablation_csv(result, args.out / "scale_combo")
    print(f"scale combinations ({time.perf_counter() - start:.1f}s), balanced accuracy:")
    for (variant, metric), (mean, std, n) in sorted(result.summary().items()):
        if metric == "balanced_acc":
            print(f"  {variant:<16} {mean:.4f} ± {std:.4f}  (n={n})")

    # 3. gate on/off: tile cohort with one noise teacher
    start = time.perf_counter()
    fs_moe = synth_teacher_set(
        SynthConfig(
            task=TaskKind.CLASSIFICATION, n_teachers=3, n_samples=240,
            num_classes=3, n_patients=12, strengths=(1.0, 0.6, 0.0), noise=0.5,
            seed=args.seed + 2,
        )
    )
    plan = plan_ablation(fs_moe, AblationKind.MOE_SWITCH, k_folds=2, seed=args.seed + 2)
    result = run_ablation(
        fs_moe, plan, _train_cfg(TaskKind.CLASSIFICATION, 1e-3, 12, 5),
        fusion, repeats=args.repeats, jobs=args.jobs, head_hidden=(16,),
    )
    write_ablation_csv(result, args.out / "moe_switch")
    print(f"gate on/off ({time.perf_counter() - start:.1f}s), balanced accuracy:")
    for (variant, metric), (mean, std, n) in sorted(result.summary().items()):
        if metric == "balanced_acc":
            print(f"  {variant:<16} {mean:.4f} ± {std:.4f}  (n={n})")

    print(f"csv tables under {args.out}/")


if __name__ == "__main__":
    main()
