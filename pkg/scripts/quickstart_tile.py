#!/usr/bin/env python3
"""Train a fused student on a planted synthetic tile cohort and evaluate it.

Smallest end-to-end run: synthesize multi-teacher features with a known
signal/noise split across teachers, hold out a patient fold, train with
distillation on, and print held-out metrics plus where the gate settled.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from shazam.features import SCALE_ORDER, SynthConfig, patient_split, synth_teacher_set
from shazam.fusion import FusionConfig
from shazam.tasks import TaskKind, TrainConfig
from shazam.train import evaluate, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/quickstart"))
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--embed-dim", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    fs = synth_teacher_set(
        SynthConfig(
            task=TaskKind.CLASSIFICATION,
            n_teachers=3,
            n_samples=240,
            num_classes=3,
            n_patients=12,
            strengths=(1.0, 0.6, 0.2),
            noise=0.5,
            seed=args.seed,
        )
    )
    fold = patient_split(fs, 4, seed=args.seed)[0]
    train_fs, test_fs = fs.subset(fold.train_ids), fs.subset(fold.test_ids)
    print(f"cohort: {len(train_fs.samples)} train / {len(test_fs.samples)} held-out tiles")

    cfg = TrainConfig(
        task=TaskKind.CLASSIFICATION,
        learning_rate=1e-3,
        weight_decay=1e-4,
        epochs=args.epochs,
        batch_size=32,
        schedule="cosine",
        seed=args.seed,
    )
    fusion = FusionConfig(embed_dim=args.embed_dim, num_heads=2, num_layers=1, seed=args.seed)
    result = train(
        train_fs, cfg, fusion, val_fs=test_fs, out_dir=args.out,
        head_hidden=(32,), head_dropout=0.0,
    )
    last = result.history[-1]
    print(f"trained {args.epochs} epochs; final train total loss {last.total:.4f}")

    report = evaluate(result.model, test_fs, n_boot=200, seed=args.seed)
    for name, metric in sorted(report.metrics.items()):
        ci = ""
        if metric.ci_low is not None:
            ci = f"  [{metric.ci_low:.3f}, {metric.ci_high:.3f}]"
        print(f"  {name:<14} {metric.value:.3f}{ci}")

    final_epoch = max(e for e, _, _ in result.gate_means)
    print("final gate means (teacher share per scale):")
    for scale in SCALE_ORDER:
        shares = {
            name: value
            for (epoch, s, name), value in result.gate_means.items()
            if epoch == final_epoch and s is scale
        }
        row = "  ".join(f"{name}={value:.3f}" for name, value in sorted(shares.items()))
        print(f"  {scale.name.lower():<5} {row}")
    print(f"artifacts in {args.out}/ (model.shzc, epochs.csv, gates.csv)")


if __name__ == "__main__":
    main()
