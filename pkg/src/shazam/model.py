"""Student model: fused multi-teacher features -> task head.

Tile-level tasks feed per-tile feature groups straight through the fusion
module; slide-level tasks first pool each teacher/scale feature bag with
gated attention.  Either way the head sees the concatenated per-scale
student embeddings, and distillation targets are the *projected* teacher
features (detached, so no gradient reaches them).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .errors import InvalidArgumentError
from .features import ScaleLevel, TeacherSpec
from .fusion import FusionConfig, FusionModel
from .mil import AbmilHead, aggregate_slide
from .tasks import HeadConfig, TaskHead, TaskKind

__all__ = ["StudentOutput", "StudentModel"]


@dataclass
class StudentOutput:
    """Everything one forward pass produces.

    ``distill_targets`` is keyed ``(scale, teacher_name)`` and already
    detached; ``gates_by_scale`` is diagnostic only.
    """

    logits: Tensor
    embedding: Tensor
    z_by_scale: dict[ScaleLevel, Tensor]
    distill_targets: dict[tuple[ScaleLevel, str], Tensor]
    gates_by_scale: dict[ScaleLevel, Tensor]


class StudentModel(nn.Module):
    """Fusion trunk plus one task head (and attention pooling for bags)."""

    def __init__(
        self,
        teachers: tuple[TeacherSpec, ...],
        fusion_config: FusionConfig,
        head_config: HeadConfig,
        with_mil: bool = False,
        mil_hidden: int = 128,
    ):
        super().__init__()
        expected_in = len(fusion_config.scales) * fusion_config.embed_dim
        if head_config.in_dim != expected_in:
            raise InvalidArgumentError(
                f"head in_dim {head_config.in_dim} != "
                f"{len(fusion_config.scales)} scales x {fusion_config.embed_dim} = {expected_in}"
            )
        self.teachers = tuple(teachers)
        self.fusion_config = fusion_config
        self.head_config = head_config
        self.with_mil = with_mil
        self.mil_hidden = mil_hidden
        self.fusion = FusionModel(teachers, fusion_config)
        self.head = TaskHead(head_config, seed=fusion_config.seed)
        if with_mil:
            self.mil_heads = nn.ModuleDict(
                {
                    scale.name: AbmilHead(
                        fusion_config.embed_dim, mil_hidden, seed=fusion_config.seed, scale=scale
                    )
                    for scale in fusion_config.scales
                }
            )
        else:
            self.mil_heads = None

    @property
    def task(self) -> TaskKind:
        return self.head_config.task

    def _targets(
        self, projected: dict[tuple[int, ScaleLevel], Tensor]
    ) -> dict[tuple[ScaleLevel, str], Tensor]:
        return {
            (scale, self.teachers[i].name): projected[(i, scale)].detach()
            for (i, scale) in projected
        }

    def forward_tiles(self, features: dict[tuple[int, ScaleLevel], Tensor]) -> StudentOutput:
        """Per-tile forward: ``features[(teacher_idx, scale)]`` is (B, native_dim)."""
        embedding, z_by_scale, projected, gates = self.fusion(features)
        return StudentOutput(
            logits=self.head(embedding),
            embedding=embedding,
            z_by_scale=z_by_scale,
            distill_targets=self._targets(projected),
            gates_by_scale=gates,
        )

    def forward_slide(self, bag_features: dict[tuple[int, ScaleLevel], Tensor]) -> StudentOutput:
        """Slide forward: ``bag_features[(teacher_idx, scale)]`` is (n_tiles, native_dim)."""
        if self.mil_heads is None:
            raise InvalidArgumentError("model was built without attention pooling (with_mil=False)")
        embedding, z_by_scale, pooled, gates = aggregate_slide(
            bag_features, self.fusion, {ScaleLevel[k]: v for k, v in self.mil_heads.items()}
        )
        return StudentOutput(
            logits=self.head(embedding),
            embedding=embedding,
            z_by_scale=z_by_scale,
            distill_targets=self._targets(pooled),
            gates_by_scale=gates,
        )

    def forward(self, features: dict[tuple[int, ScaleLevel], Tensor]) -> StudentOutput:
        if self.with_mil:
            return self.forward_slide(features)
        return self.forward_tiles(features)

    @torch.no_grad()
    def uniform_gate_diagnostics(self) -> dict[ScaleLevel, float]:
        """Exact per-teacher weight recorded when gating is disabled."""
        if self.fusion_config.use_gate:
            raise InvalidArgumentError("gating is enabled; diagnostics come from the gate networks")
        n = len(self.teachers)
        return {scale: 1.0 / n for scale in self.fusion_config.scales}
