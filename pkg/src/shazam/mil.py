"""Attention-based MIL pooling for slide-level (bag) tasks.

Tiles are pooled per (teacher, scale) with gated-attention ABMIL heads that
are scale-specific but shared across teachers (projections already put every
teacher into the common width d).  MoE fusion then runs at slide level: the
gating input is the concatenation of the N pooled slide vectors.
"""

from __future__ import annotations

from typing import Mapping

import torch
from torch import nn

from ._torch_init import component_generator as _component_generator
from ._torch_init import init_linear as _init_linear
from .errors import InvalidArgumentError
from .features import ScaleLevel
from .fusion import FusionModel, fuse, gate, student_embed

__all__ = ["AbmilHead", "abmil_pool", "aggregate_slide"]


class AbmilHead(nn.Module):
    """Gated-attention scorer: ``score_j = w(tanh(V h_j) * sigmoid(U h_j))``.

    Attention weights are the softmax of the scores over the bag, so they
    are positive and sum to one regardless of bag size.
    """

    def __init__(self, embed_dim: int, hidden: int = 128, *, seed: int = 0, scale: ScaleLevel | None = None):
        super().__init__()
        if embed_dim <= 0 or hidden <= 0:
            raise InvalidArgumentError("embed_dim and hidden must be positive")
        self.v = nn.Linear(embed_dim, hidden)
        self.u = nn.Linear(embed_dim, hidden)
        self.w = nn.Linear(hidden, 1)
        gen = _component_generator(seed, offset=20 + (int(scale) if scale is not None else 0))
        for lin in (self.v, self.u, self.w):
            _init_linear(lin, gen)

    def scores(self, h: torch.Tensor) -> torch.Tensor:
        return self.w(torch.tanh(self.v(h)) * torch.sigmoid(self.u(h))).squeeze(-1)

    def forward(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return abmil_pool(h, self)


def abmil_pool(h: torch.Tensor, head: AbmilHead) -> tuple[torch.Tensor, torch.Tensor]:
    """Pool a bag (n_tiles, d) into one vector; returns (pooled, weights).

    The pooled vector is the attention-weighted sum of the rows; ``weights``
    is the softmax over tiles (positive, sums to 1).  An empty bag is an
    error — there is nothing to pool.
    """
    h = torch.as_tensor(h)
    if h.ndim != 2:
        raise InvalidArgumentError(f"bag must be 2-D (tiles, d), got shape {tuple(h.shape)}")
    if h.shape[0] == 0:
        raise InvalidArgumentError("cannot pool an empty bag")
    weights = torch.softmax(head.scores(h), dim=0)
    pooled = weights @ h
    return pooled, weights


def aggregate_slide(
    bag_features: Mapping[tuple[int, ScaleLevel], torch.Tensor],
    fusion: FusionModel,
    heads: Mapping[ScaleLevel, AbmilHead],
) -> tuple[
    torch.Tensor,
    dict[ScaleLevel, torch.Tensor],
    dict[tuple[int, ScaleLevel], torch.Tensor],
    dict[ScaleLevel, torch.Tensor],
]:
    """Slide-level forward pass: ABMIL pooling, then the fusion pipeline.

    ``bag_features`` holds (n_tiles, native_dim_i) matrices per
    (teacher_idx, scale).  Per scale: project tiles, pool each teacher's
    projected tiles with that scale's head, then gate/fuse/attend the N
    pooled slide vectors exactly like the tile-level pipeline.

    Returns (embedding, z_by_scale, pooled_by_key, gates_by_scale); the
    pooled vectors double as slide-level distillation targets (detached by
    the caller).
    """
    missing = [s for s in fusion.cfg.scales if s not in heads]
    if missing:
        raise InvalidArgumentError(f"missing ABMIL heads for scales: {[s.name for s in missing]}")
    z_by_scale: dict[ScaleLevel, torch.Tensor] = {}
    pooled_by_key: dict[tuple[int, ScaleLevel], torch.Tensor] = {}
    gates_by_scale: dict[ScaleLevel, torch.Tensor] = {}
    f_final: dict[ScaleLevel, torch.Tensor] = {}
    n_teachers = len(fusion.teachers)
    for scale in fusion.cfg.scales:
        projected = fusion.bank.project(bag_features, scale)  # (n_tiles, N, d)
        rows = []
        for i in range(n_teachers):
            pooled, _w = abmil_pool(projected[:, i, :], heads[scale])
            pooled_by_key[(i, scale)] = pooled
            rows.append(pooled)
        slide_mat = torch.stack(rows, dim=0)  # (N, d)
        if fusion.cfg.use_gate:
            g = gate(fusion.gates[scale.name], slide_mat.reshape(-1))
        else:
            g = torch.full((n_teachers,), 1.0 / n_teachers, dtype=slide_mat.dtype, device=slide_mat.device)
        gates_by_scale[scale] = g
        fused = fuse(slide_mat, g)
        f_final[scale] = fusion.stack.attend_and_normalize(fused)
        z_by_scale[scale] = f_final[scale].mean(dim=-2)
    embedding = student_embed(f_final, fusion.cfg.scales)
    return embedding, z_by_scale, pooled_by_key, gates_by_scale
