"""Multi-teacher fusion: projection bank, softmax gating, self-attention student.

Per scale, the pipeline is

    project -> concat -> gate (softmax MoE) -> row-scale -> self-attention
    stack -> terminal LayerNorm -> mean over the teacher axis

yielding one d-dimensional embedding per scale; task heads consume the
concatenation across active scales.  The teacher axis is a *set*: no
positional encoding anywhere, so every stage is permutation-consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import torch
from torch import nn

from ._torch_init import component_generator as _component_generator
from ._torch_init import init_linear as _init_linear
from .errors import InvalidArgumentError, NumericError
from .features import SCALE_ORDER, ScaleLevel, TeacherSpec

__all__ = [
    "FusionConfig",
    "ProjectionBank",
    "GatingNetwork",
    "StudentStack",
    "FusionModel",
    "project_and_concat",
    "fuse",
    "student_embed",
]


@dataclass(frozen=True)
class FusionConfig:
    """Architecture hyper-parameters for the fusion student.

    ``embed_dim`` must divide evenly into ``num_heads`` (head width is
    ``embed_dim // num_heads``).  ``scales`` selects which depth tiers are
    active; gating can be disabled (``use_gate=False``) to fall back to
    uniform 1/N mixing.
    """

    embed_dim: int = 256
    num_heads: int = 4
    num_layers: int = 4
    gate_hidden_factor: int = 4
    scales: tuple[ScaleLevel, ...] = SCALE_ORDER
    use_gate: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim <= 0 or self.num_heads <= 0 or self.num_layers <= 0:
            raise InvalidArgumentError("embed_dim, num_heads and num_layers must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise InvalidArgumentError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.gate_hidden_factor <= 0:
            raise InvalidArgumentError("gate_hidden_factor must be positive")
        if not self.scales:
            raise InvalidArgumentError("at least one scale must be active")
        if len(set(self.scales)) != len(self.scales):
            raise InvalidArgumentError(f"duplicate scales: {self.scales}")
        ordered = tuple(sorted(self.scales, key=int))
        if ordered != self.scales:
            raise InvalidArgumentError(f"scales must be in LOW<MID<HIGH order, got {self.scales}")


class ProjectionBank(nn.Module):
    """One linear map per (teacher, active scale) into the shared width d."""

    def __init__(self, teachers: Sequence[TeacherSpec], cfg: FusionConfig):
        super().__init__()
        if not teachers:
            raise InvalidArgumentError("at least one teacher required")
        self.teachers = tuple(teachers)
        self.cfg = cfg
        gen = _component_generator(cfg.seed, offset=1)
        self.maps = nn.ModuleDict()
        for i, spec in enumerate(self.teachers):
            for scale in cfg.scales:
                lin = nn.Linear(spec.native_dim, cfg.embed_dim)
                _init_linear(lin, gen)
                self.maps[self._key(i, scale)] = lin

    @staticmethod
    def _key(teacher_idx: int, scale: ScaleLevel) -> str:
        return f"t{teacher_idx}_{scale.name.lower()}"

    def project(
        self, features: Mapping[tuple[int, ScaleLevel], torch.Tensor], scale: ScaleLevel
    ) -> torch.Tensor:
        """Project each teacher's features at ``scale`` -> (batch, N, d)."""
        if scale not in self.cfg.scales:
            raise InvalidArgumentError(f"scale {scale.name} not active in this bank")
        rows = []
        for i, spec in enumerate(self.teachers):
            try:
                x = features[(i, scale)]
            except KeyError:
                raise InvalidArgumentError(
                    f"missing features for teacher {spec.name!r} at scale {scale.name}"
                ) from None
            x = torch.as_tensor(x)
            if x.shape[-1] != spec.native_dim:
                raise InvalidArgumentError(
                    f"teacher {spec.name!r} features have width {x.shape[-1]}, "
                    f"expected {spec.native_dim} — teacher order mismatch?"
                )
            rows.append(self.maps[self._key(i, scale)](x))
        return torch.stack(rows, dim=-2)


def project_and_concat(
    bank: ProjectionBank,
    features: Mapping[tuple[int, ScaleLevel], torch.Tensor],
    scale: ScaleLevel,
) -> torch.Tensor:
    """Projected features of all teachers at one scale, flattened to (batch, N*d)."""
    projected = bank.project(features, scale)
    return projected.reshape(*projected.shape[:-2], -1)


class GatingNetwork(nn.Module):
    """Softmax MoE gate over teachers for one scale.

    A one-hidden-layer MLP (width ``gate_hidden_factor * N``, GELU) maps the
    concatenated projected features to N logits; the gate is their softmax.
    """

    def __init__(self, n_teachers: int, cfg: FusionConfig, scale: ScaleLevel):
        super().__init__()
        if n_teachers < 1:
            raise InvalidArgumentError("n_teachers must be >= 1")
        self.n_teachers = n_teachers
        hidden = cfg.gate_hidden_factor * n_teachers
        self.fc1 = nn.Linear(n_teachers * cfg.embed_dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, n_teachers)
        gen = _component_generator(cfg.seed, offset=2 + int(scale))
        _init_linear(self.fc1, gen)
        _init_linear(self.fc2, gen)

    def logits(self, concat: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(concat)))

    def forward(self, concat: torch.Tensor) -> torch.Tensor:
        return gate(self, concat)


def gate(network: GatingNetwork, concat: torch.Tensor) -> torch.Tensor:
    """Gate weights on the probability simplex, shape (batch, N)."""
    concat = torch.as_tensor(concat)
    if not bool(torch.isfinite(concat).all()):
        raise NumericError("gating input contains non-finite values")
    if concat.shape[-1] != network.fc1.in_features:
        raise InvalidArgumentError(
            f"gating input width {concat.shape[-1]} != expected {network.fc1.in_features}"
        )
    return torch.softmax(network.logits(concat), dim=-1)


def fuse(projected: torch.Tensor, gates: torch.Tensor) -> torch.Tensor:
    """Scale each teacher row by its gate weight: (batch, N, d) x (batch, N)."""
    projected = torch.as_tensor(projected)
    gates = torch.as_tensor(gates)
    if projected.shape[:-1] != gates.shape:
        raise InvalidArgumentError(
            f"projected rows {tuple(projected.shape[:-1])} do not match gates {tuple(gates.shape)}"
        )
    return projected * gates.unsqueeze(-1)


class _MultiHeadSelfAttention(nn.Module):
    """Standard scaled-dot-product attention over the teacher axis."""

    def __init__(self, cfg: FusionConfig, gen: torch.Generator):
        super().__init__()
        self.num_heads = cfg.num_heads
        self.head_dim = cfg.embed_dim // cfg.num_heads
        self.qkv = nn.Linear(cfg.embed_dim, 3 * cfg.embed_dim)
        self.out = nn.Linear(cfg.embed_dim, cfg.embed_dim)
        _init_linear(self.qkv, gen)
        _init_linear(self.out, gen)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        *lead, n, d = x.shape
        qkv = self.qkv(x).reshape(*lead, n, 3, self.num_heads, self.head_dim)
        qkv = qkv.movedim(-3, 0)  # (3, *lead, n, H, hd)
        q, k, v = qkv[0], qkv[1], qkv[2]
        q = q.transpose(-2, -3)  # (*lead, H, n, hd)
        k = k.transpose(-2, -3)
        v = v.transpose(-2, -3)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.head_dim), dim=-1)
        y = (att @ v).transpose(-2, -3).reshape(*lead, n, d)
        return self.out(y)


class StudentStack(nn.Module):
    """Residual self-attention blocks over teachers plus a terminal LayerNorm."""

    def __init__(self, cfg: FusionConfig):
        super().__init__()
        self.cfg = cfg
        gen = _component_generator(cfg.seed, offset=7)
        self.blocks = nn.ModuleList(_MultiHeadSelfAttention(cfg, gen) for _ in range(cfg.num_layers))
        self.norm = nn.LayerNorm(cfg.embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.attend_and_normalize(x)

    def attend_and_normalize(self, x: torch.Tensor) -> torch.Tensor:
        """Run the block stack; each row of the output is layer-normalized.

        Raises :class:`NumericError` carrying the failing block index if a
        non-finite intermediate appears.
        """
        x = torch.as_tensor(x)
        if x.shape[-1] != self.cfg.embed_dim:
            raise InvalidArgumentError(
                f"input width {x.shape[-1]} != embed_dim {self.cfg.embed_dim}"
            )
        if not bool(torch.isfinite(x).all()):
            raise NumericError("non-finite attention stack input")
        for idx, block in enumerate(self.blocks):
            x = x + block(x)
            if not bool(torch.isfinite(x).all()):
                raise NumericError("non-finite attention output", layer=idx)
        return self.norm(x)


def student_embed(
    f_final: Mapping[ScaleLevel, torch.Tensor],
    scales: Sequence[ScaleLevel] = SCALE_ORDER,
) -> torch.Tensor:
    """Mean over the teacher axis per scale, concatenated in scale order.

    Input per scale is (batch, N, d); output is (batch, len(scales) * d).
    """
    if not scales:
        raise InvalidArgumentError("at least one scale required")
    parts = []
    for scale in scales:
        try:
            mat = f_final[scale]
        except KeyError:
            raise InvalidArgumentError(f"missing fused matrix for scale {scale.name}") from None
        parts.append(torch.as_tensor(mat).mean(dim=-2))
    return torch.cat(parts, dim=-1)


class FusionModel(nn.Module):
    """Projection bank + per-scale gates + shared attention stack.

    ``forward`` maps raw per-teacher features to the concatenated per-scale
    student embedding and also returns the intermediates needed elsewhere
    (projected features for distillation targets, gate diagnostics).
    """

    def __init__(self, teachers: Sequence[TeacherSpec], cfg: FusionConfig):
        super().__init__()
        self.teachers = tuple(teachers)
        self.cfg = cfg
        self.bank = ProjectionBank(self.teachers, cfg)
        self.gates = nn.ModuleDict(
            {scale.name: GatingNetwork(len(self.teachers), cfg, scale) for scale in cfg.scales}
        )
        self.stack = StudentStack(cfg)

    @property
    def out_dim(self) -> int:
        return len(self.cfg.scales) * self.cfg.embed_dim

    def gate_weights(self, projected: torch.Tensor, scale: ScaleLevel) -> torch.Tensor:
        if self.cfg.use_gate:
            concat = projected.reshape(*projected.shape[:-2], -1)
            return gate(self.gates[scale.name], concat)
        uniform = 1.0 / len(self.teachers)
        return torch.full(projected.shape[:-1], uniform, dtype=projected.dtype, device=projected.device)

    def forward(
        self, features: Mapping[tuple[int, ScaleLevel], torch.Tensor]
    ) -> tuple[torch.Tensor, dict[ScaleLevel, torch.Tensor], dict[tuple[int, ScaleLevel], torch.Tensor], dict[ScaleLevel, torch.Tensor]]:
        """Returns (embedding, z_by_scale, projected_by_key, gates_by_scale)."""
        z_by_scale: dict[ScaleLevel, torch.Tensor] = {}
        projected_by_key: dict[tuple[int, ScaleLevel], torch.Tensor] = {}
        gates_by_scale: dict[ScaleLevel, torch.Tensor] = {}
        f_final: dict[ScaleLevel, torch.Tensor] = {}
        for scale in self.cfg.scales:
            projected = self.bank.project(features, scale)  # (B, N, d)
            for i in range(len(self.teachers)):
                projected_by_key[(i, scale)] = projected[..., i, :]
            g = self.gate_weights(projected, scale)
            gates_by_scale[scale] = g
            fused = fuse(projected, g)
            f_final[scale] = self.stack.attend_and_normalize(fused)
            z_by_scale[scale] = f_final[scale].mean(dim=-2)
        embedding = student_embed(f_final, self.cfg.scales)
        return embedding, z_by_scale, projected_by_key, gates_by_scale
