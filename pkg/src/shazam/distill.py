"""Feature distillation losses: cosine distance plus element-wise Huber.

Each student scale embedding is pulled toward every teacher's projected
feature at that scale.  Both sides are L2-normalized first, so the loss is
invariant to positive rescaling of either vector; targets always enter with
gradients blocked (the student never moves its own targets).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import torch

from .errors import DegenerateVectorError, InvalidArgumentError
from .features import ScaleLevel

__all__ = [
    "DistillConfig",
    "LossBreakdown",
    "cosine_distance",
    "huber_elementwise",
    "distill_pair",
    "distill_total",
    "total_loss",
]


@dataclass(frozen=True)
class DistillConfig:
    """Distillation weight and Huber transition point."""

    lambda_distill: float = 0.01
    huber_delta: float = 1.0

    def __post_init__(self):
        if self.lambda_distill < 0:
            raise InvalidArgumentError(f"lambda_distill must be >= 0, got {self.lambda_distill}")
        if self.huber_delta <= 0:
            raise InvalidArgumentError(f"huber_delta must be > 0, got {self.huber_delta}")


def _as_tensor(x) -> torch.Tensor:
    # Tensors keep their dtype (the training graph may be float32); anything
    # else converts with numpy semantics, so Python floats stay float64.
    if isinstance(x, torch.Tensor):
        return x if x.is_floating_point() else x.double()
    t = torch.as_tensor(np.asarray(x))
    return t if t.is_floating_point() else t.double()


def _checked_norm(v: torch.Tensor, what: str) -> torch.Tensor:
    norm = torch.linalg.vector_norm(v, dim=-1)
    if bool((norm == 0).any()):
        raise DegenerateVectorError(f"{what} has zero norm; cosine distance undefined")
    return norm


def cosine_distance(z, t) -> torch.Tensor:
    """``1 - <z, t> / (|z| |t|)`` over the last axis; range [0, 2].

    Zero-norm inputs raise :class:`DegenerateVectorError` — there is no
    epsilon guard, a zero vector is a bug upstream.
    """
    z = _as_tensor(z)
    t = _as_tensor(t)
    if z.shape[-1] != t.shape[-1]:
        raise InvalidArgumentError(f"dimension mismatch: {z.shape[-1]} vs {t.shape[-1]}")
    zn = _checked_norm(z, "student vector")
    tn = _checked_norm(t, "target vector")
    cos = (z * t).sum(dim=-1) / (zn * tn)
    return 1.0 - cos


def huber_elementwise(err, delta: float = 1.0) -> torch.Tensor:
    """Element-wise Huber penalty: quadratic inside ``delta``, linear outside.

    ``rho(e) = e^2 / 2`` for ``|e| <= delta`` and
    ``rho(e) = delta * (|e| - delta / 2)`` beyond; continuous with matching
    one-sided derivatives at the transition.
    """
    if delta <= 0:
        raise InvalidArgumentError(f"delta must be > 0, got {delta}")
    err = _as_tensor(err)
    abs_err = err.abs()
    quad = 0.5 * err * err
    lin = delta * (abs_err - 0.5 * delta)
    return torch.where(abs_err <= delta, quad, lin)


def distill_pair(z, t, delta: float = 1.0) -> torch.Tensor:
    """Distillation term for one (student scale, teacher) pair.

    ``cosine_distance(z, t) + mean_k rho_delta(z_hat_k - t_hat_k)`` where
    hats are the L2-normalized vectors.  Supports batched inputs on the
    leading axes; the reduction is over the feature axis only.
    """
    z = _as_tensor(z)
    t = _as_tensor(t)
    if z.shape[-1] != t.shape[-1]:
        raise InvalidArgumentError(f"dimension mismatch: {z.shape[-1]} vs {t.shape[-1]}")
    zn = _checked_norm(z, "student vector").unsqueeze(-1)
    tn = _checked_norm(t, "target vector").unsqueeze(-1)
    z_hat = z / zn
    t_hat = t / tn
    cos = 1.0 - (z_hat * t_hat).sum(dim=-1)
    hub = huber_elementwise(z_hat - t_hat, delta).mean(dim=-1)
    return cos + hub


def distill_total(
    z_by_scale: Mapping[ScaleLevel, torch.Tensor],
    targets: Mapping[tuple[ScaleLevel, str], torch.Tensor],
    cfg: DistillConfig = DistillConfig(),
) -> tuple[torch.Tensor, dict[tuple[ScaleLevel, str], torch.Tensor]]:
    """Average the pair losses over every (active scale, teacher) combination.

    ``targets`` is keyed by (scale, teacher name); every key's scale must be
    present in ``z_by_scale`` and vice versa.  Returns the scalar mean and
    the per-pair terms (batch-averaged), keyed like ``targets``.  Summation
    order is fixed (scale-major, then teacher key order) for determinism.
    """
    if not z_by_scale:
        raise InvalidArgumentError("no student scales given")
    if not targets:
        raise InvalidArgumentError("no distillation targets given")
    target_scales = {scale for scale, _ in targets}
    if target_scales != set(z_by_scale):
        raise InvalidArgumentError(
            f"scale mismatch between student ({sorted(s.name for s in z_by_scale)}) "
            f"and targets ({sorted(s.name for s in target_scales)})"
        )
    terms: dict[tuple[ScaleLevel, str], torch.Tensor] = {}
    acc = None
    for scale in sorted(z_by_scale, key=int):
        z = z_by_scale[scale]
        for (t_scale, teacher), target in targets.items():
            if t_scale is not scale:
                continue
            term = distill_pair(z, target, cfg.huber_delta)
            term = term.mean()  # collapse any batch axes
            terms[(scale, teacher)] = term
            acc = term if acc is None else acc + term
    total = acc / len(terms)
    return total, terms


@dataclass
class LossBreakdown:
    """Scalar record of one optimization step's loss composition."""

    task_loss: float
    distill_total: float
    total: float
    lambda_distill: float
    distill_terms: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.task_loss + self.lambda_distill * self.distill_total
        if abs(self.total - expected) > 1e-12 * max(1.0, abs(expected)):
            raise InvalidArgumentError(
                f"total {self.total!r} != task + lambda*distill = {expected!r}"
            )
        if self.distill_terms:
            mean_terms = sum(self.distill_terms.values()) / len(self.distill_terms)
            if abs(mean_terms - self.distill_total) > 1e-9 * max(1.0, abs(self.distill_total)):
                raise InvalidArgumentError(
                    f"distill_total {self.distill_total!r} is not the mean of its "
                    f"{len(self.distill_terms)} terms ({mean_terms!r})"
                )

    def csv_header(self) -> list[str]:
        return ["step", "task_loss", "distill_total", "total", *self.distill_terms]

    def csv_row(self, step: int) -> list[str]:
        values = [self.task_loss, self.distill_total, self.total, *self.distill_terms.values()]
        return [str(step), *(repr(v) for v in values)]


def term_name(scale: ScaleLevel, teacher: str) -> str:
    """Stable column name for one distillation term."""
    return f"distill_{scale.name.lower()}_{teacher}"


def total_loss(
    task_loss: torch.Tensor | float,
    distill: torch.Tensor | float,
    cfg: DistillConfig = DistillConfig(),
    terms: Mapping[tuple[ScaleLevel, str], torch.Tensor | float] | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Combine task and distillation losses: ``task + lambda * distill``.

    Returns the differentiable total (when inputs are tensors) plus a float
    :class:`LossBreakdown` for logging.
    """
    task_t = _as_tensor(task_loss)
    dist_t = _as_tensor(distill)
    total = task_t + cfg.lambda_distill * dist_t

    # The logged scalars are recomputed in float64 so the breakdown's exact
    # identities hold regardless of the training graph's precision.
    term_floats = {
        term_name(scale, teacher): float(_as_tensor(v).detach())
        for (scale, teacher), v in (terms or {}).items()
    }
    task_f = float(task_t.detach())
    dist_f = sum(term_floats.values()) / len(term_floats) if term_floats else float(dist_t.detach())
    breakdown = LossBreakdown(
        task_loss=task_f,
        distill_total=dist_f,
        total=task_f + cfg.lambda_distill * dist_f,
        lambda_distill=cfg.lambda_distill,
        distill_terms=term_floats,
    )
    return total, breakdown
