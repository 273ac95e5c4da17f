"""Seeded parameter initialization shared by every learnable component.

Each component draws from its own ``torch.Generator`` keyed by
``seed * 1000 + offset``, so adding or removing one module never perturbs
another's initial weights.  Offset registry: projection bank 1, per-scale
gates 2-4, attention stack 7, attention pooling 20-22, task head 30.
"""

from __future__ import annotations

import math

import torch
from torch import nn

__all__ = ["component_generator", "init_linear"]


def component_generator(seed: int, offset: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(seed * 1000 + offset)
    return gen


def init_linear(linear: nn.Linear, gen: torch.Generator) -> None:
    """Fan-in-scaled uniform (+/- 1/sqrt(fan_in)) on both weight and bias."""
    bound = 1.0 / math.sqrt(linear.in_features)
    with torch.no_grad():
        linear.weight.uniform_(-bound, bound, generator=gen)
        if linear.bias is not None:
            linear.bias.uniform_(-bound, bound, generator=gen)
