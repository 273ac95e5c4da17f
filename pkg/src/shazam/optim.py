"""Decoupled-weight-decay Adam, written out explicitly.

The update applies weight decay on the *pre-update* parameter, added to the
moment-based step::

    m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
    mhat = m / (1 - b1^t)         vhat = v / (1 - b2^t)
    param <- param - lr * (mhat / (sqrt(vhat) + eps) + wd * param)

so with a zero gradient the parameter shrinks multiplicatively by
``(1 - lr*wd)`` and is untouched when ``wd == 0``.
"""

from __future__ import annotations

from typing import Iterable

import torch

from .errors import InvalidArgumentError

__all__ = ["decoupled_weight_update", "AdamW"]


def decoupled_weight_update(
    param: torch.Tensor,
    grad: torch.Tensor,
    m: torch.Tensor,
    v: torch.Tensor,
    step: int,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """One update for one tensor; returns (new_param, new_m, new_v).

    ``step`` is 1-based (the step being applied).  Pure function: inputs are
    not modified.
    """
    if step < 1:
        raise InvalidArgumentError(f"step must be >= 1, got {step}")
    if lr < 0 or weight_decay < 0 or eps <= 0:
        raise InvalidArgumentError("lr and weight_decay must be >= 0, eps > 0")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise InvalidArgumentError("betas must be in [0, 1)")
    m_new = beta1 * m + (1.0 - beta1) * grad
    v_new = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m_new / (1.0 - beta1**step)
    v_hat = v_new / (1.0 - beta2**step)
    update = lr * (m_hat / (torch.sqrt(v_hat) + eps) + weight_decay * param)
    return param - update, m_new, v_new


class AdamW:
    """Minimal optimizer wrapper around :func:`decoupled_weight_update`.

    Parameters are updated in their construction order every step; the
    per-step learning rate may be overridden (for schedules).
    """

    def __init__(
        self,
        params: Iterable[torch.nn.Parameter],
        lr: float,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = [p for p in params if p.requires_grad]
        if not self.params:
            raise InvalidArgumentError("optimizer got no trainable parameters")
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [torch.zeros_like(p) for p in self.params]
        self._v = [torch.zeros_like(p) for p in self.params]

    @torch.no_grad()
    def step(self, lr: float | None = None) -> None:
        self.step_count += 1
        lr = self.lr if lr is None else lr
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            new_p, self._m[i], self._v[i] = decoupled_weight_update(
                p,
                p.grad,
                self._m[i],
                self._v[i],
                step=self.step_count,
                lr=lr,
                weight_decay=self.weight_decay,
                beta1=self.beta1,
                beta2=self.beta2,
                eps=self.eps,
            )
            p.copy_(new_p)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
