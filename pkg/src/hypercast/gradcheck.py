"""Finite-difference verification of analytic gradients.

Runs in float64 regardless of the training precision: callers hand over a
double-precision module (or a closure over one) and this compares autograd
gradients against central differences parameter by parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import torch


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    tol: float
    per_param: dict[str, float]

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def _relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a) + abs(n), 1e-6)


def grad_check(fn: Callable[[], torch.Tensor],
               named_params: Iterable[tuple[str, torch.nn.Parameter]],
               eps: float = 1e-5, tol: float = 1e-4,
               max_params: int = 5000, seed: int = 0) -> GradCheckReport:
    """Compare autograd gradients of ``fn``'s output against central differences.

    ``fn`` must be deterministic and close over double-precision inputs and
    parameters; its output is reduced to a scalar through a fixed random
    projection so that sign errors cannot cancel.
    """
    params = list(named_params)
    total = sum(p.numel() for _, p in params)
    if total > max_params:
        raise ValueError(f"{total} parameters exceeds the check cap of {max_params}")
    for name, p in params:
        if p.dtype != torch.float64:
            raise ValueError(f"gradient checks require float64 parameters ({name} is {p.dtype})")

    generator = torch.Generator().manual_seed(seed)
    probe = torch.randn(fn().shape, generator=generator, dtype=torch.float64)

    def loss() -> torch.Tensor:
        return (fn() * probe).sum()

    for _, p in params:
        p.grad = None
    loss().backward()

    per_param: dict[str, float] = {}
    worst = ("", 0.0)
    with torch.no_grad():
        for name, p in params:
            analytic = (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1)
            flat = p.data.view(-1)  # raises rather than silently copying
            worst_here = 0.0
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + eps
                up = loss().item()
                flat[i] = original - eps
                down = loss().item()
                flat[i] = original
                numeric = (up - down) / (2.0 * eps)
                rel = _relative_error(analytic[i].item(), numeric)
                if rel > worst_here:
                    worst_here = rel
            per_param[name] = worst_here
            if worst_here > worst[1]:
                worst = (name, worst_here)
    return GradCheckReport(max_rel_error=worst[1], worst_param=worst[0],
                           tol=tol, per_param=per_param)
