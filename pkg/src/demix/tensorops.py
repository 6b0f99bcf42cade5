"""Differentiation helpers and the Adam update.

Reverse-mode gradients come from torch autograd; the finite-difference
checker below is an independent oracle and never calls autograd for the
numerical side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import GradientError, ShapeError


def grad(loss_fn, params: list[torch.Tensor]) -> list[torch.Tensor]:
    """Gradient of a scalar-valued ``loss_fn(params)`` w.r.t. each parameter."""
    for p in params:
        if not p.requires_grad:
            p.requires_grad_(True)
    loss = loss_fn(params)
    if loss.dim() != 0:
        raise GradientError(f"loss must be scalar, got shape {tuple(loss.shape)}")
    if not torch.isfinite(loss):
        raise GradientError("non-finite loss")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    out = []
    for p, g in zip(params, grads):
        g = torch.zeros_like(p) if g is None else g
        if not torch.all(torch.isfinite(g)):
            raise GradientError("non-finite gradient encountered")
        out.append(g)
    return out


def finite_diff_check(
    loss_fn,
    params: list[torch.Tensor],
    probes: int,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``probes`` scalar entries are drawn at random across all parameters;
    the perturbation is ``1e-3 * max(|p|, 1)`` per probe.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = rng or np.random.default_rng(0)
    analytic = grad(loss_fn, params)
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    with torch.no_grad():
        for flat_idx in rng.choice(total, size=min(probes, total), replace=False):
            pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
            j = int(flat_idx - offsets[pi])
            p = params[pi].reshape(-1)
            orig = p[j].item()
            h = 1e-3 * max(abs(orig), 1.0)
            p[j] = orig + h
            hi = float(loss_fn(params))
            p[j] = orig - h
            lo = float(loss_fn(params))
            p[j] = orig
            cd = (hi - lo) / (2 * h)
            a = analytic[pi].reshape(-1)[j].item()
            err = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
            worst = max(worst, err)
    return worst


@dataclass
class AdamState:
    m: list[torch.Tensor]
    v: list[torch.Tensor]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params, **kwargs) -> "AdamState":
        return cls(
            m=[torch.zeros_like(p) for p in params],
            v=[torch.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and Adam state must have equal lengths")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1 - b1 ** state.t
    bc2 = 1 - b2 ** state.t
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            if p.shape != g.shape:
                raise ShapeError(
                    f"gradient shape {tuple(g.shape)} != parameter {tuple(p.shape)}"
                )
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            p.sub_(lr * (m / bc1) / ((v / bc2).sqrt() + state.eps))
    return params, state
