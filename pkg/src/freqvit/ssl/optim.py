"""AdamW and EMA updates over flat parameter dictionaries."""

from __future__ import annotations

import numpy as np

from .vit import no_decay


def adamw_step(params, grads, m, v, step, lr, beta1=0.9, beta2=0.999, eps=1e-8,
               weight_decay=0.0, decay=no_decay):
    """One in-place AdamW update; ``step`` is the count of updates already taken.

    Weight decay is decoupled and skipped for blocks where ``decay(name)`` is
    true (biases, norm parameters, class token by default). Returns
    ``(params, m, v, step + 1)``.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    t = step + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        m[name] *= beta1
        m[name] += (1.0 - beta1) * g
        v[name] *= beta2
        v[name] += (1.0 - beta2) * (g * g)
        update = (m[name] / bc1) / (np.sqrt(v[name] / bc2) + eps)
        if weight_decay and not decay(name):
            p -= lr * weight_decay * p
        p -= (lr * update).astype(p.dtype)
    return params, m, v, t


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        s = max_norm / (total + 1e-6)
        for g in grads.values():
            g *= s
    return total


def ema_update(teacher, student, momentum: float):
    """teacher <- momentum * teacher + (1 - momentum) * student, in place."""
    for name, t in teacher.items():
        s = student[name]
        if s.shape != t.shape:
            raise ValueError(f"shape mismatch for {name!r}: {t.shape} vs {s.shape}")
        t *= momentum
        t += (1.0 - momentum) * s
    return teacher
