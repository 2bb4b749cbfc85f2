"""Centered, temperature-sharpened cross-view distillation loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossCfg:
    student_temp: float = 0.1
    teacher_temp: float = 0.04
    center_momentum: float = 0.9
    ema_momentum: float = 0.996

    def __post_init__(self):
        if not 0.0 < self.teacher_temp < self.student_temp:
            raise ValueError("need 0 < teacher_temp < student_temp")
        for name in ("center_momentum", "ema_momentum"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def softmax(x: np.ndarray, temp: float = 1.0) -> np.ndarray:
    z = x / temp
    z = z - z.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def log_softmax(x: np.ndarray, temp: float = 1.0) -> np.ndarray:
    z = x / temp
    z = z - z.max(-1, keepdims=True)
    return z - np.log(np.exp(z).sum(-1, keepdims=True))


def teacher_probs(teacher_logits, center, cfg: LossCfg) -> np.ndarray:
    return softmax(np.asarray(teacher_logits) - center, cfg.teacher_temp)


def distill_loss(teacher_logits, student_logits, center, cfg: LossCfg):
    """Cross-entropy of every student view against every *other* teacher view.

    ``teacher_logits`` is (T, B, K) for the T global views, ``student_logits``
    is (S, B, K) with the same T global views first. Teacher view t and
    student view t see the same crop and are not paired. Returns the loss
    (mean over pairs and batch) and its gradient with respect to the student
    logits; the teacher side carries no gradient.
    """
    t_logits = np.asarray(teacher_logits)
    s_logits = np.asarray(student_logits)
    if t_logits.ndim == 2:
        t_logits = t_logits[None]
    if s_logits.ndim == 2:
        s_logits = s_logits[None]
    if t_logits.shape[-1] != s_logits.shape[-1]:
        raise ValueError(f"prototype count mismatch: {t_logits.shape[-1]} vs {s_logits.shape[-1]}")
    n_t, n_s = t_logits.shape[0], s_logits.shape[0]
    if n_t < 1 or n_s < 1:
        raise ValueError("need at least one teacher and one student view")
    p_t = teacher_probs(t_logits, center, cfg)
    log_p_s = log_softmax(s_logits, cfg.student_temp)
    p_s = np.exp(log_p_s)
    bsz = s_logits.shape[1]

    pairs = [(t, s) for t in range(n_t) for s in range(n_s) if not (s == t and n_s > 1)]
    total = 0.0
    grad = np.zeros_like(s_logits)
    for t, s in pairs:
        total += float(-(p_t[t] * log_p_s[s]).sum())
        grad[s] += (p_s[s] - p_t[t]) / cfg.student_temp
    norm = len(pairs) * bsz
    return total / norm, grad / norm


def update_center(center, teacher_logits, momentum: float) -> np.ndarray:
    batch = np.asarray(teacher_logits)
    if batch.size == 0:
        raise ValueError("empty teacher batch")
    mean = batch.reshape(-1, batch.shape[-1]).mean(0)
    return momentum * np.asarray(center) + (1.0 - momentum) * mean
