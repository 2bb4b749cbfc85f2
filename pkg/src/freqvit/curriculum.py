"""Two-stage low-resolution -> full-resolution schedule.

Stage 1 (``low_freq``) covers epochs ``[0, boundary)`` with downsampled crops;
stage 2 (``full_res``) covers the rest with full-size crops and, by default,
Gaussian noise patching. At the boundary the optimizer state is cleared and
the positional grid is upsampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .augment import GaussianPatchCfg
from .ssl.vit import interp_pos_embed

__all__ = [
    "LR_PRESETS",
    "CurriculumConfig",
    "Stage",
    "StagePlan",
    "TransitionError",
    "base_lr",
    "ema_momentum_at",
    "lr_at",
    "on_stage_transition",
    "plan_for_epoch",
]

# (reference batch, learning rate) anchors quoted for the two training setups
LR_PRESETS = {
    "vitb16_in1k": (512, 7.9e-4),
    "vits16_in100": (40, 4e-3),
}


class Stage(str, Enum):
    LOW_FREQ = "low_freq"
    FULL_RES = "full_res"


class TransitionError(RuntimeError):
    pass


@dataclass(frozen=True)
class CurriculumConfig:
    total_epochs: int = 200
    stage1_fraction: float = 0.75
    stage1_global_res: int = 112
    stage1_local_res: int = 48
    stage2_global_res: int = 224
    stage2_local_res: int = 96
    curriculum: bool = True
    gp_enabled_stage2: bool = True
    gp_cfg: GaussianPatchCfg = field(default_factory=GaussianPatchCfg)
    gp_local_crops: bool = True
    batch_size: int = 40
    stage1_batch_size: int | None = None
    lr_rule: str = "sqrt"
    lr_batch_ref: int = 40
    lr_ref: float = 4e-3
    warmup_epochs: int = 10
    lr_floor: float = 1e-6
    reset_optimizer_on_transition: bool = True
    reset_schedule_on_transition: bool = True
    reset_ema_on_transition: bool = False

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")
        if not 0.0 < self.stage1_fraction < 1.0:
            raise ValueError(f"stage1_fraction must lie in (0, 1), got {self.stage1_fraction}")
        if self.lr_rule not in ("sqrt", "linear", "fixed"):
            raise ValueError(f"unknown lr_rule {self.lr_rule!r}")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")

    @property
    def boundary(self) -> int:
        """First full-resolution epoch."""
        if not self.curriculum:
            return 0
        return int(math.floor(self.stage1_fraction * self.total_epochs))

    def stage_of(self, epoch: int) -> Stage:
        return Stage.LOW_FREQ if epoch < self.boundary else Stage.FULL_RES

    def batch_for(self, stage: Stage) -> int:
        if stage is Stage.LOW_FREQ and self.stage1_batch_size is not None:
            return self.stage1_batch_size
        return self.batch_size

    def baseline(self) -> "CurriculumConfig":
        """Single-stage twin: full resolution throughout, no patching."""
        return replace(self, curriculum=False, gp_enabled_stage2=False)


@dataclass(frozen=True)
class StagePlan:
    epoch: int
    stage: Stage
    global_res: int
    local_res: int
    gp_active: bool
    batch_size: int
    lr_multiplier: float


def plan_for_epoch(cfg: CurriculumConfig, epoch: int) -> StagePlan:
    if not 0 <= epoch < cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    stage = cfg.stage_of(epoch)
    low = stage is Stage.LOW_FREQ
    lr0 = base_lr(cfg, stage)
    return StagePlan(
        epoch=epoch,
        stage=stage,
        global_res=cfg.stage1_global_res if low else cfg.stage2_global_res,
        local_res=cfg.stage1_local_res if low else cfg.stage2_local_res,
        gp_active=(not low) and cfg.gp_enabled_stage2,
        batch_size=cfg.batch_for(stage),
        lr_multiplier=lr_at(cfg, epoch, 0) / lr0 if lr0 > 0 else 0.0,
    )


def base_lr(cfg: CurriculumConfig, stage: Stage = Stage.FULL_RES) -> float:
    batch = cfg.batch_for(stage)
    if batch <= 0 or cfg.lr_batch_ref <= 0:
        raise ValueError("batch sizes must be positive")
    ratio = batch / cfg.lr_batch_ref
    if cfg.lr_rule == "sqrt":
        return cfg.lr_ref * math.sqrt(ratio)
    if cfg.lr_rule == "linear":
        return cfg.lr_ref * ratio
    return cfg.lr_ref


def _clock(cfg: CurriculumConfig, epoch: int, step: int, steps_per_epoch: int, restart: bool):
    """(time since the schedule origin, schedule length), both in epochs."""
    t = epoch + step / steps_per_epoch
    b = cfg.boundary
    if restart and 0 < b:
        if epoch < b:
            return t, float(b)
        return t - b, float(cfg.total_epochs - b)
    return t, float(cfg.total_epochs)


def lr_at(cfg: CurriculumConfig, epoch: int, step: int = 0, steps_per_epoch: int = 1) -> float:
    """Linear warmup then cosine decay to ``lr_floor``, restarted per stage."""
    t, length = _clock(cfg, epoch, step, steps_per_epoch, cfg.reset_schedule_on_transition)
    peak = base_lr(cfg, cfg.stage_of(epoch))
    warm = min(float(cfg.warmup_epochs), length)
    if t < warm:
        return peak * t / warm
    span = length - warm
    frac = (t - warm) / span if span > 0 else 1.0
    return cfg.lr_floor + (peak - cfg.lr_floor) * 0.5 * (1.0 + math.cos(math.pi * min(frac, 1.0)))


def ema_momentum_at(cfg: CurriculumConfig, start: float, epoch: int, step: int = 0,
                    steps_per_epoch: int = 1) -> float:
    """Teacher momentum: cosine ramp from ``start`` to 1 over the run (or stage)."""
    t, length = _clock(cfg, epoch, step, steps_per_epoch, cfg.reset_ema_on_transition)
    frac = min(t / length, 1.0) if length > 0 else 1.0
    return 1.0 - (1.0 - start) * 0.5 * (1.0 + math.cos(math.pi * frac))


def on_stage_transition(state, cfg: CurriculumConfig, patch: int):
    """Enter stage 2: clear Adam moments and step, upsample the positional grid.

    Student and teacher weights are otherwise left alone; the teacher's grid
    is upsampled too so the two stay congruent for the EMA update.
    """
    if state.transitioned:
        raise TransitionError("stage transition already happened")
    if state.epoch != cfg.boundary:
        raise TransitionError(f"transition at epoch {state.epoch}, boundary is {cfg.boundary}")
    target = cfg.stage2_global_res // patch
    state.student["pos"] = interp_pos_embed(state.student["pos"], target)
    state.teacher["pos"] = interp_pos_embed(state.teacher["pos"], target)
    if cfg.reset_optimizer_on_transition:
        for moments in (state.m, state.v):
            for name, p in state.student.items():
                moments[name] = np.zeros_like(p)
        state.step = 0
    else:
        state.m["pos"] = interp_pos_embed(state.m["pos"], target)
        state.v["pos"] = np.maximum(interp_pos_embed(state.v["pos"], target), 0.0)
    state.transitioned = True
    return state
