"""Multi-crop student-teacher training loop driven by the curriculum."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..augment import apply_gaussian_patch
from ..coreio import derive, read_tensor, write_tensor
from ..curriculum import (
    CurriculumConfig,
    Stage,
    ema_momentum_at,
    lr_at,
    on_stage_transition,
    plan_for_epoch,
)
from ..imaging import GLOBAL_SCALE, LOCAL_SCALE, resize_bicubic, sample_crop
from .loss import LossCfg, distill_loss, softmax, update_center
from .optim import adamw_step, clip_grad_norm, ema_update
from .vit import EncoderCfg, encoder_backward, encoder_forward, init_params, zeros_like

log = logging.getLogger(__name__)

# rng domains, kept distinct so streams never collide
DOMAIN_INIT = 1
DOMAIN_ORDER = 2
DOMAIN_CROP = 3
DOMAIN_PATCH = 4

METRIC_COLUMNS = ("epoch", "stage", "loss", "lr", "tokens", "cum_flops", "teacher_entropy")


@dataclass(frozen=True)
class TrainCfg:
    n_global: int = 2
    n_local: int = 4
    global_scale: tuple[float, float] = GLOBAL_SCALE
    local_scale: tuple[float, float] = LOCAL_SCALE
    weight_decay: float = 0.04
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_grad: float = 3.0
    # off by default: the synthetic class cues (blob position, grating
    # orientation) are not mirror-symmetric, so flipping aliases classes
    flip_prob: float = 0.0


@dataclass
class TrainState:
    student: dict
    teacher: dict
    m: dict
    v: dict
    center: np.ndarray
    step: int = 0
    epoch: int = 0
    global_step: int = 0
    transitioned: bool = False


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    loss: float
    lr: float
    tokens: int
    cum_flops: int
    teacher_entropy: float


@dataclass
class TrainResult:
    state: TrainState
    records: list[EpochRecord] = field(default_factory=list)

    def metrics_csv(self, header: dict | None = None) -> str:
        return metrics_csv(self.records, header)


def new_state(enc: EncoderCfg, seed: int, dtype=np.float32) -> TrainState:
    student = init_params(enc, derive(seed, 0, 0, domain=DOMAIN_INIT), dtype)
    return TrainState(
        student=student,
        teacher={k: v.copy() for k, v in student.items()},
        m=zeros_like(student),
        v=zeros_like(student),
        center=np.zeros(enc.prototypes, dtype=dtype),
    )


def make_views(img, seed, epoch, index, plan, curr: CurriculumConfig, tcfg: TrainCfg):
    """Clean global views for the teacher and (possibly patched) student views."""
    rng = derive(seed, epoch, index, domain=DOMAIN_CROP)
    h, w = img.shape[:2]
    globals_, locals_ = [], []
    for k in range(tcfg.n_global + tcfg.n_local):
        is_global = k < tcfg.n_global
        lo, hi = tcfg.global_scale if is_global else tcfg.local_scale
        res = plan.global_res if is_global else plan.local_res
        crop = sample_crop(rng, h, w, lo, hi)
        view = resize_bicubic(crop.apply(img), res, res)
        # drawn even when disabled so the crop stream does not depend on it
        if rng.uniform() < tcfg.flip_prob:
            view = view[:, ::-1]
        (globals_ if is_global else locals_).append(view)
    s_globals, s_locals = list(globals_), list(locals_)
    if plan.gp_active:
        prng = derive(seed, epoch, index, domain=DOMAIN_PATCH)
        s_globals = [apply_gaussian_patch(v, prng, curr.gp_cfg) for v in globals_]
        if curr.gp_local_crops:
            s_locals = [apply_gaussian_patch(v, prng, curr.gp_cfg) for v in locals_]
    return globals_, s_globals, s_locals


def _stack_views(per_image: list[list[np.ndarray]]) -> np.ndarray:
    """[image][view] -> (views * batch, H, W, C), view-major."""
    n_views = len(per_image[0])
    return np.stack([per_image[b][k] for k in range(n_views) for b in range(len(per_image))])


def train_step(state, batch_views, enc, loss_cfg, tcfg, lr, ema_m):
    """One optimisation step on prepared views; returns (loss, teacher logits)."""
    t_globals, s_globals, s_locals = batch_views
    bsz = len(t_globals)
    n_g = tcfg.n_global
    _, t_logits, _ = encoder_forward(state.teacher, enc, _stack_views(t_globals))
    t_logits = t_logits.reshape(n_g, bsz, -1)

    _, sg_logits, g_cache = encoder_forward(state.student, enc, _stack_views(s_globals), True)
    logits = [sg_logits.reshape(n_g, bsz, -1)]
    l_cache = None
    if tcfg.n_local:
        _, sl_logits, l_cache = encoder_forward(state.student, enc, _stack_views(s_locals), True)
        logits.append(sl_logits.reshape(tcfg.n_local, bsz, -1))
    s_logits = np.concatenate(logits, axis=0)

    loss, dlogits = distill_loss(t_logits, s_logits, state.center, loss_cfg)
    dlogits = dlogits.astype(sg_logits.dtype)
    grads = encoder_backward(state.student, enc, g_cache, dlogits[:n_g].reshape(n_g * bsz, -1))
    if l_cache is not None:
        encoder_backward(state.student, enc, l_cache,
                         dlogits[n_g:].reshape(tcfg.n_local * bsz, -1), grads=grads)
    if tcfg.clip_grad:
        clip_grad_norm(grads, tcfg.clip_grad)
    _, _, _, state.step = adamw_step(
        state.student, grads, state.m, state.v, state.step, lr,
        tcfg.beta1, tcfg.beta2, tcfg.eps, tcfg.weight_decay,
    )
    ema_update(state.teacher, state.student, ema_m)
    state.center = update_center(state.center, t_logits, loss_cfg.center_momentum).astype(
        state.center.dtype
    )
    state.global_step += 1
    return loss, t_logits


def _entropy(t_logits, center, loss_cfg) -> float:
    p = softmax(t_logits.reshape(-1, t_logits.shape[-1]) - center, loss_cfg.teacher_temp)
    p_mean = p.mean(0)
    return float(-(p_mean * np.log(p_mean + 1e-12)).sum())


def train_run(
    images: np.ndarray,
    curr: CurriculumConfig,
    enc: EncoderCfg,
    loss_cfg: LossCfg,
    seed: int,
    tcfg: TrainCfg = TrainCfg(),
    on_epoch_end: Callable[[TrainState, EpochRecord], None] | None = None,
) -> TrainResult:
    """Pretrain on ``images`` (N, H, W, C) following the curriculum.

    Each epoch visits every image once in a seeded order, in batches of the
    stage's batch size (a trailing partial batch is dropped). The transition
    hook fires at the first full-resolution epoch of a two-stage run.
    """
    from ..evalsuite.flops import epoch_flops

    images = np.asarray(images, dtype=np.float32)
    if len(images) == 0:
        raise ValueError("empty dataset")
    first = plan_for_epoch(curr, 0)
    grid0 = enc.grid(first.global_res)
    if enc.pos_grid != grid0:
        raise ValueError(f"encoder pos_grid {enc.pos_grid} != first-stage grid {grid0}")
    state = new_state(enc, seed)
    result = TrainResult(state)
    cum_flops = 0
    n = len(images)
    for epoch in range(curr.total_epochs):
        state.epoch = epoch
        plan = plan_for_epoch(curr, epoch)
        if epoch == curr.boundary and epoch > 0 and not state.transitioned:
            on_stage_transition(state, curr, enc.patch)
            log.info("stage transition at epoch %d", epoch)
        bsz = min(plan.batch_size, n)
        steps = n // bsz
        order = derive(seed, epoch, 0, domain=DOMAIN_ORDER).permutation(n)
        losses = []
        entropy = 0.0
        lr = 0.0
        for s in range(steps):
            idx = order[s * bsz : (s + 1) * bsz]
            views = [make_views(images[i], seed, epoch, int(i), plan, curr, tcfg) for i in idx]
            batch = tuple([v[k] for v in views] for k in range(3))
            lr = lr_at(curr, epoch, s, steps)
            ema_m = ema_momentum_at(curr, loss_cfg.ema_momentum, epoch, s, steps)
            loss, t_logits = train_step(state, batch, enc, loss_cfg, tcfg, lr, ema_m)
            losses.append(loss)
            if s == steps - 1:
                entropy = _entropy(t_logits, state.center, loss_cfg)
        cum_flops += epoch_flops(curr, enc, epoch, steps * bsz, tcfg.n_global, tcfg.n_local)
        rec = EpochRecord(
            epoch=epoch,
            stage=plan.stage.value,
            loss=float(np.mean(losses)),
            lr=lr,
            tokens=enc.tokens(plan.global_res),
            cum_flops=cum_flops,
            teacher_entropy=entropy,
        )
        result.records.append(rec)
        log.info("epoch %d %s loss %.4f lr %.2e", epoch, plan.stage.value, rec.loss, lr)
        if on_epoch_end is not None:
            on_epoch_end(state, rec)
    state.epoch = curr.total_epochs
    return result


def metrics_csv(records, header: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}={v}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for r in records:
        writer.writerow([r.epoch, r.stage, f"{r.loss:.8f}", f"{r.lr:.8e}", r.tokens, r.cum_flops,
                         f"{r.teacher_entropy:.6f}"])
    return buf.getvalue()


# ----------------------------------------------------------------- checkpoints


def save_checkpoint(state: TrainState, root: str | os.PathLike, config_hash: str = "",
                    seed: int | None = None) -> Path:
    """Write every tensor as an FVT1 file plus ``manifest.txt``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = [f"config_hash={config_hash}", f"seed={seed}", f"step={state.step}",
             f"global_step={state.global_step}", f"epoch={state.epoch}",
             f"transitioned={int(state.transitioned)}"]
    groups = {"student": state.student, "teacher": state.teacher, "adam_m": state.m,
              "adam_v": state.v, "center": {"center": state.center}}
    for group, tensors in groups.items():
        for name, arr in tensors.items():
            rel = f"{group}/{name}.fvt"
            (root / group).mkdir(exist_ok=True)
            write_tensor(arr, root / rel)
            lines.append(f"tensor {rel} {'x'.join(map(str, arr.shape))}")
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")
    return root


def load_checkpoint(root: str | os.PathLike) -> tuple[TrainState, dict]:
    root = Path(root)
    meta, groups = {}, {"student": {}, "teacher": {}, "adam_m": {}, "adam_v": {}, "center": {}}
    for line in (root / "manifest.txt").read_text().splitlines():
        if line.startswith("tensor "):
            _, rel, _ = line.split(" ")
            group, fname = rel.split("/", 1)
            groups[group][fname[: -len(".fvt")]] = read_tensor(root / rel)
        elif "=" in line:
            k, v = line.split("=", 1)
            meta[k] = v
    state = TrainState(
        student=groups["student"], teacher=groups["teacher"], m=groups["adam_m"],
        v=groups["adam_v"], center=groups["center"]["center"], step=int(meta["step"]),
        epoch=int(meta["epoch"]), global_step=int(meta["global_step"]),
        transitioned=bool(int(meta["transitioned"])),
    )
    return state, meta


def checkpoint_checksum(root: str | os.PathLike) -> str:
    """SHA-256 over the manifest and every tensor file, in manifest order."""
    root = Path(root)
    h = hashlib.sha256()
    manifest = (root / "manifest.txt").read_bytes()
    h.update(manifest)
    for line in manifest.decode().splitlines():
        if line.startswith("tensor "):
            h.update((root / line.split(" ")[1]).read_bytes())
    return h.hexdigest()


def params_checksum(params: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k]).tobytes())
    return h.hexdigest()
