"""Analytic FLOP counts for the ViT encoder and whole training schedules.

Conventions: one multiply-accumulate is 2 FLOPs; a backward pass costs twice
the forward pass. Per block with n tokens (class token included) and width d:
qkv + output projection 4*n*d^2 MACs, attention maps 2*n^2*d MACs, MLP
8*n*d^2 MACs at hidden ratio 4. The patch embedding costs
n_patches * p^2 * c * d MACs.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..curriculum import CurriculumConfig, plan_for_epoch
from ..ssl.vit import EncoderCfg

VIT_B16 = EncoderCfg(patch=16, dim=768, depth=12, heads=12, prototypes=65536,
                     head_hidden=2048, pos_grid=14)
VIT_S16 = EncoderCfg(patch=16, dim=384, depth=12, heads=6, prototypes=65536,
                     head_hidden=2048, pos_grid=14)
PRESETS = {"vitb16": VIT_B16, "vits16": VIT_S16}


@dataclass(frozen=True)
class ForwardCost:
    resolution: int
    patch_tokens: int
    tokens: int
    patch_embed: int
    blocks: int
    head: int

    @property
    def total(self) -> int:
        return self.patch_embed + self.blocks + self.head


def block_macs(n: int, d: int, mlp_ratio: int = 4) -> int:
    return 4 * n * d * d + 2 * n * n * d + 2 * mlp_ratio * n * d * d


def flops_estimate(cfg: EncoderCfg, resolution: int, include_head: bool = True) -> ForwardCost:
    """FLOPs of one forward pass on a single square image."""
    patches = cfg.tokens(resolution)
    n = patches + 1
    d = cfg.dim
    embed = 2 * patches * cfg.patch * cfg.patch * cfg.channels * d
    blocks = 2 * cfg.depth * block_macs(n, d, cfg.mlp_ratio)
    head = 2 * (d * cfg.head_hidden + cfg.head_hidden * cfg.prototypes) if include_head else 0
    return ForwardCost(resolution, patches, n, embed, blocks, head)


def step_flops(cfg: EncoderCfg, global_res: int, local_res: int, n_global: int = 2,
               n_local: int = 8) -> int:
    """Training FLOPs per image: student forward+backward on every view,
    teacher forward on the global views."""
    g = flops_estimate(cfg, global_res).total
    loc = flops_estimate(cfg, local_res).total if n_local else 0
    student = 3 * (n_global * g + n_local * loc)
    teacher = n_global * g
    return student + teacher


def epoch_flops(curr: CurriculumConfig, cfg: EncoderCfg, epoch: int, images: int = 1,
                n_global: int = 2, n_local: int = 8) -> int:
    plan = plan_for_epoch(curr, epoch)
    return images * step_flops(cfg, plan.global_res, plan.local_res, n_global, n_local)


def schedule_flops(curr: CurriculumConfig, cfg: EncoderCfg, images: int = 1, n_global: int = 2,
                   n_local: int = 8) -> int:
    """Cumulative training FLOPs over the whole schedule."""
    return sum(
        epoch_flops(curr, cfg, e, images, n_global, n_local) for e in range(curr.total_epochs)
    )
