"""Shared oracles for the test modules."""

import numpy as np

from freqvit.coreio import Prng
from freqvit.ssl.loss import LossCfg, distill_loss
from freqvit.ssl.vit import EncoderCfg, encoder_backward, encoder_forward, init_params

TINY = EncoderCfg(patch=4, dim=8, depth=1, heads=2, prototypes=4, head_hidden=6, pos_grid=2)


def rel_err(a, b) -> float:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-30)
    return float(np.linalg.norm(a - b) / denom)


def tiny_problem(seed=0, res=8, cfg=TINY):
    """Random float64 weights, one student view per image, fixed teacher logits."""
    rng = Prng(seed)
    params = init_params(cfg, rng, np.float64)
    # scale weights up from the 0.02 init so every nonlinearity is exercised
    for k, v in params.items():
        if not k.endswith(("_g", "_b")):
            params[k] = v * 20.0
        elif k.endswith("_b"):
            params[k] = 0.1 * rng.gaussian(v.shape)
    images = rng.uniform((2, res, res, cfg.channels))
    t_logits = rng.gaussian((1, 2, cfg.prototypes))
    center = 0.1 * rng.gaussian(cfg.prototypes)
    return params, images, t_logits, center


def distill_objective(params, cfg, images, t_logits, center, loss_cfg=LossCfg()):
    _, logits, cache = encoder_forward(params, cfg, images, keep_cache=True)
    loss, dlog = distill_loss(t_logits, logits[None], center, loss_cfg)
    return loss, dlog[0], cache


def fd_check(params, cfg, images, t_logits, center, eps=1e-6, per_block=6, seed=1):
    """Worst relative error between analytic and central-difference gradients.

    Checks ``per_block`` random coordinates in every parameter block.
    """
    loss, dlog, cache = distill_objective(params, cfg, images, t_logits, center)
    grads = encoder_backward(params, cfg, cache, dlog)
    rng = Prng(seed)
    worst = {}
    for name, p in params.items():
        flat = p.reshape(-1)
        picks = rng.permutation(flat.size)[:per_block]
        num, ana = [], []
        for i in picks:
            old = flat[i]
            flat[i] = old + eps
            up = distill_objective(params, cfg, images, t_logits, center)[0]
            flat[i] = old - eps
            dn = distill_objective(params, cfg, images, t_logits, center)[0]
            flat[i] = old
            num.append((up - dn) / (2 * eps))
            ana.append(grads[name].reshape(-1)[i])
        worst[name] = rel_err(ana, num)
    return worst
