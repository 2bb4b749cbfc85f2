"""Tiny pre-norm ViT encoder with an explicit reverse pass.

Parameters live in a flat ``dict[str, ndarray]``; the forward pass returns a
cache that :func:`encoder_backward` consumes. Computation runs in the dtype of
the parameters (float32 for training, float64 for gradient checks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..coreio import Prng
from ..imaging import resize_bicubic, resize_matrix

LN_EPS = 1e-6
HEAD_EPS = 1e-12
# fixed input standardisation applied before patch embedding
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class EncoderCfg:
    patch: int = 8
    dim: int = 64
    depth: int = 4
    heads: int = 4
    prototypes: int = 256
    channels: int = 3
    mlp_ratio: int = 4
    head_hidden: int = 32
    pos_grid: int = 2  # side of the learned positional grid, in patches

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        for name in ("patch", "dim", "depth", "heads", "prototypes", "head_hidden", "pos_grid"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def grid(self, resolution: int) -> int:
        if resolution % self.patch:
            raise ValueError(f"resolution {resolution} not divisible by patch {self.patch}")
        return resolution // self.patch

    def tokens(self, resolution: int) -> int:
        """Patch tokens for a square input (class token excluded)."""
        return self.grid(resolution) ** 2


def param_shapes(cfg: EncoderCfg) -> dict[str, tuple[int, ...]]:
    d, p, c = cfg.dim, cfg.patch, cfg.channels
    hid = cfg.mlp_ratio * d
    shapes = {
        "patch_w": (p * p * c, d),
        "patch_b": (d,),
        "cls": (d,),
        "pos": (cfg.pos_grid * cfg.pos_grid + 1, d),
    }
    for i in range(cfg.depth):
        b = f"blocks.{i}."
        shapes.update(
            {
                b + "ln1_g": (d,),
                b + "ln1_b": (d,),
                b + "qkv_w": (d, 3 * d),
                b + "qkv_b": (3 * d,),
                b + "proj_w": (d, d),
                b + "proj_b": (d,),
                b + "ln2_g": (d,),
                b + "ln2_b": (d,),
                b + "fc1_w": (d, hid),
                b + "fc1_b": (hid,),
                b + "fc2_w": (hid, d),
                b + "fc2_b": (d,),
            }
        )
    shapes.update(
        {
            "norm_g": (d,),
            "norm_b": (d,),
            "head1_w": (d, cfg.head_hidden),
            "head1_b": (cfg.head_hidden,),
            "head2_w": (cfg.head_hidden, cfg.prototypes),
        }
    )
    return shapes


def no_decay(name: str) -> bool:
    """Blocks excluded from weight decay: biases, norm parameters, class token."""
    leaf = name.rsplit(".", 1)[-1]
    return leaf.endswith("_b") or leaf.endswith("_g") or leaf == "cls"


def init_params(cfg: EncoderCfg, rng: Prng, dtype=np.float32) -> dict[str, np.ndarray]:
    """Truncated-normal-ish init (std 0.02, clipped at 2 std); norms at 1/0."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            arr = np.ones(shape)
        elif leaf.endswith("_b"):
            arr = np.zeros(shape)
        else:
            arr = np.clip(rng.gaussian(shape), -2.0, 2.0) * 0.02
        params[name] = np.asarray(arr, dtype=dtype)
    return params


def zeros_like(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """(B, H, W, C) -> (B, N, patch*patch*C), patches in row-major order."""
    b, h, w, c = images.shape
    gh, gw = h // patch, w // patch
    x = images.reshape(b, gh, patch, gw, patch, c).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(b, gh * gw, patch * patch * c)


def pos_grid_side(pos: np.ndarray) -> int:
    g = int(round(math.sqrt(pos.shape[0] - 1)))
    if g * g + 1 != pos.shape[0]:
        raise ValueError(f"positional table of {pos.shape[0]} rows is not g*g+1")
    return g


def interp_pos_embed(pos: np.ndarray, target: int) -> np.ndarray:
    """Resize the positional grid to ``target x target``; the class row is kept."""
    g = pos_grid_side(pos)
    if g == target:
        return pos.copy()
    grid = pos[1:].reshape(g, g, -1)
    resized = resize_bicubic(grid, target, target, clamp=False).astype(pos.dtype)
    return np.concatenate([pos[:1], resized.reshape(target * target, -1)], axis=0)


# ------------------------------------------------------------------ primitives


def _layernorm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _layernorm_back(dy, g, cache):
    xhat, rstd = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axes)
    db = dy.sum(axes)
    dxhat = dy * g
    dx = rstd * (
        dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(x):
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x * x))
    return 0.5 * x * (1.0 + t), t


def _gelu_back(dy, x, t):
    dt = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dt)


def _linear(x, w, b):
    shape = x.shape
    y = x.reshape(-1, shape[-1]) @ w + b
    return y.reshape(*shape[:-1], w.shape[1])


def _linear_back(dy, x, w):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = x2.T @ dy2
    db = dy2.sum(0)
    dx = (dy2 @ w.T).reshape(x.shape)
    return dx, dw, db


def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------- forward/back


def encoder_forward(params, cfg: EncoderCfg, images: np.ndarray, keep_cache: bool = False):
    """Run a batch of square images through the encoder.

    Returns ``(features, logits, cache)``: features are the normalised class
    token (B, dim), logits the head output (B, prototypes). ``cache`` is None
    unless ``keep_cache``.
    """
    dtype = params["patch_w"].dtype
    x_img = np.asarray(images, dtype=dtype)
    if x_img.ndim == 3:
        x_img = x_img[None]
    bsz, h, w, c = x_img.shape
    if h != w:
        raise ValueError(f"square inputs only, got {h}x{w}")
    if c != cfg.channels:
        raise ValueError(f"expected {cfg.channels} channels, got {c}")
    g = cfg.grid(h)
    d, heads = cfg.dim, cfg.heads
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)

    patches = patchify((x_img - PIXEL_MEAN) / PIXEL_STD, cfg.patch)
    emb = _linear(patches, params["patch_w"], params["patch_b"])
    pos = params["pos"]
    g0 = pos_grid_side(pos)
    ry = None
    if g != g0:
        ry = resize_matrix(g0, g).astype(dtype)
        grid = np.einsum("ij,jkd,lk->ild", ry, pos[1:].reshape(g0, g0, d), ry)
        pos = np.concatenate([pos[:1], grid.reshape(g * g, d)], axis=0)
    cls = np.broadcast_to(params["cls"], (bsz, 1, d))
    x = np.concatenate([cls, emb], axis=1) + pos[None]
    n = x.shape[1]

    blocks = []
    for i in range(cfg.depth):
        p = f"blocks.{i}."
        a_in, ln1 = _layernorm(x, params[p + "ln1_g"], params[p + "ln1_b"])
        qkv = _linear(a_in, params[p + "qkv_w"], params[p + "qkv_b"])
        qkv = qkv.reshape(bsz, n, 3, heads, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = _softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(bsz, n, d)
        x1 = x + _linear(ctx, params[p + "proj_w"], params[p + "proj_b"])
        m_in, ln2 = _layernorm(x1, params[p + "ln2_g"], params[p + "ln2_b"])
        pre = _linear(m_in, params[p + "fc1_w"], params[p + "fc1_b"])
        act, t = _gelu(pre)
        x2 = x1 + _linear(act, params[p + "fc2_w"], params[p + "fc2_b"])
        if keep_cache:
            blocks.append(dict(a_in=a_in, ln1=ln1, q=q, k=k, v=v, attn=attn, ctx=ctx,
                               m_in=m_in, ln2=ln2, pre=pre, act=act, t=t))
        x = x2

    feat, lnf = _layernorm(x[:, 0], params["norm_g"], params["norm_b"])
    h1_pre = _linear(feat, params["head1_w"], params["head1_b"])
    h1, th = _gelu(h1_pre)
    # cosine-similarity prototypes: unit hidden vector against unit columns
    h1_norm = np.sqrt((h1 * h1).sum(-1, keepdims=True) + HEAD_EPS)
    z = h1 / h1_norm
    w2 = params["head2_w"]
    col_norm = np.sqrt((w2 * w2).sum(0, keepdims=True) + HEAD_EPS)
    w2n = w2 / col_norm
    logits = z @ w2n
    cache = None
    if keep_cache:
        cache = dict(patches=patches, ry=ry, g=g, n=n, bsz=bsz, blocks=blocks, lnf=lnf,
                     feat=feat, h1_pre=h1_pre, th=th, h1_norm=h1_norm, z=z, col_norm=col_norm,
                     w2n=w2n)
    return feat, logits, cache


def encoder_backward(params, cfg: EncoderCfg, cache, dlogits, dfeat=None, grads=None):
    """Accumulate parameter gradients for upstream ``dlogits`` into ``grads``."""
    if grads is None:
        grads = zeros_like(params)
    d, heads = cfg.dim, cfg.heads
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    bsz, n = cache["bsz"], cache["n"]
    dlogits = np.asarray(dlogits, dtype=params["head2_w"].dtype)

    z, w2n = cache["z"], cache["w2n"]
    dw2n = z.T @ dlogits
    grads["head2_w"] += (dw2n - w2n * (w2n * dw2n).sum(0, keepdims=True)) / cache["col_norm"]
    dz = dlogits @ w2n.T
    dh1 = (dz - z * (z * dz).sum(-1, keepdims=True)) / cache["h1_norm"]
    dh1_pre = _gelu_back(dh1, cache["h1_pre"], cache["th"])
    dfeat_head, dw, db = _linear_back(dh1_pre, cache["feat"], params["head1_w"])
    grads["head1_w"] += dw
    grads["head1_b"] += db
    if dfeat is not None:
        dfeat_head = dfeat_head + dfeat
    dcls, dg, db = _layernorm_back(dfeat_head, params["norm_g"], cache["lnf"])
    grads["norm_g"] += dg
    grads["norm_b"] += db
    dx = np.zeros((bsz, n, d), dtype=dcls.dtype)
    dx[:, 0] = dcls

    for i in reversed(range(cfg.depth)):
        p = f"blocks.{i}."
        c = cache["blocks"][i]
        # MLP branch
        dact, dw, db = _linear_back(dx, c["act"], params[p + "fc2_w"])
        grads[p + "fc2_w"] += dw
        grads[p + "fc2_b"] += db
        dpre = _gelu_back(dact, c["pre"], c["t"])
        dm_in, dw, db = _linear_back(dpre, c["m_in"], params[p + "fc1_w"])
        grads[p + "fc1_w"] += dw
        grads[p + "fc1_b"] += db
        dln, dg, db = _layernorm_back(dm_in, params[p + "ln2_g"], c["ln2"])
        grads[p + "ln2_g"] += dg
        grads[p + "ln2_b"] += db
        dx = dx + dln
        # attention branch
        dctx, dw, db = _linear_back(dx, c["ctx"], params[p + "proj_w"])
        grads[p + "proj_w"] += dw
        grads[p + "proj_b"] += db
        dctx = dctx.reshape(bsz, n, heads, dh).transpose(0, 2, 1, 3)
        attn = c["attn"]
        dattn = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        ds = attn * (dattn - (dattn * attn).sum(-1, keepdims=True)) * scale
        dq = ds @ c["k"]
        dk = ds.transpose(0, 1, 3, 2) @ c["q"]
        dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(bsz, n, 3 * d)
        da_in, dw, db = _linear_back(dqkv, c["a_in"], params[p + "qkv_w"])
        grads[p + "qkv_w"] += dw
        grads[p + "qkv_b"] += db
        dln, dg, db = _layernorm_back(da_in, params[p + "ln1_g"], c["ln1"])
        grads[p + "ln1_g"] += dg
        grads[p + "ln1_b"] += db
        dx = dx + dln

    dpos = dx.sum(0)
    if cache["ry"] is not None:
        ry, g, g0 = cache["ry"], cache["g"], pos_grid_side(params["pos"])
        dgrid = np.einsum("ij,ild,lk->jkd", ry, dpos[1:].reshape(g, g, d), ry)
        dpos = np.concatenate([dpos[:1], dgrid.reshape(g0 * g0, d)], axis=0)
    grads["pos"] += dpos
    grads["cls"] += dx[:, 0].sum(0)
    _, dw, db = _linear_back(dx[:, 1:], cache["patches"], params["patch_w"])
    grads["patch_w"] += dw
    grads["patch_b"] += db
    return grads
