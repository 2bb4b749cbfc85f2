"""Frozen-backbone features and a multinomial logistic-regression probe."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..coreio import derive
from ..ssl.vit import EncoderCfg, encoder_forward, param_shapes

DOMAIN_PROBE = 30

# linear-probe protocol constants: batch 128, 12.5k iterations
PROBE_BATCH = 128
PROBE_ITERS = 12_500


def check_params(params: dict, enc: EncoderCfg) -> None:
    """Raise if ``params`` does not fit ``enc`` (the positional grid may differ)."""
    expected = param_shapes(enc)
    if set(expected) != set(params):
        missing = sorted(set(expected) ^ set(params))
        raise ValueError(f"checkpoint/config mismatch in blocks {missing[:5]}")
    for name, shape in expected.items():
        got = params[name].shape
        if name == "pos":
            if got[1:] != shape[1:]:
                raise ValueError(f"checkpoint/config mismatch for 'pos': {got} vs {shape}")
        elif got != shape:
            raise ValueError(f"checkpoint/config mismatch for {name!r}: {got} vs {shape}")


def extract_features(params: dict, enc: EncoderCfg, images: np.ndarray, batch: int = 256) -> np.ndarray:
    """Class-token features (N, dim) in input order; no gradients are kept."""
    check_params(params, enc)
    images = np.asarray(images, dtype=np.float32)
    out = []
    for start in range(0, len(images), batch):
        feat, _, _ = encoder_forward(params, enc, images[start : start + batch])
        out.append(feat)
    if not out:
        return np.zeros((0, enc.dim), dtype=params["patch_w"].dtype)
    return np.concatenate(out, axis=0)


@dataclass
class ProbeModel:
    weight: np.ndarray  # (classes, dim)
    bias: np.ndarray  # (classes,)
    meta: dict = field(default_factory=dict)

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weight.T + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)

    def accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(features) == np.asarray(labels)))


def probe_loss_and_grad(weight, bias, features, labels, weight_decay: float = 0.0):
    """Mean softmax cross-entropy (+ L2 on ``weight``) and its gradients."""
    z = features @ weight.T + bias
    z = z - z.max(1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean() + 0.5 * weight_decay * float((weight**2).sum())
    p = np.exp(logp)
    p[np.arange(n), labels] -= 1.0
    p /= n
    dw = p.T @ features + weight_decay * weight
    db = p.sum(0)
    return float(loss), dw, db


def train_probe(features, labels, iters: int = PROBE_ITERS, batch: int = PROBE_BATCH,
                lr: float = 0.5, seed: int = 0, weight_decay: float = 1e-4) -> ProbeModel:
    """Mini-batch SGD with cosine decay on standardised features.

    Standardisation is folded back into the returned weights, so the probe
    applies directly to raw features.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("probe needs at least two classes")
    k = int(y.max()) + 1
    mu = x.mean(0)
    sd = x.std(0) + 1e-6
    xs = (x - mu) / sd
    n, d = xs.shape
    w = np.zeros((k, d))
    b = np.zeros(k)
    batch = min(batch, n)
    per_epoch = max(1, n // batch)
    order = None
    for it in range(iters):
        e, s = divmod(it, per_epoch)
        if s == 0:
            order = derive(seed, e, 0, domain=DOMAIN_PROBE).permutation(n)
        idx = order[s * batch : (s + 1) * batch]
        step = lr * 0.5 * (1.0 + math.cos(math.pi * it / iters))
        _, dw, db = probe_loss_and_grad(w, b, xs[idx], y[idx], weight_decay)
        w -= step * dw
        b -= step * db
    weight = w / sd
    bias = b - weight @ mu
    meta = {"iters": iters, "batch": batch, "lr": lr, "seed": seed,
            "weight_decay": weight_decay, "optimizer": "sgd+cosine"}
    return ProbeModel(weight, bias, meta)
