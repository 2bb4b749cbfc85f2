"""Plain-text run configuration: ``section.key = value`` lines.

Sections map onto the component dataclasses::

    curriculum.*  CurriculumConfig (minus the patch config)
    gp.*          GaussianPatchCfg used in stage 2
    encoder.*     EncoderCfg
    loss.*        LossCfg
    train.*       TrainCfg
    data.*        SynthCfg
    eval.*        EvalCfg

plus the top-level keys ``seed`` and ``out``. Blank lines and ``#`` comments
are ignored; unknown keys and unparsable values raise :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import typing
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .augment import GaussianPatchCfg
from .curriculum import CurriculumConfig
from .datagen import SynthCfg
from .evalsuite.probe import PROBE_BATCH, PROBE_ITERS
from .ssl.loss import LossCfg
from .ssl.trainer import TrainCfg
from .ssl.vit import EncoderCfg

__all__ = ["ConfigError", "EvalCfg", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Bad key or value; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class EvalCfg:
    probe_iters: int = PROBE_ITERS
    probe_batch: int = PROBE_BATCH
    probe_lr: float = 0.5
    probe_weight_decay: float = 1e-4
    heatmap_v: float | None = None  # None -> 4/255 * n
    heatmap_per_class: int = 5

    def __post_init__(self):
        if self.probe_iters < 1 or self.probe_batch < 1:
            raise ValueError("probe_iters and probe_batch must be positive")
        if self.heatmap_per_class < 1:
            raise ValueError("heatmap_per_class must be positive")


# desk-scale defaults: 32x32 images, 16 -> 32 curriculum, patch 8
DESK_CURRICULUM = CurriculumConfig(
    total_epochs=24,
    stage1_global_res=16,
    stage1_local_res=8,
    stage2_global_res=32,
    stage2_local_res=16,
    batch_size=16,
    lr_batch_ref=16,
    lr_ref=3e-3,
    warmup_epochs=1,
    reset_ema_on_transition=True,
)
DESK_ENCODER = EncoderCfg(pos_grid=2)


@dataclass(frozen=True)
class RunConfig:
    curriculum: CurriculumConfig = DESK_CURRICULUM
    encoder: EncoderCfg = DESK_ENCODER
    loss: LossCfg = LossCfg(ema_momentum=0.99)
    train: TrainCfg = field(default_factory=TrainCfg)
    data: SynthCfg = field(default_factory=SynthCfg)
    eval: EvalCfg = field(default_factory=EvalCfg)
    seed: int = 0
    out: str = "runs"

    def to_text(self) -> str:
        """Canonical dump: every key, sorted, one ``key = value`` per line."""
        return "".join(f"{k} = {_format(v)}\n" for k, v in sorted(flatten(self).items()))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def baseline(self) -> "RunConfig":
        """Single-resolution twin; the encoder grid follows the full resolution."""
        curr = self.curriculum.baseline()
        return replace(self, curriculum=curr,
                       encoder=replace(self.encoder, pos_grid=self.encoder.grid(curr.stage2_global_res)))


_SECTIONS = ("curriculum", "encoder", "loss", "train", "data", "eval")


def _fields(obj) -> dict[str, typing.Any]:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def flatten(cfg: RunConfig) -> dict[str, typing.Any]:
    out: dict[str, typing.Any] = {"seed": cfg.seed, "out": cfg.out}
    for sec in _SECTIONS:
        for name, value in _fields(getattr(cfg, sec)).items():
            if sec == "curriculum" and name == "gp_cfg":
                for gname, gval in _fields(value).items():
                    out[f"gp.{gname}"] = gval
            else:
                out[f"{sec}.{name}"] = value
    return out


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Enum):
        return str(v.value)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if v is None:
        return "none"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(text: str, hint, key: str):
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or type(hint).__name__ == "UnionType":
        if type(None) in args and text.lower() in ("none", ""):
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(text, inner[0], key)
    if origin is tuple:
        parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
        if len(parts) != len(args):
            raise ConfigError(f"{key}: expected {len(args)} comma-separated values", key)
        return tuple(_coerce(p, a, key) for p, a in zip(parts, args))
    try:
        if hint is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if isinstance(hint, type) and issubclass(hint, Enum):
            return hint(text)
        if hint is str:
            return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(hint, '__name__', hint)}",
                          key) from None
    raise ConfigError(f"{key}: unsupported type {hint}", key)


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines on top of ``base`` (desk defaults if None)."""
    base = base or RunConfig()
    updates: dict[str, dict[str, typing.Any]] = {s: {} for s in (*_SECTIONS, "gp")}
    top: dict[str, typing.Any] = {}
    section_cls = {
        "curriculum": CurriculumConfig, "encoder": EncoderCfg, "loss": LossCfg,
        "train": TrainCfg, "data": SynthCfg, "eval": EvalCfg, "gp": GaussianPatchCfg,
    }
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in ("seed", "out"):
            top[key] = _coerce(value, int if key == "seed" else str, key)
            continue
        sec, _, name = key.partition(".")
        cls = section_cls.get(sec)
        hints = _hints(cls) if cls else {}
        if not name or name not in hints or (sec == "curriculum" and name == "gp_cfg"):
            raise ConfigError(f"unknown config key {key!r}", key)
        updates[sec][name] = _coerce(value, hints[name], key)

    try:
        gp = replace(base.curriculum.gp_cfg, **updates.pop("gp"))
        parts = {sec: replace(getattr(base, sec), **updates[sec]) for sec in _SECTIONS}
        parts["curriculum"] = replace(parts["curriculum"], gp_cfg=gp)
        return replace(base, **parts, **top)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
