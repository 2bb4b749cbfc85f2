"""``freqvit`` command line: data generation, pretraining and evaluation.

Exit codes: 0 on success, 1 on a runtime failure, 2 on a configuration or
usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .augment import catalog_from_csv, corruption_catalog
from .config import ConfigError, RunConfig, load_config
from .coreio import read_tensor, resolve_threads, write_tensor
from .curriculum import CurriculumConfig, plan_for_epoch
from .datagen import generate_synth, load_dataset, scan_dataset
from .evalsuite.benchmark import corruption_benchmark
from .evalsuite.flops import PRESETS, flops_estimate, schedule_flops
from .evalsuite.probe import ProbeModel, extract_features, train_probe
from .imaging import resize_bicubic
from .spectral import sensitivity_heatmap
from .ssl.trainer import load_checkpoint, metrics_csv, save_checkpoint, train_run

log = logging.getLogger("freqvit")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


# ------------------------------------------------------------------- helpers


def _header(cfg: RunConfig, **extra) -> dict:
    return {"config_hash": cfg.hash, "seed": cfg.seed, **extra}


def _header_lines(header: dict) -> str:
    return "".join(f"# {k}={v}\n" for k, v in header.items())


def _split_dir(data: Path, split: str) -> Path:
    """``data/<split>`` when present, else ``data`` itself for training."""
    sub = data / split
    if sub.is_dir():
        return sub
    if split == "train":
        return data
    raise FileNotFoundError(f"no {split!r} split under {data}")


def _load_split(data: Path, split: str):
    images, labels = load_dataset(scan_dataset(_split_dir(data, split), split))
    return images, labels


def _encoder_for(cfg: RunConfig):
    """Encoder whose positional grid matches the first training stage."""
    first = plan_for_epoch(cfg.curriculum, 0)
    return replace(cfg.encoder, pos_grid=cfg.encoder.grid(first.global_res))


def _teacher(checkpoint: Path):
    state, meta = load_checkpoint(checkpoint)
    return state.teacher, meta


def _fit_probe(cfg: RunConfig, params, enc, data: Path) -> ProbeModel:
    x, y = _load_split(data, "train")
    feats = extract_features(params, enc, x)
    e = cfg.eval
    return train_probe(feats, y, iters=e.probe_iters, batch=e.probe_batch, lr=e.probe_lr,
                       seed=cfg.seed, weight_decay=e.probe_weight_decay)


def _probe_from(args, cfg, params, enc) -> ProbeModel:
    if getattr(args, "probe", None):
        root = Path(args.probe)
        return ProbeModel(read_tensor(root / "probe_weight.fvt").astype(np.float64),
                          read_tensor(root / "probe_bias.fvt").astype(np.float64))
    return _fit_probe(cfg, params, enc, Path(args.data))


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ commands


def cmd_gen_data(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    threads = resolve_threads(args.threads)
    splits = ["train", "val"] if args.split == "both" else [args.split]
    for split in splits:
        data = cfg.data
        if split == "val":
            data = replace(data, per_class=max(1, data.per_class // 5))
        root = out / split if len(splits) > 1 else out
        manifest = generate_synth(data, root, split, meta=_header(cfg), threads=threads)
        print(f"{split}: {len(manifest)} images in {len(manifest.classes)} classes -> {root}")
    return EXIT_OK


def cmd_pretrain(args, cfg: RunConfig) -> int:
    if args.baseline:
        cfg = cfg.baseline()
    images, _ = _load_split(Path(args.data), "train")
    enc = _encoder_for(cfg)
    out = _out_dir(args, cfg)
    (out / "config.txt").write_text(cfg.to_text())
    result = train_run(images, cfg.curriculum, enc, cfg.loss, cfg.seed, cfg.train)
    header = _header(cfg, mode="baseline" if args.baseline else "curriculum")
    (out / "metrics.csv").write_text(metrics_csv(result.records, header))
    save_checkpoint(result.state, out / "checkpoint", cfg.hash, cfg.seed)
    last = result.records[-1]
    print(f"pretrained {len(result.records)} epochs, final loss {last.loss:.4f}, "
          f"cumulative FLOPs {last.cum_flops:.4e} -> {out}")
    return EXIT_OK


def cmd_probe(args, cfg: RunConfig) -> int:
    params, _ = _teacher(Path(args.checkpoint))
    enc = cfg.encoder
    data = Path(args.data)
    probe = _fit_probe(cfg, params, enc, data)
    xtr, ytr = _load_split(data, "train")
    train_acc = probe.accuracy(extract_features(params, enc, xtr), ytr)
    rows = [("train", train_acc)]
    try:
        xv, yv = _load_split(data, "val")
        rows.append(("val", probe.accuracy(extract_features(params, enc, xv), yv)))
    except FileNotFoundError:
        log.info("no val split; reporting train accuracy only")
    out = _out_dir(args, cfg)
    write_tensor(probe.weight, out / "probe_weight.fvt")
    write_tensor(probe.bias, out / "probe_bias.fvt")
    buf = io.StringIO()
    buf.write(_header_lines(_header(cfg, probe_iters=cfg.eval.probe_iters,
                                    probe_batch=cfg.eval.probe_batch)))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["split", "accuracy", "error"])
    for split, acc in rows:
        w.writerow([split, f"{acc:.6f}", f"{1 - acc:.6f}"])
        print(f"{split} accuracy {acc:.4f}")
    (out / "probe.csv").write_text(buf.getvalue())
    return EXIT_OK


def cmd_eval_c(args, cfg: RunConfig) -> int:
    params, _ = _teacher(Path(args.checkpoint))
    enc = cfg.encoder
    probe = _probe_from(args, cfg, params, enc)
    catalog = (catalog_from_csv(Path(args.catalog).read_text()) if args.catalog
               else corruption_catalog())
    x, y = _load_split(Path(args.data), "val" if args.split == "val" else "train")
    report = corruption_benchmark(params, enc, probe, x, y, catalog, seed=cfg.seed,
                                  threads=resolve_threads(args.threads))
    report.meta.update(_header(cfg))
    out = _out_dir(args, cfg)
    (out / "eval_c.csv").write_text(report.to_csv())
    print(f"clean {report.clean_accuracy:.4f} overall {report.overall:.4f}")
    for g, acc in report.groups.items():
        print(f"  {g:<7s} {acc:.4f}")
    return EXIT_OK


def _pow2_below_or_equal(n: int) -> int:
    return 1 << (n.bit_length() - 1)


def cmd_heatmap(args, cfg: RunConfig) -> int:
    params, _ = _teacher(Path(args.checkpoint))
    enc = cfg.encoder
    probe = _probe_from(args, cfg, params, enc)
    x, y = _load_split(Path(args.data), "val" if args.split == "val" else "train")
    n = x.shape[1]
    native = cfg.curriculum.stage2_global_res
    meta = {}
    if n & (n - 1):
        p2 = _pow2_below_or_equal(n)
        x = np.stack([resize_bicubic(im, p2, p2) for im in x])
        meta["resized_from"] = n
        n = p2

    def predict(batch):
        return probe.predict(extract_features(params, enc, batch))

    v = args.v if args.v is not None else cfg.eval.heatmap_v
    grid = sensitivity_heatmap(predict, x, y, v=v, seed=cfg.seed,
                               per_class=cfg.eval.heatmap_per_class,
                               resolution=native,
                               threads=resolve_threads(args.threads))
    grid.meta.update(meta)
    grid.meta.update(_header(cfg))
    out = _out_dir(args, cfg)
    paths = grid.write(out / "heatmap")
    print(f"clean error {grid.clean_error:.4f}, max cell {np.nanmax(grid.values):.4f} -> "
          + ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_flops(args, cfg: RunConfig) -> int:
    if args.preset:
        enc = PRESETS[args.preset]
        curr = CurriculumConfig(total_epochs=args.epochs or 200)
        base = replace(curr, curriculum=False, gp_enabled_stage2=False,
                       total_epochs=args.baseline_epochs or 250)
        n_local = 8
    else:
        enc = cfg.encoder
        curr = replace(cfg.curriculum, total_epochs=args.epochs or cfg.curriculum.total_epochs)
        base = replace(curr.baseline(), total_epochs=args.baseline_epochs or curr.total_epochs)
        n_local = cfg.train.n_local
    n_global = cfg.train.n_global
    hi = flops_estimate(enc, curr.stage2_global_res)
    lo = flops_estimate(enc, curr.stage1_global_res)
    total_curr = schedule_flops(curr, enc, 1, n_global, n_local)
    total_base = schedule_flops(base, enc, 1, n_global, n_local)
    rows = [
        ("forward_flops", curr.stage2_global_res, hi.patch_tokens, hi.total),
        ("forward_flops", curr.stage1_global_res, lo.patch_tokens, lo.total),
    ]
    print(f"patch tokens: {hi.patch_tokens} at {curr.stage2_global_res}px vs "
          f"{lo.patch_tokens} at {curr.stage1_global_res}px "
          f"({1 - lo.patch_tokens / hi.patch_tokens:.0%} fewer)")
    print(f"forward GFLOPs/image: {hi.total / 1e9:.3f} @ {curr.stage2_global_res}, "
          f"{lo.total / 1e9:.3f} @ {curr.stage1_global_res}")
    print(f"schedule GFLOPs/image: baseline {total_base / 1e9:.1f} ({base.total_epochs} ep), "
          f"curriculum {total_curr / 1e9:.1f} ({curr.boundary}+"
          f"{curr.total_epochs - curr.boundary} ep), ratio {total_base / total_curr:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        buf.write(_header_lines(_header(cfg, preset=args.preset or "config")))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "resolution", "patch_tokens", "flops"])
        w.writerows(rows)
        w.writerow(["schedule_baseline", curr.stage2_global_res, "", total_base])
        w.writerow(["schedule_curriculum", "", "", total_curr])
        (out / "flops.csv").write_text(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freqvit", description=__doc__.splitlines()[0],
                                allow_abbrev=False)
    p.add_argument("--version", action="version", version=f"freqvit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for data pipelines (default: $FREQVIT_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, data=True, ckpt=False, out_required=False):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key = value config file (desk defaults if omitted)")
        sp.add_argument("--out", required=out_required, help="output directory")
        if data:
            sp.add_argument("--data", required=True, help="dataset root (class folders or train/ val/)")
        if ckpt:
            sp.add_argument("--checkpoint", required=True, help="checkpoint directory from pretrain")
        sp.set_defaults(func=fn)
        return sp

    g = add("gen-data", cmd_gen_data, "write the synthetic dataset", data=False, out_required=True)
    g.add_argument("--split", choices=("train", "val", "both"), default="both")
    pt = add("pretrain", cmd_pretrain, "self-distillation pretraining", out_required=True)
    pt.add_argument("--baseline", action="store_true",
                    help="single full-resolution stage without noise patching")
    add("probe", cmd_probe, "fit and score a linear probe on frozen features", ckpt=True,
        out_required=True)
    ec = add("eval-c", cmd_eval_c, "corruption benchmark", ckpt=True, out_required=True)
    ec.add_argument("--catalog", help="catalog CSV (default: all kinds x 5 severities)")
    ec.add_argument("--probe", help="directory written by the probe command")
    ec.add_argument("--split", choices=("train", "val"), default="val")
    hm = add("heatmap", cmd_heatmap, "Fourier sensitivity heatmap", ckpt=True, out_required=True)
    hm.add_argument("--v", type=float, default=None, help="perturbation L2 norm")
    hm.add_argument("--probe", help="directory written by the probe command")
    hm.add_argument("--split", choices=("train", "val"), default="val")
    fl = add("flops", cmd_flops, "FLOPs per forward pass and per schedule", data=False)
    fl.add_argument("--preset", choices=sorted(PRESETS), help="full-size encoder preset")
    fl.add_argument("--epochs", type=int, help="curriculum run length")
    fl.add_argument("--baseline-epochs", type=int, help="baseline run length")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        resolve_threads(args.threads)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
