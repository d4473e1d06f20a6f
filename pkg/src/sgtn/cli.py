"""Command-line entry points.

    python -m sgtn <command> [--config run.ini] [--key value ...]

Commands: ``gen-data``, ``train``, ``eval``, ``infer``, ``gradcheck``,
``bench-attn``. Every ``RunConfig`` key is accepted as ``--key value`` (dashes
or underscores) and overrides the INI file.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ConfigError, RunConfig, load_config, read_ini
from .numerics.tensor import NumericalError, no_grad
from .synthdata.dataset_io import DatasetError

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_NUMERIC"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("gen-data", "train", "eval", "infer", "gradcheck", "bench-attn")
MODEL_KEYS = ("preset", "variant", "sgm_enabled")
RUN_INI = "run.ini"
ALIASES = {"n": "bench_sizes"}  # ``bench-attn --n 32`` reads naturally

log = logging.getLogger("sgtn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgtn", description="Shape-guided instance segmentation toolkit.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="INI file of key = value pairs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _split_overrides(rest: list) -> dict:
    keys = set(RunConfig.keys())
    out = {}
    it = iter(rest)
    for tok in it:
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        name = key.replace("-", "_")
        name = ALIASES.get(name, name)
        if name not in keys:
            raise UsageError(f"unknown option --{key}")
        if not eq:
            try:
                value = next(it)
            except StopIteration:
                raise UsageError(f"option --{key} needs a value") from None
        out[name] = value
    return out


# ---------------------------------------------------------------------------
# commands

def _scene_kwargs(cfg: RunConfig) -> dict:
    return {
        "extent": (cfg.extent, cfg.extent),
        "n_instances": (cfg.min_instances, cfg.max_instances),
        "overlap_max": cfg.overlap_max,
    }


def cmd_gen_data(cfg: RunConfig) -> int:
    from .synthdata import generate_dataset, write_dataset

    scenes = generate_dataset(cfg.seed, cfg.count, **_scene_kwargs(cfg))
    root = write_dataset(cfg.data, scenes)
    short = sum(s.warning for s in scenes)
    print(f"wrote {len(scenes)} scenes to {root}" + (f" ({short} under-filled)" if short else ""))
    return EXIT_OK


def _load_dataset(cfg: RunConfig):
    from .synthdata import read_dataset

    ds = read_dataset(cfg.data)
    for w in ds.warnings:
        log.warning("%s", w)
    if not len(ds):
        raise DatasetError(f"{cfg.data}: dataset has no images")
    return ds


def _model(cfg: RunConfig, load: bool):
    from .model import SGTN
    from .serialize import load_model

    model = SGTN(cfg.model_config(), seed=cfg.seed)
    if load:
        path = cfg.checkpoint_path()
        if not path.is_file():
            raise DatasetError(f"checkpoint {path} not found")
        try:
            load_model(path, model)
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"checkpoint {path}: {exc}") from None
    return model


def cmd_train(cfg: RunConfig) -> int:
    from .serialize import save_model
    from .train import Trainer, TrainConfig

    ds = _load_dataset(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model = _model(cfg, load=False)
    trainer = Trainer(model, ds.images, ds.instances,
                      TrainConfig(steps=cfg.steps, batch=cfg.batch, lr=cfg.lr, seed=cfg.seed, warmup=cfg.warmup))
    start = time.perf_counter()
    trainer.run(loss_log=out / "loss_log.csv")
    save_model(cfg.checkpoint_path(), model)
    (out / RUN_INI).write_text(cfg.to_ini(), encoding="utf-8")
    final = trainer.history[-1]["total"] if trainer.history else float("nan")
    print(f"trained {cfg.steps} steps in {time.perf_counter() - start:.1f}s; final loss {final:.4f}; "
          f"checkpoint {cfg.checkpoint_path()}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    from .eval_metrics import coco_ap_suite, format_report, write_report
    from .predictions import read_predictions
    from .train import predict_dataset

    ds = _load_dataset(cfg)
    pred_dir = Path(cfg.predictions) if cfg.predictions else None
    if pred_dir is not None:
        if not pred_dir.is_dir():
            raise DatasetError(f"predictions directory {pred_dir} not found")
        try:
            preds = read_predictions(pred_dir, ds.ids)
        except (ValueError, KeyError) as exc:
            raise DatasetError(str(exc)) from None
    else:
        preds = predict_dataset(_model(cfg, load=True), ds.images)
    report = coco_ap_suite(preds, ds.instances, sorted(ds.categories))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "eval.json", out / "eval.txt", ds.categories)
    sys.stdout.write(format_report(report, ds.categories))
    return EXIT_OK


def overlay(image: np.ndarray, instances) -> np.ndarray:
    """Tint each predicted mask and draw its box outline."""
    from .synthdata.scenes import CATEGORIES

    palette = np.array([[230, 60, 60], [60, 200, 80], [70, 110, 240], [240, 200, 40]], dtype=np.float64)
    out = image.astype(np.float64).copy()
    h, w = out.shape[:2]
    for rec in instances:
        color = palette[(rec.category - 1) % len(palette)] if rec.category in CATEGORIES else palette[-1]
        out[rec.mask] = 0.5 * out[rec.mask] + 0.5 * color
        x, y, bw, bh = (int(round(v)) for v in rec.bbox)
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + bw - 1, w - 1), min(y + bh - 1, h - 1)
        if x1 < x0 or y1 < y0:
            continue
        out[y0, x0:x1 + 1] = color
        out[y1, x0:x1 + 1] = color
        out[y0:y1 + 1, x0] = color
        out[y0:y1 + 1, x1] = color
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def cmd_infer(cfg: RunConfig) -> int:
    from .predictions import write_predictions
    from .synthdata.dataset_io import write_ppm
    from .train import predict_dataset

    ds = _load_dataset(cfg)
    preds = predict_dataset(_model(cfg, load=True), ds.images)
    pred_dir = cfg.predictions_path()
    write_predictions(pred_dir, ds.ids, preds)
    ov_dir = Path(cfg.out) / "overlays"
    ov_dir.mkdir(parents=True, exist_ok=True)
    for image_id, image, p in zip(ds.ids, ds.images, preds):
        write_ppm(ov_dir / f"{int(image_id):06d}.ppm", overlay(image, p))
    print(f"{sum(map(len, preds))} instances over {len(preds)} images; predictions in {pred_dir}, overlays in {ov_dir}")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig) -> int:
    from .checks import run_gradchecks

    rows = run_gradchecks(tol=cfg.gradcheck_tol)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "gradcheck.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("name", "max_rel_err", "passed", "seconds"))
        for name, err, ok, sec in rows:
            writer.writerow((name, f"{err:.3e}", int(ok), f"{sec:.3f}"))
    width = max(len(r[0]) for r in rows)
    for name, err, ok, _ in rows:
        print(f"{name:<{width}}  {err:.2e}  {'ok' if ok else 'FAIL'}")
    failed = [r[0] for r in rows if not r[2]]
    if failed:
        print(f"{len(failed)} gradient check(s) exceed {cfg.gradcheck_tol:g}: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"all {len(rows)} gradient checks within {cfg.gradcheck_tol:g}")
    return EXIT_OK


def bench_attention(n: int, dim: int, window: int, heads: int, repeats: int = 3, seed: int = 0) -> dict:
    """Multiply-add counts of dense, windowed and axial attention on an ``n x n`` map.

    Each ``*_flops`` value is the measured score + apply multiply-add tally;
    ``measured_ns`` is the best-of-``repeats`` wall time of the axial pair.
    """
    from . import attention as A
    from .numerics.nn import seeded_rng

    rng = seeded_rng(seed)
    x = rng.normal(size=(1, n, n, dim)).astype(np.float32)
    mha = A.MultiHeadAttention(rng, dim, heads)
    win = A.WindowAttention(rng, dim, heads, window)
    dense_cfg = A.AttentionConfig(dim, heads)
    win_cfg = A.AttentionConfig(dim, heads, window=window)
    axial_cfgs = [A.AttentionConfig(dim, heads, axis="column"), A.AttentionConfig(dim, heads, axis="row")]
    row = {"n": n}
    with no_grad():
        with A.count_macs() as t:
            A.multi_head_qkv_attention(x.reshape(1, n * n, dim), dense_cfg, mha)
        row["dense_flops"] = t["score"] + t["apply"]
        with A.count_macs() as t:
            A.wmsa(x, win_cfg, win)
        row["window_flops"] = t["score"] + t["apply"]
        with A.count_macs() as t:
            for c in axial_cfgs:
                A.axial_msa(x, c, mha)
        row["axial_flops"] = t["score"] + t["apply"]
        best = None
        for _ in range(repeats):
            start = time.perf_counter_ns()
            for c in axial_cfgs:
                A.axial_msa(x, c, mha)
            elapsed = time.perf_counter_ns() - start
            best = elapsed if best is None else min(best, elapsed)
        row["measured_ns"] = best
    return row


def cmd_bench_attn(cfg: RunConfig) -> int:
    rows = [bench_attention(n, cfg.bench_dim, cfg.bench_window, cfg.bench_heads, cfg.bench_repeats, cfg.seed)
            for n in cfg.bench_size_list()]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ("n", "dense_flops", "window_flops", "axial_flops", "measured_ns")
    with open(out / "bench_attn.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)
    print(",".join(cols))
    for r in rows:
        print(",".join(str(r[c]) for c in cols) + f"   axial/dense {r['axial_flops'] / r['dense_flops']:.4f}")
    return EXIT_OK


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "gradcheck": cmd_gradcheck,
    "bench-attn": cmd_bench_attn,
}


# ---------------------------------------------------------------------------

def _resolve_config(args, overrides: dict) -> RunConfig:
    cfg = load_config(args.config, overrides)
    if args.command in ("eval", "infer"):
        # architecture keys default to what the checkpoint was trained with
        saved = cfg.checkpoint_path().parent / RUN_INI
        explicit = set(overrides)
        if args.config:
            explicit |= {k.replace("-", "_") for k in read_ini(args.config)}
        if saved.is_file():
            inherited = {k: v for k, v in read_ini(saved).items() if k in MODEL_KEYS and k not in explicit}
            cfg = cfg.updated(inherited, str(saved))
    return cfg


def _thread_limit():
    raw = os.environ.get("SGTN_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"SGTN_THREADS must be a positive integer, got {raw!r}") from None
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
        overrides = _split_overrides(rest)
        cfg = _resolve_config(args, overrides)
        limiter = _thread_limit()
    except (UsageError, ConfigError) as exc:
        print(f"sgtn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with limiter:
            return HANDLERS[args.command](cfg)
    except NumericalError as exc:
        print(f"sgtn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, FileNotFoundError) as exc:
        print(f"sgtn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"sgtn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
