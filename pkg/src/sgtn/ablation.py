"""Variant comparison on one synthetic training set: encoder variant and the shape branch."""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass

from .encoder import DESK, EncoderConfig
from .model import SGTN, ModelConfig
from .synthdata import generate_dataset
from .train import Trainer, TrainConfig, evaluate_model

__all__ = ["ARMS", "AblationRow", "run_ablation", "medians", "format_table"]

log = logging.getLogger(__name__)

# (label, encoder variant, shape guidance on)
ARMS = (
    ("lswin+sgm", "lswin", True),
    ("lswin-sgm", "lswin", False),
    ("lrc+sgm", "lrc_only", True),
)


@dataclass(frozen=True)
class AblationRow:
    arm: str
    seed: int
    AP: float
    AP50: float
    AP75: float
    seconds: float


def run_ablation(seeds=(0, 1, 2), count: int = 64, steps: int = 300, data_seed: int = 0,
                 arms=ARMS, encoder: EncoderConfig = DESK, lr: float = 1e-3) -> list:
    """Train every arm once per seed on the same scenes and score it on those scenes."""
    scenes = generate_dataset(data_seed, count)
    images = [s.image for s in scenes]
    instances = [s.instances for s in scenes]
    rows = []
    for seed in seeds:
        for label, variant, sgm in arms:
            start = time.perf_counter()
            model = SGTN(ModelConfig(encoder=encoder.with_variant(variant), sgm_enabled=sgm), seed=seed)
            Trainer(model, images, instances, TrainConfig(steps=steps, lr=lr, seed=seed, log_every=0)).run()
            report, _ = evaluate_model(model, images, instances)
            rows.append(AblationRow(label, seed, report.AP, report.AP50, report.AP75,
                                    time.perf_counter() - start))
            log.info("%s seed %d: AP %.4f AP75 %.4f", label, seed, report.AP, report.AP75)
    return rows


def medians(rows) -> dict:
    """``{arm: {"AP": median, "AP50": ..., "AP75": ...}}``."""
    out = {}
    for arm in dict.fromkeys(r.arm for r in rows):
        mine = [r for r in rows if r.arm == arm]
        out[arm] = {k: statistics.median(getattr(r, k) for r in mine) for k in ("AP", "AP50", "AP75")}
    return out


def format_table(rows) -> str:
    lines = [f"{'arm':<12}{'seed':>6}{'AP':>9}{'AP50':>9}{'AP75':>9}{'sec':>8}"]
    for r in rows:
        lines.append(f"{r.arm:<12}{r.seed:>6}{r.AP:>9.4f}{r.AP50:>9.4f}{r.AP75:>9.4f}{r.seconds:>8.1f}")
    for arm, m in medians(rows).items():
        lines.append(f"{arm:<12}{'med':>6}{m['AP']:>9.4f}{m['AP50']:>9.4f}{m['AP75']:>9.4f}")
    return "\n".join(lines) + "\n"
