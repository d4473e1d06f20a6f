"""Adam with cosine decay and the training / evaluation loops."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .eval_metrics import coco_ap_suite
from .heads import cbgm_targets
from .model import SGTN, prepare_image
from .sgm import derive_shape_targets

__all__ = ["Adam", "TrainConfig", "Trainer", "predict_dataset", "evaluate_model", "LOSS_COLUMNS"]

log = logging.getLogger(__name__)

LOSS_COLUMNS = (
    "cbgm.focal", "cbgm.size", "cbgm.offset", "sgm.fg", "sgm.edge", "sgm.corner",
    "box.cls", "box.smooth_l1", "box.ciou", "mask.bce", "mask.dice",
)


class Adam:
    """Adam (beta1 0.9, beta2 0.999, eps 1e-8) with cosine learning-rate decay to zero."""

    def __init__(self, params, lr: float = 1e-3, steps: int = 1, betas=(0.9, 0.999), eps: float = 1e-8,
                 warmup: int = 0):
        self.params = [p for p in params if p.trainable]
        self.lr, self.steps, self.warmup = lr, max(int(steps), 1), warmup
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self) -> float:
        if self.warmup and self.t < self.warmup:
            return self.lr * (self.t + 1) / self.warmup
        frac = min(self.t / self.steps, 1.0)
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * frac))

    def step(self) -> None:
        lr = self.current_lr()
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 2
    lr: float = 1e-3
    seed: int = 0
    warmup: int = 50
    log_every: int = 100


class Trainer:
    """Cycles through a fixed set of scenes in seeded random order."""

    def __init__(self, model: SGTN, images, instances, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.images = [prepare_image(im) for im in images]
        self.instances = list(instances)
        hh, ww = self.images[0].shape[:2]
        nc = model.cfg.num_classes
        self.center_targets = [cbgm_targets(inst, hh // 4, ww // 4, nc) for inst in self.instances]
        self.shape_targets = [derive_shape_targets(inst, hh, ww) for inst in self.instances]
        self.opt = Adam(model.parameters(), lr=cfg.lr, steps=cfg.steps, warmup=cfg.warmup)
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self._queue = []
        self.history = []

    def _next_batch(self):
        idx = []
        while len(idx) < self.cfg.batch:
            if not self._queue:
                self._queue = list(self.rng.permutation(len(self.images)))
            idx.append(self._queue.pop())
        return idx

    def step(self) -> dict:
        idx = self._next_batch()
        images = np.stack([self.images[i] for i in idx])
        self.model.train()
        self.opt.zero_grad()
        loss = self.model.losses(
            images,
            [self.instances[i] for i in idx],
            shape_targets=[self.shape_targets[i] for i in idx],
            center_targets=[self.center_targets[i] for i in idx],
        )
        loss.backward()
        self.opt.step()
        row = {"step": len(self.history), "total": loss.scalar}
        row.update({k: loss.terms.get(k, 0.0) for k in LOSS_COLUMNS})
        self.history.append(row)
        return row

    def run(self, steps: int | None = None, loss_log=None) -> list:
        steps = self.cfg.steps if steps is None else steps
        writer = None
        if loss_log is not None:
            fh = open(loss_log, "w", newline="", encoding="utf-8")
            writer = csv.writer(fh)
            writer.writerow(("step", "total") + LOSS_COLUMNS)
        try:
            for _ in range(steps):
                row = self.step()
                if writer is not None:
                    writer.writerow([row["step"], repr(row["total"])] + [repr(row[k]) for k in LOSS_COLUMNS])
                if self.cfg.log_every and row["step"] % self.cfg.log_every == 0:
                    log.info("step %d loss %.4f", row["step"], row["total"])
        finally:
            if writer is not None:
                fh.close()
        return self.history


def predict_dataset(model: SGTN, images) -> list:
    return [model.predict(prepare_image(im)) for im in images]


def evaluate_model(model: SGTN, images, instances, categories=None):
    preds = predict_dataset(model, images)
    return coco_ap_suite(preds, instances, categories), preds
