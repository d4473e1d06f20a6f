"""
Overfitting the desk-scale model
================================

Sixteen scenes, the tiny preset, a few hundred Adam steps. Good enough to
watch every loss term fall and the training-set mask AP climb. Pass a step
count on the command line to go longer (2000 reaches AP50 = 1 here).
"""

import sys
import time

from sgtn.eval_metrics import format_report
from sgtn.model import SGTN, ModelConfig
from sgtn.synthdata import CATEGORIES, generate_dataset
from sgtn.train import LOSS_COLUMNS, Trainer, TrainConfig, evaluate_model

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 500
scenes = generate_dataset(0, 16)
images = [s.image for s in scenes]
instances = [s.instances for s in scenes]

model = SGTN(ModelConfig(), seed=0)
print(f"{sum(p.data.size for p in model.parameters()):,} parameters")
trainer = Trainer(model, images, instances, TrainConfig(steps=steps, log_every=0))

start = time.perf_counter()
every = max(steps // 5, 1)
for done in range(0, steps, every):
    rows = trainer.run(min(every, steps - done))
    last = rows[-1]
    terms = "  ".join(f"{k.split('.')[1]}={last[k]:.3f}" for k in LOSS_COLUMNS)
    print(f"step {last['step']:>5}  total={last['total']:.3f}  {terms}")
print(f"trained in {time.perf_counter() - start:.0f}s")

report, preds = evaluate_model(model, images, instances)
print(format_report(report, CATEGORIES))
