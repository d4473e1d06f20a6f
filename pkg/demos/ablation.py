"""
Does the shape branch help, and does the window path earn its keep?
===================================================================

Three arms on the same 64 scenes: the full encoder with the shape branch,
the same encoder without it, and the axial-only encoder with the branch.
Each arm is trained once per seed and scored on its own training scenes.

The run is slow on one core (roughly nine minutes at 300 steps). Margins at
this scale are noisy; read the table, do not over-read it.
"""

import logging
import sys

from sgtn.ablation import format_table, medians, run_ablation

logging.basicConfig(level=logging.INFO, format="%(message)s")
steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300

rows = run_ablation(seeds=(0, 1, 2), count=64, steps=steps)
print(format_table(rows))

med = medians(rows)
print("shape branch helps AP75:", med["lswin+sgm"]["AP75"] >= med["lswin-sgm"]["AP75"])
print("gated encoder beats axial-only on AP:", med["lswin+sgm"]["AP"] >= med["lrc+sgm"]["AP"])
