"""
Windows, shifted windows and axial strips
=========================================

Which tokens can see which. The shifted partition is built with a cyclic
roll plus an additive mask; here we recover the visibility pattern directly
from the attention weights and count multiply-adds for the three schemes.
"""

import numpy as np

from sgtn import attention as A
from sgtn.cli import bench_attention
from sgtn.numerics import Tensor, no_grad, seeded_rng

# %%
# A 4-channel 8x8 map, window 4, shift 2.
rng = seeded_rng(0)
dim, heads, window, shift = 4, 1, 4, 2
x = rng.normal(size=(8, 8, dim)).astype(np.float32)
params = A.WindowAttention(rng, dim, heads, window)


def reach(fn, cfg, probe=(0, 0)):
    """Positions whose output moves when the probe token is perturbed."""
    with no_grad():
        base = fn(Tensor(x), cfg, params).data
        bumped = x.copy()
        bumped[probe] += 1.0
        moved = np.abs(fn(Tensor(bumped), cfg, params).data - base).max(axis=-1) > 1e-6
    return moved.astype(int)


print("plain windows, token (0,0) influences:\n", reach(A.wmsa, A.AttentionConfig(dim, heads, window=window)))
print("shifted windows, token (0,0) influences:\n",
      reach(A.swmsa, A.AttentionConfig(dim, heads, window=window, shift=shift)))
print("shifted windows, token (3,3) influences:\n",
      reach(A.swmsa, A.AttentionConfig(dim, heads, window=window, shift=shift), probe=(3, 3)))

# %%
# Score and apply multiply-adds. Dense attention grows as n^4, the row and
# column pair as n^3, so their ratio falls off like 2/n.
print(f"{'n':>4}{'dense':>14}{'window':>12}{'axial':>12}{'axial/dense':>13}")
for n in (8, 16, 32):
    r = bench_attention(n, 24, 8, 1, repeats=1)
    print(f"{n:>4}{r['dense_flops']:>14}{r['window_flops']:>12}{r['axial_flops']:>12}"
          f"{r['axial_flops'] / r['dense_flops']:>13.4f}")
