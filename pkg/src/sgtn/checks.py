"""Gradient-check catalogue shared by the ``gradcheck`` command and the test suite.

Each entry builds a tiny 64-bit problem and returns the worst relative error
between the backward pass and central differences. Inputs are drawn away from
kinks (``|x| > 0.1`` for abs / relu, no ties for max / min) so that the finite
difference itself is well defined.
"""
from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp

from . import attention as A
from . import heads as H
from .encoder import EncoderConfig, LSwinBlock, LSwinEncoder
from .model import cross_entropy
from .numerics import functional as F
from .numerics import ops
from .numerics.gradcheck import finite_diff_gradcheck, gradcheck_parameters
from .numerics.losses import dice_loss, smooth_l1, weighted_bce
from .numerics.nn import BatchNorm, seeded_rng
from .numerics.tensor import Tensor, precision
from .records import InstanceRecord
from .sgm import ShapeGuidanceModule, derive_shape_targets, sgm_loss

__all__ = ["GRADCHECK_TOL", "gradcheck_cases", "run_gradchecks"]

GRADCHECK_TOL = 1e-5


def _away(rng, shape, lo=0.1, hi=1.0):
    return rng.uniform(lo, hi, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _input(f, x):
    return finite_diff_gradcheck(f, x).max_rel_err


def _params(f, module, x=None, per_param=3, seed=0):
    module.astype(np.float64)
    errs = gradcheck_parameters(f, module.parameters(), max_per_param=per_param,
                                rng=np.random.default_rng(seed))
    worst = max(r.max_rel_err for r in errs.values())
    if x is not None:
        worst = max(worst, x)
    return worst


# -- elementwise and structural ops ------------------------------------------

def _op_cases():
    r = np.random.default_rng(1)
    x = r.normal(size=(3, 4))
    pos = r.uniform(0.5, 2.0, size=(3, 4))
    away = _away(r, (3, 4))
    w = r.normal(size=(3, 4))
    p32, p233, p62, p47 = (r.normal(size=s) for s in ((3, 2), (2, 3, 3), (6, 2), (4, 7)))
    sparse = sp.random(5, 3, density=0.6, random_state=2, format="csr")
    return {
        "add": lambda: _input(lambda t: ops.add(t, Tensor(w)).sum() * (t * t).sum(), x),
        "sub": lambda: _input(lambda t: (ops.sub(Tensor(w), t) * t).sum(), x),
        "mul": lambda: _input(lambda t: (ops.mul(t, t[:1]) * Tensor(w)).sum(), x),
        "div": lambda: _input(lambda t: ops.div(Tensor(w), t).sum(), pos),
        "power": lambda: _input(lambda t: (ops.power(t, 1.7) * Tensor(w)).sum(), pos),
        "matmul": lambda: _input(lambda t: (ops.matmul(t, t.transpose(1, 0)) @ Tensor(p32)).sum(), x),
        "batched_matmul": lambda: _input(
            lambda t: (ops.matmul(t.reshape(2, 3, 2), t.reshape(2, 2, 3)) * Tensor(p233)).sum(), x),
        "sparse_matmul": lambda: _input(
            lambda t: (ops.sparse_matmul(sparse, t)
                       * Tensor(np.arange(20.0).reshape(5, 4))).sum(), x),
        "exp": lambda: _input(lambda t: (ops.exp(t) * Tensor(w)).sum(), x),
        "log": lambda: _input(lambda t: (ops.log(t) * Tensor(w)).sum(), pos),
        "sqrt": lambda: _input(lambda t: (ops.sqrt(t) * Tensor(w)).sum(), pos),
        "tanh": lambda: _input(lambda t: (ops.tanh(t) * Tensor(w)).sum(), x),
        "atan": lambda: _input(lambda t: (ops.atan(t) * Tensor(w)).sum(), x),
        "abs": lambda: _input(lambda t: (ops.abs(t) * Tensor(w)).sum(), away),
        "relu": lambda: _input(lambda t: (ops.relu(t) * Tensor(w)).sum(), away),
        "gelu": lambda: _input(lambda t: (ops.gelu(t) * Tensor(w)).sum(), x),
        "sigmoid": lambda: _input(lambda t: (ops.sigmoid(t) * Tensor(w)).sum(), x),
        "clip": lambda: _input(lambda t: (ops.clip(t, -5.0, 5.0) * Tensor(w)).sum(), x),
        "maximum": lambda: _input(lambda t: (ops.maximum(t, Tensor(w + 0.05)) * t).sum(), x),
        "minimum": lambda: _input(lambda t: (ops.minimum(t, Tensor(w + 0.05)) * t).sum(), x),
        "where": lambda: _input(lambda t: (ops.where(w > 0, t * t, t * 3.0)).sum(), x),
        "softmax": lambda: _input(lambda t: (ops.softmax_lastdim(t) * Tensor(w)).sum(), x),
        "sum_axis": lambda: _input(lambda t: (ops.sum(t, axis=0) ** 2).sum(), x),
        "mean_keepdims": lambda: _input(lambda t: ((t - ops.mean(t, axis=1, keepdims=True)) ** 2).sum(), x),
        "reshape_transpose": lambda: _input(
            lambda t: (t.reshape(2, 6).transpose(1, 0) * Tensor(p62)).sum(), x),
        "getitem": lambda: _input(lambda t: (t[np.array([0, 0, 2]), 1:3] ** 2).sum(), x),
        "concat_stack": lambda: _input(
            lambda t: (ops.stack([ops.concat([t, t * 2.0], axis=1), ops.concat([t * t, t], axis=1)]) ** 2).sum(), x),
        "pad": lambda: _input(lambda t: (ops.pad(t, ((1, 0), (2, 1))) * Tensor(p47)).sum(), x),
        "roll": lambda: _input(lambda t: (ops.roll(t, (1, -1), (0, 1)) * Tensor(w)).sum(), x),
        "take": lambda: _input(lambda t: (ops.take(t, np.array([2, 0, 2]), axis=0) ** 2).sum(), x),
    }


# -- layers and losses ---------------------------------------------------------

def _layer_cases():
    r = np.random.default_rng(2)
    img = r.normal(size=(2, 6, 5, 3))
    g = r.normal(size=(2, 6, 5, 4))
    k3 = Tensor(r.normal(size=(4, 3, 3, 3)) * 0.3)
    k_dc = Tensor(r.normal(size=(3, 2, 2, 2)))
    probs = r.uniform(0.05, 0.95, size=(3, 5))
    tgt = (r.uniform(size=(3, 5)) > 0.5).astype(float)
    wts = r.uniform(0.5, 4.0, size=(3, 5))
    probe = r.normal(size=img.shape)
    w_lin = Tensor(r.normal(size=(3, 4)))
    probe_dc = r.normal(size=(2, 12, 10, 2))

    def bn(t):
        layer = BatchNorm(3).astype(np.float64)
        return (layer(t) * Tensor(probe)).sum()

    def focal(t):
        gt = np.zeros((4, 4, 2))
        gt[1, 2, 0] = 1.0
        gt[2, 2, 0] = 0.6
        gt[0, 1, 1] = 0.3
        return H._focal(ops.sigmoid(t), gt)

    boxes_gt = np.array([[2.0, 3.0, 10.0, 7.0], [5.0, 1.0, 4.0, 9.0]])
    return {
        "linear": lambda: _input(lambda t: (F.linear(t, w_lin, Tensor(np.ones(4))) * Tensor(g)).sum(), img),
        "layer_norm": lambda: _input(lambda t: (F.layer_norm(t, Tensor(np.full(3, 1.3)), Tensor(np.full(3, 0.2))) * Tensor(img[..., ::-1])).sum(), img),
        "instance_norm_column": lambda: _input(lambda t: (F.axial_instance_norm(t, "column") * Tensor(img ** 2)).sum(), img),
        "instance_norm_row": lambda: _input(lambda t: (F.axial_instance_norm(t, "row") * Tensor(img ** 2)).sum(), img),
        "batch_norm_train": lambda: _input(bn, img),
        "conv2d": lambda: _input(lambda t: (F.conv2d(t, k3) * Tensor(g)).sum(), img),
        "conv2d_stride2": lambda: _input(lambda t: (F.conv2d(t, k3, stride=2) ** 2).sum(), img),
        "conv2d_dilated": lambda: _input(lambda t: (F.conv2d(t, k3, dilation=2) * Tensor(g)).sum(), img),
        "conv2d_kernel": lambda: _input(lambda k: (F.conv2d(Tensor(img), k) * Tensor(g)).sum(), k3.data),
        "deconv2d_s2": lambda: _input(lambda t: (F.deconv2d_s2(t, k_dc) * Tensor(probe_dc)).sum(), img),
        "weighted_bce": lambda: _input(lambda t: weighted_bce(t, tgt, wts).total, probs),
        "dice": lambda: _input(lambda t: dice_loss(t, tgt).total, probs),
        "smooth_l1": lambda: _input(lambda t: smooth_l1(t, np.zeros((3, 5))).sum(), _away(r, (3, 5), 0.1, 0.9) * 2.2),
        "cross_entropy": lambda: _input(lambda t: cross_entropy(t, np.array([0, 3, 1])), r.normal(size=(3, 4))),
        "focal": lambda: _input(focal, r.normal(size=(4, 4, 2))),
        "ciou": lambda: _input(lambda t: H.ciou_loss(t, boxes_gt, detach_alpha=False).mean(),
                               np.array([[3.0, 2.5, 8.0, 8.0], [4.0, 2.0, 6.0, 6.0]])),
        "roi_align": lambda: _input(
            lambda t: (H.roi_align(t, np.array([[3.0, 2.0, 12.0, 9.0]]), 3, np.array([1])) ** 2).sum(), img),
    }


# -- composite paths -----------------------------------------------------------

def _composite_cases():
    def attention_case(kind):
        def run():
            rng = seeded_rng(3)
            x = rng.normal(size=(1, 6, 6, 8))
            if kind == "axial":
                params = A.AxialAttention(rng, 8, 2)
                cfgs = [A.AttentionConfig(8, 2, axis="row"), A.AttentionConfig(8, 2, axis="column")]
                fn = lambda t: sum(((A.axial_msa(t, c, params) ** 2).sum() for c in cfgs), Tensor(0.0))
            else:
                params = A.WindowAttention(rng, 8, 2, 4)
                params.rel_bias.data[...] = rng.normal(size=params.rel_bias.shape)
                cfg = A.AttentionConfig(8, 2, window=4, shift=2 if kind == "swmsa" else 0)
                op = A.swmsa if kind == "swmsa" else A.wmsa
                fn = lambda t: (op(t, cfg, params) ** 2).sum()
            params.astype(np.float64)
            x_err = _input(fn, x)
            return _params(lambda: fn(Tensor(x)), params, x_err)
        return run

    def lswin_block():
        rng = seeded_rng(4)
        block = LSwinBlock(rng, 8, 2, 4).astype(np.float64)
        block.gate.alpha.data[...] = 0.7
        block.gate.beta.data[...] = 0.4
        x = rng.normal(size=(1, 8, 8, 8))
        probe = rng.normal(size=(1, 8, 8, 8))
        fn = lambda t: (block(t) * Tensor(probe)).sum()
        x_err = finite_diff_gradcheck(fn, x, indices=rng.choice(x.size, 24, replace=False)).max_rel_err
        return _params(lambda: fn(Tensor(x)), block, x_err, per_param=2)

    def sgm_path():
        rng = seeded_rng(5)
        mod = ShapeGuidanceModule(rng, 6, 4, 8).astype(np.float64)
        m = np.zeros((32, 32), dtype=bool)
        m[6:20, 8:26] = True
        targets = derive_shape_targets([InstanceRecord.from_mask(1, m)], 32, 32)
        enc = rng.normal(size=(2, 8, 8, 6))
        det = rng.normal(size=(2, 8, 8, 4))
        fn = lambda t: sgm_loss(mod(t, Tensor(det)), [targets, targets]).total
        x_err = finite_diff_gradcheck(fn, enc, indices=rng.choice(enc.size, 24, replace=False)).max_rel_err
        return _params(lambda: fn(Tensor(enc)), mod, x_err, per_param=2)

    def mask_path():
        rng = seeded_rng(6)
        head = H.MaskHead(rng, 4, 3, 6).astype(np.float64)
        head.up_bias.data[...] = 0.05  # zero bias puts all-zero inputs exactly on the ReLU kink
        roi = rng.normal(size=(2, 14, 14, 4))
        targets = (rng.uniform(size=(2, 28, 28)) > 0.5).astype(float)
        fn = lambda t: H.mask_losses(head(t), np.array([2, 3]), targets).total
        x_err = finite_diff_gradcheck(fn, roi, indices=rng.choice(roi.size, 24, replace=False)).max_rel_err
        return _params(lambda: fn(Tensor(roi)), head, x_err, per_param=2)

    def encoder_path():
        rng = seeded_rng(7)
        enc = LSwinEncoder(rng, EncoderConfig(8, (1, 1, 1, 1), (1, 2, 2, 4), window=2)).astype(np.float64)
        for gate in enc.gates():
            gate.alpha.data[...] = 0.7
            gate.beta.data[...] = 0.4
        x = rng.normal(size=(1, 32, 32, 3))
        probe = rng.normal(size=(1, 8, 8, 8))
        fn = lambda t: (enc(t)[0] * Tensor(probe)).sum()
        x_err = finite_diff_gradcheck(fn, x, indices=rng.choice(x.size, 16, replace=False)).max_rel_err
        return _params(lambda: fn(Tensor(x)), enc, x_err, per_param=1)

    def box_path():
        rng = seeded_rng(8)
        head = H.BoxHead(rng, 4, 3, width=16).astype(np.float64)
        feat = rng.normal(size=(8, 8, 4))
        props = np.array([[2.0, 3.0, 14.0, 10.0], [9.0, 6.0, 12.0, 18.0]])
        gt = np.array([[3.0, 2.0, 13.0, 12.0], [8.0, 7.0, 14.0, 16.0]])

        def fn(t):
            cls, reg = head(H.roi_align(t, props, H.BOX_ROI))
            return cross_entropy(cls, np.array([1, 3])) + H.box_losses(reg, props, gt, detach_alpha=False).total
        x_err = finite_diff_gradcheck(fn, feat, indices=rng.choice(feat.size, 24, replace=False)).max_rel_err
        return _params(lambda: fn(Tensor(feat)), head, x_err, per_param=2)

    return {
        "wmsa": attention_case("wmsa"),
        "swmsa": attention_case("swmsa"),
        "axial_msa": attention_case("axial"),
        "lswin_block": lswin_block,
        "sgm_forward+sgm_loss": sgm_path,
        "mask_head+mask_losses": mask_path,
        "box_head+box_losses": box_path,
        "encoder_tiny": encoder_path,
    }


def gradcheck_cases() -> dict:
    """Name -> zero-argument callable returning the worst relative error."""
    cases = {}
    cases.update({f"op.{k}": v for k, v in _op_cases().items()})
    cases.update({f"layer.{k}": v for k, v in _layer_cases().items()})
    cases.update({f"path.{k}": v for k, v in _composite_cases().items()})
    return cases


def run_gradchecks(names=None, tol: float = GRADCHECK_TOL) -> list:
    """Run the catalogue; rows of ``(name, max_rel_err, passed, seconds)``."""
    cases = gradcheck_cases()
    rows = []
    for name in names or cases:
        start = time.perf_counter()
        with precision(np.float64):
            err = cases[name]()
        rows.append((name, err, err <= tol, time.perf_counter() - start))
    return rows
