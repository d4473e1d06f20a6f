"""Slow, loop-based reference implementations used only by the tests."""
import itertools
import math

import numpy as np


# -- attention --------------------------------------------------------------

def _project(x, params):
    w = params.qkv.weight.data.astype(np.float64)
    b = params.qkv.bias.data.astype(np.float64)
    return x @ w + b


def grouped_attention(x, params, heads, group_of, bias_of=None, scale=True):
    """Token-by-token attention of an ``(h, w, c)`` map inside groups.

    ``group_of(i, j)`` labels each position; a token attends to every token
    sharing its label. ``bias_of(head, (i, j), (k, l))`` adds to the logit.
    """
    h, w, c = x.shape
    d = c // heads
    qkv = _project(x.astype(np.float64), params)
    q, k, v = qkv[..., :c], qkv[..., c:2 * c], qkv[..., 2 * c:]
    coords = list(itertools.product(range(h), range(w)))
    labels = {p: group_of(*p) for p in coords}
    ctx = np.zeros((h, w, c))
    for p in coords:
        members = [r for r in coords if labels[r] == labels[p]]
        for hd in range(heads):
            sl = slice(hd * d, (hd + 1) * d)
            qv = q[p][sl] / (math.sqrt(d) if scale else 1.0)
            logits = np.array([qv @ k[r][sl] + (bias_of(hd, p, r) if bias_of else 0.0) for r in members])
            e = np.exp(logits - logits.max())
            wts = e / e.sum()
            ctx[p][sl] = sum(wt * v[r][sl] for wt, r in zip(wts, members))
    pw = params.proj.weight.data.astype(np.float64)
    pb = params.proj.bias.data.astype(np.float64)
    return ctx @ pw + pb


def window_oracle(x, params, heads, window, shift, scale=True):
    """Shifted-window attention without any cyclic roll.

    Along each axis positions ``[0, s)`` form one (partial) window and the rest
    are cut every ``window`` cells starting at ``s``. Extents are zero-padded up
    to a window multiple first and the result cropped, as the fast path does.
    """
    h, w, c = x.shape
    m, s = (min(h, w), 0) if min(h, w) <= window else (window, shift)
    ph, pw = (-h) % m, (-w) % m
    xp = np.pad(x.astype(np.float64), ((0, ph), (0, pw), (0, 0)))

    def seg(p):
        return 0 if p < s else 1 + (p - s) // m

    table = params.rel_bias.data.astype(np.float64)
    side = 2 * params.window - 1

    def bias(hd, p, r):
        dy, dx = p[0] - r[0], p[1] - r[1]
        return table[(dy + params.window - 1) * side + dx + params.window - 1, hd]

    out = grouped_attention(xp, params, heads, lambda i, j: (seg(i), seg(j)), bias, scale)
    return out[:h, :w]


def axial_oracle(x, params, heads, axis, scale=True):
    group = (lambda i, j: i) if axis == "row" else (lambda i, j: j)
    return grouped_attention(x, params, heads, group, None, scale)


# -- RoI Align ----------------------------------------------------------------

def bilinear_at(feat, y, x):
    """Bilinear sample of ``(h, w, c)`` at continuous pixel-centre coordinates, clamped."""
    h, w = feat.shape[:2]
    y = min(max(y, 0.0), h - 1.0)
    x = min(max(x, 0.0), w - 1.0)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    fy, fx = y - y0, x - x0
    return ((1 - fy) * (1 - fx) * feat[y0, x0] + (1 - fy) * fx * feat[y0, x1]
            + fy * (1 - fx) * feat[y1, x0] + fy * fx * feat[y1, x1])


def roi_align_loop(feat, box, out, stride=4.0, sampling=2):
    """Average of ``sampling x sampling`` bilinear samples per bin; ``box`` is image-space xywh."""
    x0, y0, bw, bh = (v / stride for v in box)
    res = np.zeros((out, out, feat.shape[-1]))
    for i in range(out):
        for j in range(out):
            acc = 0.0
            for a in range(sampling):
                for b in range(sampling):
                    yy = y0 + (i + (a + 0.5) / sampling) * bh / out - 0.5
                    xx = x0 + (j + (b + 0.5) / sampling) * bw / out - 0.5
                    acc = acc + bilinear_at(feat, yy, xx)
            res[i, j] = acc / sampling ** 2
    return res


# -- average precision ---------------------------------------------------------

def exhaustive_ap(dets, gts, threshold):
    """AP of one class by explicit matching, recall/precision walk and 101-point sampling.

    ``dets`` and ``gts`` are per-image lists of ``(score, mask)`` / ``mask``.
    Matching: per image, detections in descending score order (stable) each take
    the unmatched ground truth of highest IoU that is >= threshold.
    """
    records = []
    n_gt = sum(len(g) for g in gts)
    if n_gt == 0:
        return -1.0
    for d_img, g_img in zip(dets, gts):
        order = sorted(range(len(d_img)), key=lambda k: -d_img[k][0])
        used = set()
        for k in order:
            score, dm = d_img[k]
            best, best_iou = None, threshold
            for gi, gm in enumerate(g_img):
                if gi in used:
                    continue
                inter = np.logical_and(dm, gm).sum()
                union = np.logical_or(dm, gm).sum()
                iou = inter / union if union else 0.0
                if iou >= best_iou:  # equal IoU: the later ground truth wins
                    best, best_iou = gi, iou
            if best is not None:
                used.add(best)
            records.append((score, best is not None))
    records.sort(key=lambda r: -r[0])
    tp = fp = 0
    prec, rec = [], []
    for _, hit in records:
        tp += hit
        fp += not hit
        prec.append(tp / (tp + fp))
        rec.append(tp / n_gt)
    for i in range(len(prec) - 2, -1, -1):
        prec[i] = max(prec[i], prec[i + 1])
    total = 0.0
    for r in np.linspace(0, 1, 101):
        idx = next((i for i, rv in enumerate(rec) if rv >= r), None)
        total += prec[idx] if idx is not None else 0.0
    return total / 101
