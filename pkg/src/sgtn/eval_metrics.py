"""Mask AP: IoU, greedy score-ordered matching, 101-point interpolated AP and the COCO-style suite."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics.tensor import ShapeError

__all__ = [
    "IOU_THRESHOLDS", "RECALL_POINTS", "AREA_RANGES", "EMPTY", "EvalReport",
    "mask_iou", "mask_iou_matrix", "match_image", "ap_at_threshold", "coco_ap_suite",
    "write_report", "format_report",
]

IOU_THRESHOLDS = np.round(0.5 + 0.05 * np.arange(10), 2)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
# half-open [lo, hi) pixel-area ranges
AREA_RANGES = {"all": (0.0, math.inf), "small": (0.0, 32.0 ** 2),
               "medium": (32.0 ** 2, 96.0 ** 2), "large": (96.0 ** 2, math.inf)}
EMPTY = -1.0
MAX_DETS = 100


@dataclass
class EvalReport:
    AP: float = EMPTY
    AP50: float = EMPTY
    AP75: float = EMPTY
    AP_S: float = EMPTY
    AP_M: float = EMPTY
    AP_L: float = EMPTY
    per_threshold: list = field(default_factory=list)
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeError(f"mask extents differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    return 0.0 if union == 0 else np.count_nonzero(a & b) / union


def mask_iou_matrix(dets, gts) -> np.ndarray:
    """``(len(dets), len(gts))`` IoU of boolean masks."""
    if not len(dets) or not len(gts):
        return np.zeros((len(dets), len(gts)))
    d = np.stack([np.asarray(m, dtype=bool).reshape(-1) for m in dets]).astype(np.float64)
    g = np.stack([np.asarray(m, dtype=bool).reshape(-1) for m in gts]).astype(np.float64)
    if d.shape[1] != g.shape[1]:
        raise ShapeError("detection and ground-truth masks differ in extent")
    inter = d @ g.T
    union = d.sum(1)[:, None] + g.sum(1)[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def _in_range(area: float, rng) -> bool:
    return rng[0] <= area < rng[1]


def match_image(det_scores, det_areas, gt_areas, ious, threshold: float, area_range=AREA_RANGES["all"]):
    """Greedy matching of one image and class.

    Detections are visited by descending score (ties by input order). Each
    takes the still-unmatched ground truth of highest IoU >= ``threshold``,
    preferring in-range ground truths over out-of-range (ignored) ones.
    Returns ``(order, det_matched, det_ignored, n_gt_counted)`` where the
    arrays follow ``order``.
    """
    det_scores = np.asarray(det_scores, dtype=np.float64)
    order = np.argsort(-det_scores, kind="stable")[:MAX_DETS]
    gt_ignore = np.array([not _in_range(a, area_range) for a in gt_areas], dtype=bool)
    gt_order = np.argsort(gt_ignore, kind="stable")  # counted ground truths first
    taken = np.zeros(len(gt_areas), dtype=bool)
    matched = np.zeros(len(order), dtype=bool)
    ignored = np.zeros(len(order), dtype=bool)
    for n, d in enumerate(order):
        best_iou, best = min(threshold, 1 - 1e-10), -1
        for g in gt_order:
            if taken[g]:
                continue
            if best > -1 and not gt_ignore[best] and gt_ignore[g]:
                break
            if ious[d, g] < best_iou:
                continue
            best_iou, best = ious[d, g], g
        if best > -1:
            taken[best] = True
            matched[n] = True
            ignored[n] = gt_ignore[best]
        else:
            ignored[n] = not _in_range(det_areas[d], area_range)
    return order, matched, ignored, int((~gt_ignore).sum())


def _interpolated_ap(scores, tps, n_gt: int) -> float:
    if n_gt == 0:
        return EMPTY
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-np.asarray(scores), kind="mergesort")
    tp = np.asarray(tps, dtype=bool)[order]
    tp_c = np.cumsum(tp)
    fp_c = np.cumsum(~tp)
    recall = tp_c / n_gt
    precision = tp_c / np.maximum(tp_c + fp_c, np.finfo(np.float64).eps)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(q.mean())


def _category_records(dets_per_image, gts_per_image, category):
    for dets, gts in zip(dets_per_image, gts_per_image):
        d = [x for x in dets if category is None or x.category == category]
        g = [x for x in gts if category is None or x.category == category]
        yield d, g


def ap_at_threshold(dets_per_image, gts_per_image, threshold: float, category=None,
                    area_range=AREA_RANGES["all"]) -> float:
    """Interpolated AP (101 recall points) for one class (or all records) at one IoU threshold.

    Inputs are per-image lists of records with ``category``, ``mask`` and
    (for detections) ``score``. Returns -1 when no ground truth is counted.
    """
    scores, tps, n_gt = [], [], 0
    for d, g in _category_records(dets_per_image, gts_per_image, category):
        ious = mask_iou_matrix([x.mask for x in d], [x.mask for x in g])
        order, matched, ignored, ng = match_image(
            [x.score for x in d], [x.area for x in d], [x.area for x in g], ious, threshold, area_range
        )
        n_gt += ng
        keep = ~ignored
        scores.extend(np.asarray([d[i].score for i in order], dtype=np.float64)[keep])
        tps.extend(matched[keep])
    return _interpolated_ap(np.asarray(scores), np.asarray(tps, dtype=bool), n_gt)


def _class_mean(values) -> float:
    vals = [v for v in values if v > EMPTY]
    return float(np.mean(vals)) if vals else EMPTY


def coco_ap_suite(dets_per_image, gts_per_image, categories=None) -> EvalReport:
    """AP over IoU 0.50:0.05:0.95, AP50, AP75 and size-bucket APs, averaged over classes with ground truth."""
    if categories is None:
        categories = sorted({x.category for g in gts_per_image for x in g})
    table = {}  # (category, bucket) -> list of AP per threshold
    for c in categories:
        d_c, g_c, iou_c = [], [], []
        for d, g in _category_records(dets_per_image, gts_per_image, c):
            d_c.append(d)
            g_c.append(g)
            iou_c.append(mask_iou_matrix([x.mask for x in d], [x.mask for x in g]))
        for bucket, rng in AREA_RANGES.items():
            row = []
            for t in IOU_THRESHOLDS:
                scores, tps, n_gt = [], [], 0
                for d, g, ious in zip(d_c, g_c, iou_c):
                    order, matched, ignored, ng = match_image(
                        [x.score for x in d], [x.area for x in d], [x.area for x in g], ious, float(t), rng
                    )
                    n_gt += ng
                    keep = ~ignored
                    scores.extend(np.asarray([d[i].score for i in order], dtype=np.float64)[keep])
                    tps.extend(matched[keep])
                row.append(_interpolated_ap(np.asarray(scores), np.asarray(tps, dtype=bool), n_gt))
            table[(c, bucket)] = row

    def summarize(cat_list, bucket):
        per_t = [_class_mean([table[(c, bucket)][i] for c in cat_list]) for i in range(len(IOU_THRESHOLDS))]
        valid = [v for v in per_t if v > EMPTY]
        return (float(np.mean(valid)) if valid else EMPTY), per_t

    def build(cat_list) -> EvalReport:
        ap, per_t = summarize(cat_list, "all")
        return EvalReport(
            AP=ap,
            AP50=per_t[0] if per_t else EMPTY,
            AP75=per_t[5] if per_t else EMPTY,
            AP_S=summarize(cat_list, "small")[0],
            AP_M=summarize(cat_list, "medium")[0],
            AP_L=summarize(cat_list, "large")[0],
            per_threshold=per_t,
        )

    report = build(categories)
    report.per_class = {int(c): {k: v for k, v in build([c]).to_dict().items() if k != "per_class"}
                        for c in categories}
    return report


def format_report(report: EvalReport, names=None) -> str:
    """Aligned plain-text table; -1 marks an empty bucket."""
    cols = ("AP", "AP50", "AP75", "AP_S", "AP_M", "AP_L")
    lines = [f"{'class':<12}" + "".join(f"{c:>8}" for c in cols)]
    lines.append(f"{'all':<12}" + "".join(f"{getattr(report, c):>8.3f}" for c in cols))
    for cat, vals in sorted(report.per_class.items()):
        label = (names or {}).get(cat, str(cat))
        lines.append(f"{label:<12}" + "".join(f"{vals[c]:>8.3f}" for c in cols))
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, json_path, text_path=None, names=None) -> None:
    Path(json_path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text(format_report(report, names), encoding="utf-8")
