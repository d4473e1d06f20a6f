"""Mask AP against a slow explicit matcher, plus bucket and threshold edge cases."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import exhaustive_ap
from sgtn.eval_metrics import (EMPTY, IOU_THRESHOLDS, ap_at_threshold, coco_ap_suite, format_report,
                               mask_iou, write_report)
from sgtn.numerics import ShapeError
from sgtn.records import InstanceRecord


def rect(shape, y, x, h, w):
    m = np.zeros(shape, dtype=bool)
    m[y:y + h, x:x + w] = True
    return m


def gt(mask, category=1):
    return InstanceRecord.from_mask(category, mask)


def det(mask, score, category=1):
    return InstanceRecord.from_mask(category, mask, score)


def random_scene(r, extent=16, n_classes=2):
    """Up to ten ground truths, jittered copies of some and a few false positives."""
    gts, dets = [], []
    for _ in range(r.integers(0, 11)):
        y, x = r.integers(0, extent - 3, 2)
        h, w = r.integers(2, extent - max(y, x) + 1, 2)
        g = rect((extent, extent), y, x, h, w)
        c = int(r.integers(1, n_classes + 1))
        gts.append(gt(g, c))
        if r.random() < 0.8:
            dy, dx = r.integers(-1, 2, 2)
            m = np.roll(g, (dy, dx), axis=(0, 1))
            m[r.random(m.shape) < 0.05] ^= True
            if m.any():
                # a coarse score grid makes ties common
                dets.append(det(m, float(r.integers(1, 6)) / 5, c if r.random() < 0.9 else 3 - c))
    for _ in range(r.integers(0, 3)):
        y, x = r.integers(0, extent - 2, 2)
        dets.append(det(rect((extent, extent), y, x, 3, 3), float(r.integers(1, 6)) / 5,
                        int(r.integers(1, n_classes + 1))))
    return dets, gts


def oracle_per_threshold(dets_img, gts_img, categories):
    out = []
    for t in IOU_THRESHOLDS:
        vals = []
        for c in categories:
            d = [[(x.score, x.mask) for x in ds if x.category == c] for ds in dets_img]
            g = [[x.mask for x in gs if x.category == c] for gs in gts_img]
            v = exhaustive_ap(d, g, float(t))
            if v > EMPTY:
                vals.append(v)
        out.append(float(np.mean(vals)) if vals else EMPTY)
    return out


# -- mask IoU -------------------------------------------------------------------------

def test_mask_iou_examples():
    a = rect((8, 8), 0, 0, 4, 4)
    assert mask_iou(a, a) == 1.0
    assert mask_iou(a, rect((8, 8), 4, 4, 4, 4)) == 0.0
    assert mask_iou(rect((8, 8), 0, 0, 4, 2), a) == 0.5
    assert mask_iou(np.zeros((3, 3)), np.zeros((3, 3))) == 0.0
    with pytest.raises(ShapeError):
        mask_iou(np.zeros((3, 3)), np.zeros((3, 4)))


# -- single-threshold AP ----------------------------------------------------------------

def test_single_true_positive_is_perfect():
    m = rect((16, 16), 2, 2, 6, 6)
    assert ap_at_threshold([[det(m, 0.7)]], [[gt(m)]], 0.5) == 1.0


def test_no_detections_is_zero():
    assert ap_at_threshold([[]], [[gt(rect((8, 8), 1, 1, 3, 3))]], 0.5) == 0.0


def test_no_ground_truth_is_the_empty_sentinel():
    assert ap_at_threshold([[det(rect((8, 8), 1, 1, 3, 3), 0.5)]], [[]], 0.5) == EMPTY


def test_false_positive_ranked_first_halves_precision():
    m = rect((16, 16), 2, 2, 6, 6)
    fp = rect((16, 16), 10, 10, 4, 4)
    got = ap_at_threshold([[det(fp, 0.9), det(m, 0.8)]], [[gt(m)]], 0.5)
    # PR walk: (r=0, p=0), (r=1, p=1/2); the envelope is 1/2 at every recall point
    assert got == 0.5 == exhaustive_ap([[(0.9, fp), (0.8, m)]], [[m]], 0.5)


def test_equal_iou_prefers_the_later_ground_truth():
    a, b = rect((8, 8), 0, 0, 2, 4), rect((8, 8), 2, 0, 2, 4)
    d = rect((8, 8), 1, 0, 2, 4)  # IoU 1/3 with each
    dets = [[det(d, 0.9), det(a, 0.8)]]
    assert ap_at_threshold(dets, [[gt(a), gt(b)]], 0.3) == 1.0


def test_lower_scored_detection_cannot_steal_a_match():
    g = rect((8, 8), 0, 0, 4, 4)
    weak = rect((8, 8), 0, 0, 4, 3)
    dets = [[det(weak, 0.9), det(g, 0.5)]]
    # the 0.9 detection takes the GT at IoU 0.75, the exact copy becomes a false positive
    assert ap_at_threshold(dets, [[gt(g)]], 0.5) == 1.0
    assert ap_at_threshold(dets, [[gt(g)]], 0.8) == pytest.approx(0.5)


def test_threshold_is_inclusive():
    g = rect((8, 8), 0, 0, 4, 4)
    half = rect((8, 8), 0, 0, 4, 2)
    assert ap_at_threshold([[det(half, 0.9)]], [[gt(g)]], 0.5) == 1.0
    assert ap_at_threshold([[det(half, 0.9)]], [[gt(g)]], 0.55) == 0.0


@pytest.mark.parametrize("seed", range(200))
def test_suite_matches_exhaustive_oracle(seed):
    r = np.random.default_rng(seed)
    scenes = [random_scene(r) for _ in range(int(r.integers(1, 4)))]
    dets_img, gts_img = [s[0] for s in scenes], [s[1] for s in scenes]
    cats = sorted({x.category for g in gts_img for x in g})
    report = coco_ap_suite(dets_img, gts_img)
    expected = oracle_per_threshold(dets_img, gts_img, cats)
    np.testing.assert_allclose(report.per_threshold if cats else [EMPTY] * 10, expected, rtol=0, atol=1e-12)
    valid = [v for v in expected if v > EMPTY]
    assert report.AP == pytest.approx(np.mean(valid) if valid else EMPTY, abs=1e-12)
    assert report.AP50 == pytest.approx(expected[0], abs=1e-12)
    assert report.AP75 == pytest.approx(expected[5], abs=1e-12)
    if valid:
        assert report.AP <= report.AP50 + 1e-12


# -- suite identities ----------------------------------------------------------------------------

def test_mean_identity_on_a_graded_scene():
    shape = (32, 32)
    gts = [gt(rect(shape, 2, 2, 10, 10)), gt(rect(shape, 16, 16, 12, 12), 2)]
    dets = [det(rect(shape, 2, 3, 10, 10), 0.9), det(rect(shape, 17, 16, 12, 11), 0.8, 2)]
    rep = coco_ap_suite([dets], [gts])
    assert len(rep.per_threshold) == 10
    assert abs(rep.AP - sum(rep.per_threshold) / 10) <= 1e-12
    assert 0 < rep.AP < rep.AP50 == 1.0


def test_equal_per_threshold_values_give_that_value():
    m = rect((16, 16), 4, 4, 6, 6)
    rep = coco_ap_suite([[det(m, 0.4)]], [[gt(m)]])
    assert rep.per_threshold == [1.0] * 10 and rep.AP == 1.0


@pytest.mark.parametrize("area, bucket", [(1023, "AP_S"), (1024, "AP_M"), (9215, "AP_M"), (9216, "AP_L")])
def test_size_bucket_boundaries(area, bucket):
    flat = np.zeros(100 * 100, dtype=bool)
    flat[:area] = True
    m = flat.reshape(100, 100)
    rep = coco_ap_suite([[det(m, 0.9)]], [[gt(m)]])
    for name in ("AP_S", "AP_M", "AP_L"):
        assert getattr(rep, name) == (1.0 if name == bucket else EMPTY), name


def test_out_of_bucket_detections_are_ignored_not_penalised():
    big, small = rect((100, 100), 0, 0, 40, 40), rect((100, 100), 60, 60, 5, 5)
    stray = rect((100, 100), 50, 0, 40, 40)
    rep = coco_ap_suite([[det(stray, 0.99), det(big, 0.9), det(small, 0.8)]], [[gt(big), gt(small)]])
    assert rep.AP_S == 1.0 and rep.AP_M == 0.5 and rep.AP_L == EMPTY


def test_classes_without_ground_truth_are_excluded():
    m = rect((16, 16), 0, 0, 5, 5)
    rep = coco_ap_suite([[det(m, 0.9), det(m, 0.9, 2)]], [[gt(m)]], categories=[1, 2])
    assert rep.AP == 1.0 and rep.per_class[2]["AP"] == EMPTY


def test_report_writers(tmp_path):
    m = rect((16, 16), 0, 0, 5, 5)
    rep = coco_ap_suite([[det(m, 0.9)]], [[gt(m)]])
    write_report(rep, tmp_path / "r.json", tmp_path / "r.txt", names={1: "rectangle"})
    text = (tmp_path / "r.txt").read_text()
    assert "rectangle" in text and text == format_report(rep, {1: "rectangle"})
    assert '"AP50": 1.0' in (tmp_path / "r.json").read_text()


# -- properties ---------------------------------------------------------------------------------

def _scene_from(seed):
    r = np.random.default_rng(seed)
    scenes = [random_scene(r, n_classes=1) for _ in range(2)]
    return [s[0] for s in scenes], [s[1] for s in scenes]


@given(st.integers(0, 2 ** 31 - 1))
def test_invariant_under_monotone_score_transform(seed):
    dets, gts = _scene_from(seed)
    warped = [[InstanceRecord(d.category, d.bbox, d.mask, float(np.exp(3 * d.score) - 7)) for d in ds]
              for ds in dets]
    for t in (0.5, 0.75):
        assert ap_at_threshold(dets, gts, t) == ap_at_threshold(warped, gts, t)


@given(st.integers(0, 2 ** 31 - 1))
def test_non_increasing_in_threshold(seed):
    dets, gts = _scene_from(seed)
    vals = [ap_at_threshold(dets, gts, float(t)) for t in IOU_THRESHOLDS]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 1.0))
def test_matching_a_free_ground_truth_never_hurts(seed, score):
    dets, gts = _scene_from(seed)
    before = ap_at_threshold(dets, gts, 0.5)
    for i, (ds, gs) in enumerate(zip(dets, gts)):
        free = [g for g in gs if max((mask_iou(d.mask, g.mask) for d in ds), default=0.0) < 0.5]
        if free:
            extra = [x for j, x in enumerate(dets)]
            extra[i] = ds + [det(free[0].mask, score)]
            assert ap_at_threshold(extra, gts, 0.5) >= before - 1e-15
            return
