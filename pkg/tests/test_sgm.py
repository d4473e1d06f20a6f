"""Shape guidance: detail branch geometry, target derivation and the weighted loss."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from sgtn.numerics import ShapeError, Tensor, no_grad, precision, seeded_rng
from sgtn.records import InstanceRecord
from sgtn.sgm import (ARFEM, ShapeGuidanceModule, ShapeTargets, derive_shape_targets, douglas_peucker_closed,
                      instance_shape_maps, sgm_forward, sgm_loss, shape_weight_map, trace_boundary)

SQUARE = np.ones((3, 3), dtype=bool)


def _box_mask(h, w, y0, x0, y1, x1):
    m = np.zeros((h, w), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


# -- detail branch ----------------------------------------------------------------

def test_arfem_keeps_resolution():
    out = ARFEM(seeded_rng(0))(np.zeros((16, 16, 3), dtype=np.float32))
    assert out.shape == (16, 16, 32)


def test_arfem_impulse_radius_is_seven():
    net = ARFEM(seeded_rng(0)).astype(np.float64).eval()
    for layer in list(net.branches) + [net.fuse]:
        layer.bn.running_mean[...] = -1.0  # shift so ReLUs stay open and the response is visible
    base = np.zeros((1, 31, 31, 3))
    hit = base.copy()
    hit[0, 15, 15, :] = 1.0
    with precision(np.float64), no_grad():
        diff = np.abs(net(Tensor(hit)).data - net(Tensor(base)).data).max(-1)[0]
    ys, xs = np.nonzero(diff > 1e-12)
    radius = np.maximum(np.abs(ys - 15), np.abs(xs - 15)).max()
    assert radius == 7


def test_arfem_constant_image_gives_constant_interior():
    net = ARFEM(seeded_rng(1)).eval()
    img = np.full((1, 24, 24, 3), 0.3, dtype=np.float32)
    with no_grad():
        out = net(Tensor(img)).data[0]
    interior = out[8:-8, 8:-8]
    np.testing.assert_allclose(interior, np.broadcast_to(interior[0, 0], interior.shape), atol=1e-6)


def test_sgm_output_shapes_and_zero_head():
    mod = ShapeGuidanceModule(seeded_rng(0), 24, 32, 16)
    mod.classifier.weight.data[...] = 0.0
    mod.classifier.bias.data[...] = 0.0
    out = sgm_forward(np.zeros((2, 8, 8, 24)), np.zeros((2, 8, 8, 32)), mod)
    assert out.logits.shape == (2, 8, 8, 3)
    assert out.guided_feature.shape == (2, 8, 8, 16)
    np.testing.assert_array_equal(out.probabilities.data, 0.5)


def test_sgm_rejects_mismatched_resolution():
    mod = ShapeGuidanceModule(seeded_rng(0), 4, 4, 4)
    with pytest.raises(ShapeError, match="extent"):
        mod(np.zeros((1, 8, 8, 4)), np.zeros((1, 4, 4, 4)))


# -- targets ---------------------------------------------------------------------

def test_square_targets_before_pooling():
    m = _box_mask(8, 8, 2, 2, 6, 6)
    fg, edge, corner = instance_shape_maps(m, dilate_corners=False)
    assert fg.sum() == 16 and edge.sum() == 12
    assert sorted(map(tuple, np.argwhere(corner))) == [(2, 2), (2, 5), (5, 2), (5, 5)]
    np.testing.assert_array_equal(edge[3:5, 3:5], False)


def test_square_targets_at_stride_four():
    """A 16x16 square at full size is a 4x4 square at stride 4."""
    t = derive_shape_targets([InstanceRecord.from_mask(1, _box_mask(32, 32, 8, 8, 24, 24))], 32, 32)
    assert t.fg.shape == (8, 8) and t.fg.sum() == 16
    assert t.edge.sum() == 12


def test_empty_scene():
    t = derive_shape_targets([], 16, 16)
    assert not (t.fg.any() or t.edge.any() or t.corner.any())


def test_overlapping_instances_union():
    a = InstanceRecord.from_mask(1, _box_mask(16, 16, 2, 2, 10, 10))
    b = InstanceRecord.from_mask(2, _box_mask(16, 16, 6, 6, 14, 14))
    t = derive_shape_targets([a, b], 16, 16, stride=1)
    np.testing.assert_array_equal(t.fg, a.mask | b.mask)
    assert t.edge[6, 9] and t.edge[9, 6]  # boundaries of each instance survive inside the other
    assert t.edge[9, 9]


def test_trace_is_clockwise_boundary():
    m = _box_mask(5, 6, 1, 1, 4, 5)
    pts = trace_boundary(m)
    assert tuple(pts[0]) == (1, 1) and tuple(pts[1]) == (1, 2)
    assert len(pts) == 10
    ring = np.zeros_like(m)
    ring[pts[:, 0], pts[:, 1]] = True
    np.testing.assert_array_equal(ring, m & ~ndimage.binary_erosion(m, SQUARE))


def test_trace_single_pixel():
    m = np.zeros((3, 3), dtype=bool)
    m[1, 1] = True
    np.testing.assert_array_equal(trace_boundary(m), [[1, 1]])


def test_dp_keeps_rectangle_corners_and_drops_collinear_points():
    pts = np.array([(0, x) for x in range(6)] + [(y, 5) for y in range(1, 4)]
                   + [(3, x) for x in range(4, -1, -1)] + [(y, 0) for y in range(2, 0, -1)])
    verts = douglas_peucker_closed(pts, 1.5)
    assert sorted(map(tuple, verts)) == [(0, 0), (0, 5), (3, 0), (3, 5)]


@st.composite
def scenes(draw):
    h = w = 24
    out = []
    for _ in range(draw(st.integers(0, 3))):
        y0, x0 = draw(st.integers(0, 18)), draw(st.integers(0, 18))
        y1, x1 = draw(st.integers(y0 + 1, 24)), draw(st.integers(x0 + 1, 24))
        m = _box_mask(h, w, y0, x0, y1, x1)
        if draw(st.booleans()):
            yy, xx = np.mgrid[0:h, 0:w]
            cy, cx = (y0 + y1) / 2, (x0 + x1) / 2
            m &= ((yy - cy) / max((y1 - y0) / 2, 0.5)) ** 2 + ((xx - cx) / max((x1 - x0) / 2, 0.5)) ** 2 <= 1.0
        if m.any():
            out.append(InstanceRecord.from_mask(1 + len(out) % 3, m))
    return out


@given(scenes())
def test_target_invariants(instances):
    t = derive_shape_targets(instances, 24, 24, stride=1)
    grown_fg = ndimage.binary_dilation(t.fg, SQUARE)
    assert not (t.edge & ~(t.fg | grown_fg)).any()
    assert not (t.corner & ~ndimage.binary_dilation(t.edge, SQUARE)).any()
    assert t.edge.any() == t.fg.any()
    rev = derive_shape_targets(instances[::-1], 24, 24, stride=1)
    for a, b in zip((t.fg, t.edge, t.corner), (rev.fg, rev.edge, rev.corner)):
        np.testing.assert_array_equal(a, b)
    pooled = derive_shape_targets(instances, 24, 24)
    assert pooled.fg.shape == (6, 6)
    assert pooled.edge.any() == pooled.fg.any()


# -- loss -------------------------------------------------------------------------

def _targets(fg, edge=None, corner=None):
    z = np.zeros_like(fg)
    return ShapeTargets(fg, z if edge is None else edge, z if corner is None else corner)


def test_perfect_prediction_loss_is_tiny():
    t = derive_shape_targets([InstanceRecord.from_mask(1, _box_mask(16, 16, 4, 4, 12, 12))], 16, 16, stride=1)
    with precision(np.float64):
        loss = sgm_loss(Tensor(t.stacked()), t)
    assert loss.scalar <= 1e-6
    assert set(loss.terms) == {"fg", "edge", "corner"}


def test_uniform_half_is_three_ln2():
    t = _targets(np.zeros((4, 4), dtype=bool))
    with precision(np.float64):
        loss = sgm_loss(Tensor(np.full((4, 4, 3), 0.5)), t)
    assert loss.scalar == pytest.approx(3 * math.log(2), rel=1e-12)


def test_corner_pixel_weighs_four_times_interior():
    fg = np.zeros((2, 2), dtype=bool)
    corner = fg.copy()
    corner[0, 0] = True
    t = _targets(fg, corner=corner)
    w = shape_weight_map(t)
    assert w[0, 0] == 4.0 and w[1, 1] == 1.0
    half = np.full((2, 2, 3), 0.5)
    at_corner, at_inner = half.copy(), half.copy()
    at_corner[0, 0, 0] = 0.3  # foreground channel: target 0 at both pixels
    at_inner[1, 1, 0] = 0.3
    with precision(np.float64):
        base = sgm_loss(Tensor(half), t).scalar
        dc = sgm_loss(Tensor(at_corner), t).scalar - base
        di = sgm_loss(Tensor(at_inner), t).scalar - base
    assert dc == pytest.approx(4 * di, rel=1e-9)


@given(st.integers(0, 2 ** 31 - 1))
def test_loss_never_increases_when_a_pixel_is_corrected(seed):
    r = np.random.default_rng(seed)
    fg = r.uniform(size=(5, 5)) > 0.5
    edge = fg & (r.uniform(size=(5, 5)) > 0.5)
    corner = edge & (r.uniform(size=(5, 5)) > 0.6)
    t = _targets(fg, edge, corner)
    p = r.uniform(0.01, 0.99, size=(5, 5, 3))
    i, j, c = r.integers(0, 5), r.integers(0, 5), r.integers(0, 3)
    q = p.copy()
    q[i, j, c] = t.stacked()[i, j, c]
    with precision(np.float64):
        assert sgm_loss(Tensor(q), t).scalar <= sgm_loss(Tensor(p), t).scalar + 1e-12
