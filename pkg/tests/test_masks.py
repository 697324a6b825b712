import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskenc.masks import (
    BBox,
    EmptyMaskError,
    MaskError,
    crop_resize,
    iou,
    paste,
    polygon_rasterize,
    tight_bbox,
)


def _inside_even_odd(px, py, poly):
    """Scalar ray-casting point-in-polygon, written independently of the rasterizer."""
    inside = False
    n = len(poly)
    for i in range(n):
        xa, ya = poly[i]
        xb, yb = poly[(i + 1) % n]
        if (ya > py) != (yb > py):
            x_cross = xa + (py - ya) * (xb - xa) / (yb - ya)
            if px < x_cross:
                inside = not inside
    return inside


def _brute_rasterize(polys, h, w):
    out = np.zeros((h, w), dtype=np.uint8)
    for r in range(h):
        for c in range(w):
            out[r, c] = any(_inside_even_odd(c + 0.5, r + 0.5, p) for p in polys)
    return out


def _scalar_bilinear(field, out_h, out_w):
    """Loop-based reference for center-aligned bilinear resampling."""
    in_h, in_w = field.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        y = min(max((i + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1)
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, in_h - 1)
        fy = y - y0
        for j in range(out_w):
            x = min(max((j + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1)
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, in_w - 1)
            fx = x - x0
            top = field[y0, x0] * (1 - fx) + field[y0, x1] * fx
            bot = field[y1, x0] * (1 - fx) + field[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


# -- polygon_rasterize ------------------------------------------------------

def test_square_fills_pixel_centers():
    m = polygon_rasterize([[(0, 0), (4, 0), (4, 4), (0, 4)]], 8, 8)
    assert m.sum() == 16
    assert m[:4, :4].all()


def test_flat_coco_polygon_equals_point_list():
    a = polygon_rasterize([[0, 0, 4, 0, 4, 4, 0, 4]], 8, 8)
    b = polygon_rasterize([[(0, 0), (4, 0), (4, 4), (0, 4)]], 8, 8)
    assert np.array_equal(a, b)


def test_empty_polygon_list():
    assert polygon_rasterize([], 5, 7).sum() == 0


def test_degenerate_polygon_rejected():
    with pytest.raises(MaskError):
        polygon_rasterize([[(0, 0), (3, 3)]], 5, 5)
    with pytest.raises(MaskError):
        polygon_rasterize([[(0, 0), (3, np.nan), (1, 2)]], 5, 5)


def test_union_and_even_odd():
    # two overlapping squares: union
    a = polygon_rasterize([[(0, 0), (4, 0), (4, 4), (0, 4)], [(2, 2), (6, 2), (6, 6), (2, 6)]], 8, 8)
    assert a.sum() == 16 + 16 - 4
    # self-overlapping pentagram: the center is covered twice, so even-odd leaves it empty
    t = np.pi / 2 + np.arange(5) * 4 * np.pi / 5
    star = np.stack([20 + 18 * np.cos(t), 20 + 18 * np.sin(t)], axis=1)
    s = polygon_rasterize([star], 40, 40)
    assert s[20, 20] == 0
    assert s.sum() > 0


def test_matches_brute_force_on_random_polygons():
    rng = np.random.default_rng(3)
    for _ in range(25):
        k = rng.integers(3, 12)
        polys = [rng.uniform(-3, 23, size=(k, 2)) for _ in range(rng.integers(1, 3))]
        assert np.array_equal(polygon_rasterize(polys, 18, 21), _brute_rasterize(polys, 18, 21))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 20), st.integers(0, 2**31 - 1))
def test_rotation_of_vertices_is_invariant(shift, seed):
    rng = np.random.default_rng(seed)
    poly = rng.uniform(0, 16, size=(9, 2))
    a = polygon_rasterize([poly], 16, 16)
    b = polygon_rasterize([np.roll(poly, shift, axis=0)], 16, 16)
    assert np.array_equal(a, b)


# -- tight_bbox -------------------------------------------------------------

def test_tight_bbox_examples():
    m = np.zeros((10, 10), dtype=np.uint8)
    m[2, 3] = 1
    assert tight_bbox(m) == BBox(3, 2, 1, 1)
    assert tight_bbox(np.ones((6, 9), dtype=np.uint8)) == BBox(0, 0, 9, 6)
    m = np.zeros((10, 10), dtype=np.uint8)
    m[0, 0] = m[5, 7] = 1
    assert tight_bbox(m) == BBox(0, 0, 8, 6)


def test_tight_bbox_empty():
    with pytest.raises(EmptyMaskError):
        tight_bbox(np.zeros((4, 4), dtype=np.uint8))


def test_bbox_invariants():
    with pytest.raises(MaskError):
        BBox(0, 0, 0, 3)
    with pytest.raises(MaskError):
        crop_resize(np.ones((4, 4), dtype=np.uint8), BBox(2, 2, 4, 4), 4)


# -- crop_resize / paste ----------------------------------------------------

def test_crop_resize_identity_when_box_is_grid_sized():
    rng = np.random.default_rng(0)
    img = (rng.random((40, 50)) < 0.5).astype(np.uint8)
    box = BBox(7, 3, 28, 28)
    out = crop_resize(img, box, 28)
    assert np.array_equal(out, img[3:31, 7:35])


def test_crop_resize_all_ones():
    for h, w in [(3, 5), (28, 28), (91, 40)]:
        assert crop_resize(np.ones((h, w), dtype=np.uint8), BBox(0, 0, w, h), 28).all()


def test_crop_resize_matches_scalar_reference():
    rng = np.random.default_rng(5)
    img = (rng.random((37, 23)) < 0.4).astype(np.uint8)
    ref = (_scalar_bilinear(img.astype(float), 28, 28) >= 0.5).astype(np.uint8)
    assert np.array_equal(crop_resize(img, BBox(0, 0, 23, 37), 28), ref)


def test_disk_downsample_iou():
    yy, xx = np.mgrid[:56, :56]
    big = (((yy + 0.5 - 28) ** 2 + (xx + 0.5 - 28) ** 2) < 26 ** 2).astype(np.uint8)
    yy, xx = np.mgrid[:28, :28]
    analytic = (((yy + 0.5 - 14) ** 2 + (xx + 0.5 - 14) ** 2) < 13 ** 2).astype(np.uint8)
    out = crop_resize(big, BBox(0, 0, 56, 56), 28)
    ref = (_scalar_bilinear(big.astype(float), 28, 28) >= 0.5).astype(np.uint8)
    assert np.array_equal(out, ref)
    assert iou(out, analytic) >= 0.93


def test_paste_exact_copy_at_offset():
    rng = np.random.default_rng(1)
    g = (rng.random((28, 28)) < 0.5).astype(np.uint8)
    out = paste(g, BBox(5, 9, 28, 28), 50, 40)
    assert np.array_equal(out[9:37, 5:33], g)
    assert out.sum() == g.sum()


def test_paste_zero_grid():
    assert paste(np.zeros((28, 28), dtype=np.uint8), BBox(1, 1, 30, 12), 20, 40).sum() == 0


def test_crop_then_paste_blob():
    yy, xx = np.mgrid[:100, :80]
    blob = ((((yy - 50) / 38) ** 2 + ((xx - 40) / 30) ** 2) <= 1 + 0.15 * np.sin(3 * np.arctan2(yy - 50, xx - 40)))
    blob = blob.astype(np.uint8)
    box = tight_bbox(blob)
    back = paste(crop_resize(blob, box, 28), box, 100, 80)
    assert iou(back, blob) >= 0.9


# -- iou --------------------------------------------------------------------

def test_iou_examples():
    a = np.zeros((4, 6), dtype=np.uint8)
    a[:, :4] = 1
    b = np.zeros((4, 6), dtype=np.uint8)
    b[:, 2:6] = 1
    assert iou(a, a) == 1.0
    assert iou(a, 1 - a) == 0.0
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0


def test_iou_shape_mismatch():
    with pytest.raises(MaskError):
        iou(np.zeros((3, 3)), np.zeros((3, 4)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_iou_symmetric_and_monotone(seed):
    rng = np.random.default_rng(seed)
    a = (rng.random((12, 12)) < 0.5).astype(np.uint8)
    b = (rng.random((12, 12)) < 0.5).astype(np.uint8)
    assert iou(a, b) == iou(b, a)
    # removing intersection pixels from one argument cannot raise IoU
    inter = np.argwhere(a & b)
    if len(inter):
        a2 = a.copy()
        r, c = inter[rng.integers(len(inter))]
        a2[r, c] = 0
        assert iou(a2, b) <= iou(a, b)
