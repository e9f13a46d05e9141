import os
import pathlib

import numpy as np
import pytest

import fontaware as fa

FONTS = pathlib.Path(os.environ.get("FONTAWARE_FONTS_DIR", pathlib.Path(__file__).parents[2] / "data" / "fonts"))


def softmax_rows(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def test_rollout_matches_numpy_product():
    rng = np.random.default_rng(0)
    layers = [softmax_rows(rng.normal(size=(3, 10, 10))).astype(np.float32) for _ in range(4)]
    r = np.eye(10)
    for a in layers:
        m = 0.5 * a.astype(np.float64).mean(axis=0) + 0.5 * np.eye(10)
        m /= m.sum(axis=1, keepdims=True)
        r = m @ r
    got = fa.attention_rollout(layers, 3, 3)
    assert got.shape == (3, 3)
    np.testing.assert_allclose(got.ravel(), r[0, 1:], atol=1e-6)


def test_rollout_rejects_non_stochastic():
    bad = np.full((1, 5, 5), 0.5, np.float32)
    with pytest.raises(fa.NonStochasticAttention):
        fa.attention_rollout([bad], 2, 2)
    with pytest.raises(ValueError):
        fa.attention_rollout([bad], 2, 2)


def test_map_normalize_and_resize():
    m = np.array([[0.0, 2.0], [1.0, 4.0]])
    n = fa.normalize_map(m)
    assert n.min() == 0.0 and n.max() == 1.0
    up = fa.resize_map(n, 16)
    assert up.shape == (16, 16)
    assert 0.0 <= up.min() and up.max() <= 1.0


def test_weighted_l1_reduces_to_l1():
    rng = np.random.default_rng(1)
    gt = rng.random((12, 9), dtype=np.float32)
    gen = rng.random((12, 9), dtype=np.float32)
    w = np.zeros_like(gt)
    assert fa.weighted_l1(gt, gen, w, alpha=1.0) == fa.l1(gt, gen)
    w = rng.random((12, 9), dtype=np.float32)
    expect = np.mean((w.astype(np.float64) + 0.1) * np.abs(gt.astype(np.float64) - gen))
    assert fa.weighted_l1(gt, gen, w) == pytest.approx(expect, rel=1e-12)
    g = fa.weighted_l1_grad(gt, gen, w, alpha=0.1, reduction="sum")
    np.testing.assert_allclose(g, -(w + 0.1) * np.sign(gt - gen), rtol=1e-6)
    with pytest.raises(fa.ShapeMismatch):
        fa.weighted_l1(gt, gen[:5], w)
    with pytest.raises(ValueError):
        fa.weighted_l1(gt, gen, w, reduction="max")


def square(size, lo, hi):
    img = np.ones((size, size), np.float32)
    img[lo:hi, lo:hi] = 0.0
    return img


def test_metric_identities_and_exclusion():
    a = square(32, 8, 24)
    assert fa.l1(a, a) == 0.0
    assert fa.hausdorff(a, a) == 0.0
    assert fa.phd(a, a) == 0.0
    assert fa.iou(a, a) == 1.0
    assert fa.ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    blank = np.ones((32, 32), np.float32)
    assert fa.hausdorff(a, blank) is None
    b = square(32, 10, 26)
    assert fa.hausdorff(a, b) > 0
    assert fa.iou(a, b) < 1


def test_point_set_distances_match_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(10):
        p = rng.integers(0, 20, size=(7, 2))
        q = rng.integers(0, 20, size=(5, 2))
        d = np.hypot(*(p[:, None, :] - q[None, :, :]).transpose(2, 0, 1))
        haus = max(d.min(axis=1).max(), d.min(axis=0).max())
        phd = d.min(axis=1).mean() + d.min(axis=0).mean()
        assert fa.hausdorff_points(p, q, 20, 20) == pytest.approx(haus, abs=1e-9)
        assert fa.phd_points(p, q, 20, 20) == pytest.approx(phd, abs=1e-9)


def test_otsu_splits_bimodal_image():
    img = np.concatenate([np.full(100, 0.1), np.full(100, 0.9)]).reshape(10, 20).astype(np.float32)
    r = fa.otsu_threshold(img)
    assert not r["degenerate"]
    assert 0.1 < r["threshold"] < 0.9


def test_pca_shapes():
    rng = np.random.default_rng(3)
    feats = rng.normal(size=(12, 6)).tolist()
    coords, var, degenerate = fa.pca(feats)
    assert coords.shape == (12, 2)
    assert var[0] >= var[1] >= 0
    assert not degenerate


def first_font():
    fonts = sorted(FONTS.rglob("*.ttf"))
    if not fonts:
        pytest.skip("no bundled fonts")
    return fonts[0]


def test_render_and_resize_glyph():
    img = fa.render_glyph(first_font(), "A", size=64, margin=2)
    assert img.shape == (64, 64)
    assert img.min() < 0.5 < img.max()
    small = fa.resize_image(img, 32)
    assert small.shape == (32, 32)
    with pytest.raises(ValueError):
        fa.render_glyph(first_font(), "ab")
