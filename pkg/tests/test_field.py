import numpy as np
import pytest

from dualct import tensor as T
from dualct.field import (FieldDecoder, QueryBatch, feature_coords, fuse_views, grid_points, mlp_decode,
                          predict_points, reconstruct_volume)
from dualct.geometry import bilinear_sample, project_point
from dualct.gradcheck import check_gradient
from dualct.tensor import Tensor, no_grad


def _zero_biases(dec):
    for layer in dec.layers:
        layer.bias.data[:] = 0


def _features(rng, geometry, c=4, size=8):
    return [Tensor(rng.standard_normal((c, size, size))) for _ in geometry.angles_deg]


def test_fuse_views_set_properties(rng):
    views = [Tensor(rng.standard_normal((5, 3))) for _ in range(3)]
    assert fuse_views(views[:1]) is views[0]
    for mode in ("max", "mean"):
        a = fuse_views(views, mode).data
        b = fuse_views([views[2], views[0], views[1]], mode).data
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(fuse_views(views + [views[1]], "max").data, fuse_views(views, "max").data)
    with pytest.raises(ValueError):
        fuse_views([])
    with pytest.raises(ValueError):
        fuse_views(views, "median")


def test_mlp_zero_and_widths(rng):
    dec = FieldDecoder(6, rng)
    assert [l.weight.shape for l in dec.layers] == [(6, 6), (6, 6), (3, 6), (1, 3)]
    _zero_biases(dec)
    assert np.all(mlp_decode(Tensor(np.zeros((4, 6))), dec).data == 0)


def test_mlp_hand_computed_toy():
    dec = FieldDecoder(2, np.random.default_rng(0), hidden=(2, 2, 2))
    dec.layers[0].weight.data[:] = [[1.0, 0.0], [0.0, -1.0]]
    dec.layers[1].weight.data[:] = np.eye(2)
    dec.layers[2].weight.data[:] = [[2.0, 0.0], [1.0, 1.0]]
    dec.layers[3].weight.data[:] = [[1.0, -1.0]]
    _zero_biases(dec)
    dec.layers[3].bias.data[:] = 0.5
    # h1 = relu([3, 2]) = [3, 2]; h2 = [3, 2]; h3 = [6, 5]; out = 6 - 5 + 0.5
    assert mlp_decode(Tensor(np.array([3.0, -2.0])), dec).item() == 1.5
    # second entry negative after the first layer: h1 = relu([-1, -4]) = 0
    assert mlp_decode(Tensor(np.array([-1.0, 4.0])), dec).item() == 0.5


def test_mlp_grad_and_no_grad_paths_agree(rng):
    dec = FieldDecoder(4, rng)
    x = rng.standard_normal((9, 4))
    with_graph = mlp_decode(Tensor(x), dec).data
    with no_grad():
        without = mlp_decode(Tensor(x), dec).data
    np.testing.assert_allclose(with_graph, without, atol=1e-13)
    assert check_gradient(lambda t: T.tsum(mlp_decode(t, dec)), x) < 1e-4


def test_query_batch_validation():
    with pytest.raises(ValueError):
        QueryBatch(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        QueryBatch(np.zeros((3, 3)), np.zeros(2))


def test_feature_coords_registration(small_geometry):
    g = small_geometry
    pts = np.array([[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]])
    full = feature_coords(pts, 30.0, g, g.det_pixels)
    u, v = project_point(pts, 30.0, g)
    np.testing.assert_allclose(full, np.column_stack([u, v]), atol=1e-12)
    half = feature_coords(pts, 30.0, g, (8, 8))
    np.testing.assert_allclose(half, (full + 0.5) / 2 - 0.5, atol=1e-12)


def test_zero_features_predict_zero(rng, small_geometry):
    dec = FieldDecoder(4, rng)
    _zero_biases(dec)
    feats = [Tensor(np.zeros((4, 8, 8))) for _ in small_geometry.angles_deg]
    pts = rng.uniform(-5, 5, (10, 3))
    out = predict_points(pts, feats, small_geometry, dec)
    assert out.shape == (10,) and np.all(out.data == 0)


def test_single_point_manual_composition(rng, small_geometry):
    dec = FieldDecoder(4, rng)
    feats = _features(rng, small_geometry)
    p = np.array([1.5, -0.7, 2.0])
    per_view = []
    for f, a in zip(feats, small_geometry.angles_deg):
        u, v = project_point(p, a, small_geometry)
        xy = np.array([[(u + 0.5) / 2 - 0.5, (v + 0.5) / 2 - 0.5]])
        per_view.append(bilinear_sample(f, xy).data[0])
    x = np.max(per_view, axis=0)
    for i, layer in enumerate(dec.layers):
        x = layer.weight.data @ x + layer.bias.data
        if i < 3:
            x = np.maximum(x, 0)
    got = predict_points(p[None], feats, small_geometry, dec).data[0]
    assert got == pytest.approx(x[0], abs=1e-12)


def test_view_order_invariance(rng, small_geometry):
    g = small_geometry.with_angles((0.0, 60.0, 120.0))
    dec = FieldDecoder(4, rng)
    feats = _features(rng, g)
    pts = rng.uniform(-5, 5, (20, 3))
    a = predict_points(pts, feats, g, dec).data
    b = predict_points(pts, feats[::-1], g.with_angles(g.angles_deg[::-1]), dec).data
    np.testing.assert_array_equal(a, b)


def test_predict_gradient_reaches_features(rng, small_geometry):
    dec = FieldDecoder(2, rng)
    feats = _features(rng, small_geometry, c=2, size=4)
    pts = rng.uniform(-4, 4, (6, 3))
    f0 = feats[0].data

    def fn(t):
        return T.tsum(predict_points(pts, [t, feats[1]], small_geometry, dec))

    assert check_gradient(fn, f0) < 1e-4


def test_grid_equals_individual_calls(rng, small_geometry):
    dec = FieldDecoder(4, rng)
    feats = _features(rng, small_geometry)
    vol = reconstruct_volume(feats, small_geometry, dec, (4, 4, 4), (2.0, 2.0, 2.0))
    pts = grid_points((4, 4, 4), (2.0, 2.0, 2.0))
    with no_grad():
        single = np.array([predict_points(p[None], feats, small_geometry, dec).data[0] for p in pts])
    np.testing.assert_array_equal(vol.data.ravel(), single)
    assert vol.shape == (4, 4, 4)


def test_chunking_is_bit_exact(rng, small_geometry):
    dec = FieldDecoder(4, rng)
    feats = _features(rng, small_geometry)
    a = reconstruct_volume(feats, small_geometry, dec, chunk=7).data
    b = reconstruct_volume(feats, small_geometry, dec, chunk=64).data
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        reconstruct_volume(feats, small_geometry, dec, chunk=0)


def test_zero_features_zero_volume(rng, small_geometry):
    dec = FieldDecoder(4, rng)
    _zero_biases(dec)
    feats = [Tensor(np.zeros((4, 8, 8))) for _ in small_geometry.angles_deg]
    assert np.all(reconstruct_volume(feats, small_geometry, dec).data == 0)


def test_mean_fusion_gradient(rng):
    other = Tensor(rng.standard_normal((3, 2)))
    g = rng.standard_normal((3, 2))
    assert check_gradient(lambda t: T.tsum(fuse_views([t, other], "mean") * g), rng.standard_normal((3, 2))) < 1e-8
