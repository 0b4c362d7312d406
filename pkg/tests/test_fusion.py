import numpy as np
import pytest

from dualct import tensor as T
from dualct.fusion import CAFF, CrossAttention, FusionConfig
from dualct.gradcheck import check_gradient
from dualct.tensor import Tensor
from oracles import conv2d_loop, cross_attention_loop


def _ca_args(ca):
    return (ca.q.weight.data, ca.q.bias.data, ca.k.weight.data, ca.k.bias.data, ca.v.weight.data, ca.v.bias.data,
            ca.out.weight.data, ca.out.bias.data)


def _conv(conv, x):
    return conv2d_loop(x, conv.weight.data, conv.bias.data, 1)


@pytest.mark.parametrize("heads", [1, 2])
def test_cross_attention_matches_loop(rng, heads):
    ca = CrossAttention(2, heads, rng)
    k, v, q = rng.standard_normal((3, 2, 2, 2))
    got = ca(Tensor(k), Tensor(v), Tensor(q)).data
    np.testing.assert_allclose(got, cross_attention_loop(k, v, q, heads, *_ca_args(ca)), atol=1e-10)


def test_cross_attention_zero(rng):
    ca = CrossAttention(4, 2, rng)
    for lin in (ca.q, ca.k, ca.v, ca.out):
        lin.bias.data[:] = 0
    z = Tensor(np.zeros((4, 2, 2)))
    assert np.all(ca(z, z, z).data == 0)


def test_single_token_attends_fully(rng):
    ca = CrossAttention(4, 2, rng)
    k, v, q = rng.standard_normal((3, 4, 1, 1))
    vp = ca.v.weight.data @ v[:, 0, 0] + ca.v.bias.data
    expected = ca.out.weight.data @ vp + ca.out.bias.data
    np.testing.assert_allclose(ca(Tensor(k), Tensor(v), Tensor(q)).data[:, 0, 0], expected, atol=1e-14)


def test_heads_must_divide(rng):
    with pytest.raises(ValueError):
        CrossAttention(6, 4, rng)
    with pytest.raises(ValueError):
        FusionConfig(variant="mean")


def _caff_reference(m, s, f, roles="spatial_query"):
    h, w = s.shape[1:]
    n = np.sqrt(h * w)
    zs = np.fft.fft2(_conv(m.conv_s, s)) / n
    zf = np.fft.fft2(_conv(m.conv_f, f)) / n
    parts = []
    for ca, a, b in ((m.ca_re, zs.real, zf.real), (m.ca_im, zs.imag, zf.imag)):
        att = cross_attention_loop(b, b, a, ca.heads, *_ca_args(ca)) if roles == "spatial_query" \
            else cross_attention_loop(a, a, b, ca.heads, *_ca_args(ca))
        parts.append(a + att)
    return np.fft.ifft2((parts[0] + 1j * parts[1]) * n).real


@pytest.mark.parametrize("roles", ["spatial_query", "frequency_query"])
def test_caff_matches_reference(rng, roles):
    m = CAFF(2, FusionConfig(heads=2, qkv_roles=roles), rng)
    s, f = rng.standard_normal((2, 2, 8, 8))
    out = m(Tensor(s), Tensor(f))
    assert out.shape == (2, 8, 8) and out.data.dtype.kind == "f"
    np.testing.assert_allclose(out.data, _caff_reference(m, s, f, roles), atol=1e-10)


def test_caff_zero_attention_is_residual(rng):
    m = CAFF(4, FusionConfig(heads=2), rng)
    for ca in (m.ca_re, m.ca_im):
        for p in ca.parameters():
            p.data[:] = 0
    s, f = rng.standard_normal((2, 4, 8, 8))
    np.testing.assert_allclose(m(Tensor(s), Tensor(f)).data, _conv(m.conv_s, s), atol=1e-10)


def test_add_and_concat_variants(rng):
    s, f = rng.standard_normal((2, 2, 4, 4))
    add = CAFF(2, FusionConfig(heads=1, variant="add"), rng)
    np.testing.assert_allclose(add(Tensor(s), Tensor(f)).data, _conv(add.conv_s, s) + _conv(add.conv_f, f),
                               atol=1e-12)
    cat = CAFF(2, FusionConfig(heads=1, variant="concat"), rng)
    both = np.concatenate([_conv(cat.conv_s, s), _conv(cat.conv_f, f)])
    np.testing.assert_allclose(cat(Tensor(s), Tensor(f)).data,
                               conv2d_loop(both, cat.proj.weight.data, cat.proj.bias.data, 0), atol=1e-12)


def test_spatial_ca_variant(rng):
    m = CAFF(2, FusionConfig(heads=1, variant="spatial_ca"), rng)
    s, f = rng.standard_normal((2, 2, 4, 4))
    cs, cf = _conv(m.conv_s, s), _conv(m.conv_f, f)
    expected = cs + cross_attention_loop(cf, cf, cs, 1, *_ca_args(m.ca_re))
    np.testing.assert_allclose(m(Tensor(s), Tensor(f)).data, expected, atol=1e-10)


def test_caff_shape_mismatch(rng):
    m = CAFF(2, FusionConfig(heads=1), rng)
    with pytest.raises(ValueError):
        m(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((2, 8, 8))))


def test_caff_gradient(rng):
    m = CAFF(2, FusionConfig(heads=2), rng)
    f = rng.standard_normal((2, 4, 4))
    g = rng.standard_normal((2, 4, 4))
    s = rng.standard_normal((2, 4, 4))
    assert check_gradient(lambda t: T.tsum(m(t, Tensor(f)) * g), s) < 1e-4
    assert check_gradient(lambda t: T.tsum(m(Tensor(s), t) * g), f) < 1e-4
