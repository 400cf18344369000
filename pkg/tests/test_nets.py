import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hginpaint import autodiff as ad
from hginpaint.autodiff import Tensor
from hginpaint.gradcheck import check_gated
from hginpaint.losses import FeatureExtractor, LossWeights, composite, content_loss, edge_loss, gan_loss_d, \
    gan_loss_g, perceptual_loss, total_loss
from hginpaint.nets import (Discriminator, GatedConv, GatedConvSpec, Generator, NetworkConfig, blend,
                            coarse_forward, discriminator_forward, gated_conv, refine_forward)

SMALL = NetworkConfig(base_channels=8, input_resolution=16, seed=3)


def _inputs(seed=42, size=16):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0, 1, (1, size, size, 3))
    R = np.zeros((1, size, size, 1))
    R[:, size // 4:3 * size // 4, size // 4:3 * size // 4] = 1.0
    return img, R


def _digest(a):
    return hashlib.sha256(np.round(a, 9).tobytes()).hexdigest()[:16]


def test_zero_gate_is_half_features_bitwise():
    rng = np.random.default_rng(0)
    spec = GatedConvSpec(3, 1, 2, 4, 5)
    layer = GatedConv("g", spec, rng)
    layer.w_g.data[:] = 0.0
    layer.b_g.data[:] = 0.0
    x = Tensor(rng.standard_normal((2, 6, 6, 4)))
    feats = ad.elu(ad.conv2d(x, layer.w_f, layer.b_f, dilation=2)).data
    assert np.array_equal(gated_conv(x, spec, layer).data, 0.5 * feats)


def test_zero_feature_kernel_gives_zero():
    rng = np.random.default_rng(1)
    layer = GatedConv("g", GatedConvSpec(3, 1, 1, 3, 2), rng)
    layer.w_f.data[:] = 0.0
    layer.b_f.data[:] = 0.0
    assert np.array_equal(layer(Tensor(rng.standard_normal((1, 5, 5, 3)))).data, np.zeros((1, 5, 5, 2)))


def test_gated_gradient_check():
    assert check_gated().error < 1e-4


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        GatedConvSpec(4, 1, 1, 3, 3)


def test_layer_tables():
    gl = SMALL.generator_layers()
    assert [(s.stride, s.dilation, s.upsample) for s in gl.values()] == [
        (2, 1, 1), (2, 1, 1), (1, 2, 1), (1, 4, 1), (1, 1, 2), (1, 1, 2)]
    dl = SMALL.disc_layers()
    assert len(dl) == 4 and all(s.stride == 2 and s.activation == "leaky_relu" for s in dl.values())


def test_generator_shapes_and_range():
    img, R = _inputs()
    out = Generator(SMALL)(img * (1 - R), R)
    for t in (out.coarse, out.blended, out.refine):
        assert t.shape == img.shape
        assert t.data.min() >= 0.0 and t.data.max() <= 1.0


@given(st.integers(0, 1000), st.floats(0.5, 20.0))
@settings(max_examples=8, deadline=None)
def test_generator_range_for_arbitrary_params(seed, scale):
    gen = Generator(NetworkConfig(base_channels=4, input_resolution=16, hg_window=3))
    rng = np.random.default_rng(seed)
    for p in gen.parameters():
        p.data[:] = rng.standard_normal(p.shape) * scale
    img, R = _inputs(seed)
    out = gen(img * (1 - R), R)
    assert out.refine.data.min() >= 0.0 and out.refine.data.max() <= 1.0
    assert out.coarse.data.min() >= 0.0 and out.coarse.data.max() <= 1.0


def test_resolution_not_divisible_by_four():
    gen = Generator(SMALL)
    with pytest.raises(ValueError, match="divisible by 4"):
        coarse_forward(gen, np.zeros((1, 18, 18, 3)), np.zeros((1, 18, 18, 1)))


def test_blend_examples():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(size=(1, 4, 4, 3)), rng.uniform(size=(1, 4, 4, 3))
    assert np.array_equal(blend(a, b, np.zeros((1, 4, 4, 1))).data, a)
    assert np.array_equal(blend(a, b, np.ones((1, 4, 4, 1))).data, b)
    R = np.zeros((1, 4, 4, 1))
    R[:, :, :2] = 1.0
    out = blend(a, b, R).data
    assert np.array_equal(out[:, :, :2], b[:, :, :2]) and np.array_equal(out[:, :, 2:], a[:, :, 2:])


def test_blend_keeps_valid_pixels_bitwise():
    img, R = _inputs()
    out = Generator(SMALL)(img * (1 - R), R)
    valid = R[..., 0] == 0
    assert np.array_equal(out.blended.data[valid], (img * (1 - R))[valid])


def test_untrained_outputs_are_frozen():
    img, R = _inputs()
    gen = Generator(SMALL)
    out = gen(img * (1 - R), R)
    assert _digest(out.coarse.data) == "e7546da9ad3eba90"
    assert _digest(out.refine.data) == "030497d82aedc701"
    assert _digest(discriminator_forward(Discriminator(SMALL), img, R).data) == "bc3d409765060282"
    assert np.array_equal(refine_forward(gen, out.blended, R).data, out.refine.data)


def test_hypergraph_ablation_changes_output():
    img, R = _inputs()
    on = Generator(SMALL)(img * (1 - R), R).refine.data
    off_gen = Generator(NetworkConfig(base_channels=8, input_resolution=16, seed=3, use_hypergraph=False))
    assert not any(".hg." in p.name for p in off_gen.parameters())
    off = off_gen(img * (1 - R), R).refine.data
    assert np.abs(on - off).max() > 0


def test_replacement_wiring_available():
    img, R = _inputs()
    res = Generator(SMALL)(img * (1 - R), R).refine.data
    cfg = NetworkConfig(base_channels=8, input_resolution=16, seed=3, hg_residual=False)
    assert np.abs(Generator(cfg)(img * (1 - R), R).refine.data - res).max() > 0


def test_discriminator_patch_map_and_mask_sensitivity():
    img, R = _inputs(size=32)
    disc = Discriminator(NetworkConfig(base_channels=8, input_resolution=32))
    out = disc(img, R)
    assert out.shape == (1, 2, 2, 1)
    R2 = np.zeros_like(R)
    R2[:, :8, :8] = 1.0
    assert np.abs(disc(img, R2).data - out.data).max() > 0


def test_ungated_discriminator_flag():
    disc = Discriminator(NetworkConfig(base_channels=8, input_resolution=16, disc_gated=False))
    assert not any(".w_g" in p.name for p in disc.parameters())
    img, R = _inputs()
    assert disc(img, R).shape == (1, 1, 1, 1)


def test_every_parameter_receives_gradient():
    cfg = NetworkConfig(base_channels=4, input_resolution=16, hg_window=3)
    gen, disc = Generator(cfg), Discriminator(cfg)
    rng = np.random.default_rng(4)
    gt = rng.uniform(0, 1, (2, 16, 16, 3))
    R = np.zeros((2, 16, 16, 1))
    R[:, 3:11, 5:13] = 1.0
    out = gen(gt * (1 - R), R)
    comp = composite(out.refine, gt, R)
    hole, valid = content_loss(out.coarse, out.refine, gt, R)
    terms = {"hole": hole, "valid": valid, "adv": gan_loss_g(disc(comp, R)),
             "p": perceptual_loss(out.refine, comp, gt, FeatureExtractor()), "edge": edge_loss(out.refine, gt)}
    ad.backward(total_loss(terms, LossWeights())[0])
    dead = [p.name for p in gen.parameters() if not np.abs(p.grad).max() > 0]
    assert not dead
    ad.backward(gan_loss_d(disc(gt, R), disc(comp.detach(), R)))
    dead = [p.name for p in disc.parameters() if not np.abs(p.grad).max() > 0]
    assert not dead


def test_hypergraph_weights_get_gradient_in_refine():
    img, R = _inputs()
    gen = Generator(SMALL)
    ad.backward(ad.tsum(gen(img * (1 - R), R).refine))
    hg = {p.name: p for p in gen.parameters() if ".hg." in p.name}
    for key in ("w_psi", "w_lambda", "w_omega", "theta"):
        assert np.abs(hg[f"refine.hg.{key}"].grad).max() > 0, key


def test_parameter_names_unique():
    names = [p.name for p in Generator(SMALL).parameters() + Discriminator(SMALL).parameters()]
    assert len(names) == len(set(names))


def test_float32_network():
    cfg = NetworkConfig(base_channels=4, input_resolution=16, dtype="float32")
    img, R = _inputs()
    out = Generator(cfg)(img.astype(np.float32) * (1 - R.astype(np.float32)), R)
    assert out.refine.dtype == np.float32
