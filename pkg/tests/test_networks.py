import numpy as np
import pytest
import torch

from ctxrestore.networks import (
    DiscriminatorMap,
    EncoderDecoderGenerator,
    MultiScaleContextDiscriminator,
    discriminator_forward,
    generator_forward,
)


class TestGenerator:
    def test_restore_shape_and_range(self):
        g = EncoderDecoderGenerator(seed=0)
        out = g(torch.rand(1, 3, 64, 64)).detach()
        assert out.shape == (1, 3, 64, 64)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_shape_law_on_awkward_dims(self):
        g = EncoderDecoderGenerator(seed=0)
        for h, w in ((33, 47), (100, 36), (64, 129)):
            assert g(torch.rand(1, 3, h, w)).shape == (1, 3, h, w)

    def test_resize_target_dims(self):
        g = EncoderDecoderGenerator(seed=0)
        out = g(torch.rand(1, 3, 64, 64), target_hw=(128, 64))
        assert out.shape == (1, 3, 128, 64)

    def test_seeded_construction_is_bitwise_deterministic(self):
        x = torch.rand(1, 3, 64, 64)
        y1 = EncoderDecoderGenerator(seed=7)(x)
        y2 = EncoderDecoderGenerator(seed=7)(x)
        assert torch.equal(y1, y2)

    def test_target_below_minimum_lists_nearest(self):
        g = EncoderDecoderGenerator(seed=0)
        with pytest.raises(ValueError, match=r"nearest valid dims are \(32, 48\)"):
            g(torch.rand(1, 3, 64, 64), target_hw=(16, 48))

    def test_input_below_minimum(self):
        g = EncoderDecoderGenerator(seed=0)
        with pytest.raises(ValueError, match="minimum side"):
            g(torch.rand(1, 3, 16, 64))

    def test_every_parameter_gets_gradient_at_seed_0(self):
        torch.manual_seed(0)
        g = EncoderDecoderGenerator(seed=0)
        target = torch.rand(1, 3, 64, 64)
        loss = ((g(torch.rand(1, 3, 64, 64)) - target) ** 2).mean()
        loss.backward()
        dead = [name for name, p in g.named_parameters()
                if p.grad is None or float(p.grad.abs().max()) == 0.0]
        assert dead == []

    def test_no_skip_connections(self):
        # Encoder output is the only path to the decoder: zeroing the
        # bottleneck must make the output independent of the input.
        g = EncoderDecoderGenerator(seed=0)

        def forward_with_zeroed_bottleneck(x):
            out = x
            for stage in g.encoder:
                out = stage(out)
            out = out * 0.0
            from ctxrestore.networks import _decoder_sizes
            for stage, size in zip(g.decoder, _decoder_sizes((64, 64))):
                out = torch.nn.functional.interpolate(out, size=size, mode="nearest")
                out = stage(out)
            return g.head(out)

        a = forward_with_zeroed_bottleneck(torch.rand(1, 3, 64, 64))
        b = forward_with_zeroed_bottleneck(torch.rand(1, 3, 64, 64))
        assert torch.equal(a, b)

    def test_generator_forward_numpy_wrapper(self, texture64):
        g = EncoderDecoderGenerator(seed=0)
        out = generator_forward(g, texture64)
        assert isinstance(out, np.ndarray) and out.shape == (64, 64, 3)
        again = generator_forward(g, texture64)
        assert np.array_equal(out, again)

    def test_mask_channel_input(self):
        g = EncoderDecoderGenerator(in_channels=4, seed=0)
        out = g(torch.rand(1, 4, 64, 64))
        assert out.shape == (1, 3, 64, 64)


class TestDiscriminator:
    def test_single_scale_map(self):
        d = MultiScaleContextDiscriminator(in_channels=512, scales=1, seed=0)
        dm = d(torch.randn(1, 512, 8, 8))
        assert dm.scales == 1
        assert dm.weights == (1.0,)
        h, w = dm.maps[0].shape
        assert h <= 8 and w <= 8

    def test_three_scale_pooling_arithmetic(self):
        d = MultiScaleContextDiscriminator(in_channels=512, scales=3, seed=0)
        dm = d(torch.randn(1, 512, 32, 32))
        # scorer halves once; pooled inputs are 32/16/8
        assert [tuple(m.shape) for m in dm.maps] == [(16, 16), (8, 8), (4, 4)]
        assert sum(dm.weights) == pytest.approx(1.0)

    def test_field_too_small_for_scales(self):
        d = MultiScaleContextDiscriminator(in_channels=512, scales=3, seed=0)
        with pytest.raises(ValueError, match="reduce discriminator_scales"):
            d(torch.randn(1, 512, 4, 4))

    def test_operates_on_context_channels_not_pixels(self):
        d = MultiScaleContextDiscriminator(in_channels=512, scales=1, seed=0)
        assert d.in_channels == 512
        with pytest.raises(ValueError):
            d(torch.randn(1, 3, 64, 64))

    def test_scale_weight_validation(self):
        with pytest.raises(ValueError):
            MultiScaleContextDiscriminator(scales=2, scale_weights=[1.0])
        with pytest.raises(ValueError):
            DiscriminatorMap(maps=[torch.zeros(2, 2)], weights=(0.5,))

    def test_discriminator_forward_on_field(self, backbone, texture64):
        field = backbone.extract(texture64, ["conv4_2"])
        d = MultiScaleContextDiscriminator(in_channels=512, scales=2, seed=0)
        dm = discriminator_forward(d, field)
        assert dm.scales == 2

    def test_independent_weights_per_scale(self):
        d = MultiScaleContextDiscriminator(in_channels=512, scales=2, seed=0)
        p0 = list(d.scorers[0].parameters())[0]
        p1 = list(d.scorers[1].parameters())[0]
        assert not torch.equal(p0, p1)
