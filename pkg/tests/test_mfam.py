import pytest
import torch

from camoseg.blocks import zero_module
from camoseg.mfam import AggregatedFeature, MultiScaleAggregation, aggregate_level
from oracles import mfam_oracle


def make_module(in_ch=24, out_ch=16, seed=0):
    torch.manual_seed(seed)
    return MultiScaleAggregation(in_ch, out_ch, norm=False)


class TestShapes:
    def test_output_channels_and_size(self):
        module = MultiScaleAggregation(256, 32)
        out = module(torch.rand(1, 256, 44, 44))
        assert out.shape == (1, 32, 44, 44)

    def test_spatial_preserved_all_levels(self):
        module = make_module()
        for size in ((16, 16), (8, 8), (4, 4), (2, 2), (11, 7)):
            out = module(torch.rand(1, 24, *size))
            assert out.shape[-2:] == size


class TestAlgebra:
    def test_zero_input_zero_bias_gives_zero(self):
        module = make_module()
        for block in (module.reduce1, module.reduce2, module.reduce3, module.branch3,
                      module.branch5, module.mix3, module.mix5, module.fuse):
            torch.nn.init.zeros_(block.conv.bias)
        out = module(torch.zeros(1, 24, 8, 8))
        assert torch.allclose(out, torch.zeros_like(out))

    def test_all_zero_weights_give_zero(self):
        module = zero_module(make_module())
        out = module(torch.rand(1, 24, 8, 8))
        assert torch.allclose(out, torch.zeros_like(out))

    def test_matches_straight_line_oracle(self):
        for seed in range(10):
            module = make_module(seed=seed)
            torch.manual_seed(100 + seed)
            x = torch.rand(1, 24, 8, 8)
            with torch.no_grad():
                got = module(x)
                want = mfam_oracle(module, x)
            assert (got - want).abs().max().item() < 1e-5


class TestWrapper:
    def test_aggregate_level_tags(self):
        module = make_module()
        agg = aggregate_level(module, torch.rand(1, 24, 8, 8), level=3)
        assert isinstance(agg, AggregatedFeature)
        assert agg.level == 3
        assert agg.feature.shape == (1, 16, 8, 8)

    def test_level_range_checked(self):
        module = make_module()
        with pytest.raises(ValueError):
            aggregate_level(module, torch.rand(1, 24, 8, 8), level=0)
        with pytest.raises(ValueError):
            aggregate_level(module, torch.rand(1, 24, 8, 8), level=6)
