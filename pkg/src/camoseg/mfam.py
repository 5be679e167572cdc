"""Multi-scale feature aggregation.

Each encoder level is reduced by three parallel 1x1 convs. Two of the
reduced streams are refined at 3x3 and 5x5 receptive fields, cross-combined
multiplicatively and additively, and the third stream is kept as a residual:

    a = relu(conv3(f1)),  b = relu(conv5(f2))
    m3 = relu(conv3(a + b)),  m5 = relu(conv5(a + b))
    out = relu(conv3(m3 * m5 + a + b)) + f3

With ``norm=False`` every conv is a bare convolution, which is the form the
closed-form reference computations check against.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import ConvBlock


@dataclass
class AggregatedFeature:
    level: int
    feature: torch.Tensor  # [B, C, H_l, W_l]


class MultiScaleAggregation(nn.Module):
    def __init__(self, in_channels, out_channels, norm=True):
        super().__init__()
        self.reduce1 = ConvBlock(in_channels, out_channels, 1, norm=norm, relu=False)
        self.reduce2 = ConvBlock(in_channels, out_channels, 1, norm=norm, relu=False)
        self.reduce3 = ConvBlock(in_channels, out_channels, 1, norm=norm, relu=False)
        self.branch3 = ConvBlock(out_channels, out_channels, 3, norm=norm)
        self.branch5 = ConvBlock(out_channels, out_channels, 5, norm=norm)
        self.mix3 = ConvBlock(out_channels, out_channels, 3, norm=norm)
        self.mix5 = ConvBlock(out_channels, out_channels, 5, norm=norm)
        self.fuse = ConvBlock(out_channels, out_channels, 3, norm=norm)

    def forward(self, x):
        f1 = self.reduce1(x)
        f2 = self.reduce2(x)
        f3 = self.reduce3(x)
        a = self.branch3(f1)
        b = self.branch5(f2)
        m3 = self.mix3(a + b)
        m5 = self.mix5(a + b)
        return self.fuse(m3 * m5 + a + b) + f3


def aggregate_level(module, feature, level) -> AggregatedFeature:
    """Run an aggregation block on one pyramid level, tagged with its index."""
    if not 1 <= level <= 5:
        raise ValueError(f"level must be 1..5, got {level}")
    out = module(feature)
    if out.shape[-2:] != feature.shape[-2:]:
        raise ValueError("aggregation must preserve spatial size")
    return AggregatedFeature(level=level, feature=out)
