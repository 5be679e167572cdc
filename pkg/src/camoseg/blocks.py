"""Shared convolution building blocks for the decoder modules."""

import torch.nn as nn
import torch.nn.functional as F


class ConvBlock(nn.Module):
    """3x3/5x5/1x1 convolution with optional BatchNorm and ReLU.

    Padding always preserves spatial resolution. With ``norm=False`` the
    block degenerates to a plain biased convolution (plus optional ReLU),
    which is the form the equation-oracle tests check against.
    """

    def __init__(self, in_channels, out_channels, kernel_size=3, norm=True, relu=True):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size,
                              padding=kernel_size // 2, bias=not norm)
        self.bn = nn.BatchNorm2d(out_channels) if norm else None
        self.relu = relu

    def forward(self, x):
        x = self.conv(x)
        if self.bn is not None:
            x = self.bn(x)
        if self.relu:
            x = F.relu(x, inplace=True)
        return x


def upsample_to(x, size):
    """Bilinear resize to ``size`` (H, W); identity when already there."""
    if x.shape[-2:] == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def zero_module(module):
    """Zero every parameter in place (used for gate initialization)."""
    for p in module.parameters():
        nn.init.zeros_(p)
    return module
