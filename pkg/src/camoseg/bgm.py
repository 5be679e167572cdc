"""Boundary guidance.

The two finest encoder levels (same spatial size) are each passed through a
3x3 conv, summed, and refined by another 3x3 conv to produce a guidance
feature. A 1-channel head on the guidance feature gives the predicted
boundary map, supervised against the ground-truth object edge with plain
per-pixel BCE.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import ConvBlock, upsample_to

EDGE_EPS = 1e-7


@dataclass
class BoundaryBundle:
    guidance: torch.Tensor  # [B, C, H/4, W/4]
    logits: torch.Tensor    # [B, 1, H/4, W/4]
    boundary: torch.Tensor  # [B, 1, H, W], sigmoid probabilities


class BoundaryGuidance(nn.Module):
    def __init__(self, in_channels_low, in_channels_high, out_channels=32, norm=True):
        super().__init__()
        self.reduce_low = ConvBlock(in_channels_low, out_channels, 3, norm=norm)
        self.reduce_high = ConvBlock(in_channels_high, out_channels, 3, norm=norm)
        self.refine = ConvBlock(out_channels, out_channels, 3, norm=norm)
        self.head = nn.Conv2d(out_channels, 1, 3, padding=1)

    def forward(self, f1, f2, out_size) -> BoundaryBundle:
        if f1.shape[-2:] != f2.shape[-2:]:
            raise ValueError(
                f"boundary inputs must share spatial size, got {tuple(f1.shape[-2:])} "
                f"vs {tuple(f2.shape[-2:])}")
        guidance = self.refine(self.reduce_low(f1) + self.reduce_high(f2))
        logits = self.head(guidance)
        boundary = torch.sigmoid(upsample_to(logits, out_size))
        return BoundaryBundle(guidance=guidance, logits=logits, boundary=boundary)


def edge_loss(boundary, edge_gt):
    """Mean per-pixel BCE between a probability map and the binary edge map.

    Computed in probability space with clamping, so callers pass the sigmoid
    output rather than logits.
    """
    if boundary.shape != edge_gt.shape:
        raise ValueError(f"shape mismatch: {tuple(boundary.shape)} vs {tuple(edge_gt.shape)}")
    p = boundary.clamp(EDGE_EPS, 1.0 - EDGE_EPS)
    t = edge_gt.to(p.dtype)
    return -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()
