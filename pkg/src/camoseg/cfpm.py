"""Cross-level fusion and gated propagation.

Fusion merges two adjacent aggregated levels: the coarser feature is
upsampled to the finer grid, a shared spatial attention map is computed from
their sum, both features are residually enhanced by it, and a conv on the
sum of per-branch convs gives the fused output:

    A = sigmoid(conv3(up(hi) + lo))
    en_x = x + A * x
    fused = conv3(conv3(en_hi) + conv3(en_lo))

Propagation then blends the fused feature with the decoded feature from the
level above through a pixelwise two-way softmax gate:

    p1 = conv3(fused),  p2 = conv3(up(prev))
    (w1, w2) = softmax(conv1(cat(p1, p2)))   # w1 + w2 = 1 per pixel
    out = w1 * p1 + w2 * p2

All convs here are bare (no normalization) so the module computes exactly
the expressions above. The gate conv starts at zero, giving an even 0.5/0.5
blend before training.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import ConvBlock, upsample_to, zero_module


@dataclass
class GatePair:
    w1: torch.Tensor  # [B, 1, H, W], weight on the current level
    w2: torch.Tensor  # [B, 1, H, W], weight on the propagated level

    def validate(self, tol=1e-6):
        s = self.w1 + self.w2
        if (s - 1.0).abs().max().item() > tol:
            raise ValueError("gate weights do not sum to 1")
        if self.w1.min().item() < 0 or self.w2.min().item() < 0:
            raise ValueError("gate weights must be non-negative")
        return self


@dataclass
class PropagatedFeature:
    level: int
    feature: torch.Tensor
    gates: GatePair | None  # None for the top stage (fusion only)


class CrossLevelFusion(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.attn = ConvBlock(channels, channels, 3, norm=False, relu=False)
        self.post_hi = ConvBlock(channels, channels, 3, norm=False, relu=False)
        self.post_lo = ConvBlock(channels, channels, 3, norm=False, relu=False)
        self.merge = ConvBlock(channels, channels, 3, norm=False, relu=False)

    def forward(self, lo, hi):
        """``lo`` is the finer level, ``hi`` the coarser one."""
        hi = upsample_to(hi, lo.shape[-2:])
        attn = torch.sigmoid(self.attn(hi + lo))
        en_hi = hi + attn * hi
        en_lo = lo + attn * lo
        return self.merge(self.post_hi(en_hi) + self.post_lo(en_lo))


class GatedPropagation(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.cur = ConvBlock(channels, channels, 3, norm=False, relu=False)
        self.prev = ConvBlock(channels, channels, 3, norm=False, relu=False)
        self.gate = zero_module(nn.Conv2d(2 * channels, 2, 1))

    def forward(self, fused, prev):
        prev = upsample_to(prev, fused.shape[-2:])
        p1 = self.cur(fused)
        p2 = self.prev(prev)
        logits = self.gate(torch.cat([p1, p2], dim=1))
        weights = torch.softmax(logits, dim=1)
        w1, w2 = weights[:, 0:1], weights[:, 1:2]
        return w1 * p1 + w2 * p2, GatePair(w1=w1, w2=w2)


def fuse_levels(fusion, agg_lo, agg_hi):
    """Fuse adjacent aggregated levels (checks adjacency), finer grid out."""
    if agg_hi.level != agg_lo.level + 1:
        raise ValueError(f"levels must be adjacent, got {agg_lo.level} and {agg_hi.level}")
    return fusion(agg_lo.feature, agg_hi.feature)


def propagate_levels(prop, fused, level, prev: PropagatedFeature) -> PropagatedFeature:
    """Gate a fused feature against the decoded level above it."""
    if prev.level != level + 1:
        raise ValueError(f"previous feature must be level {level + 1}, got {prev.level}")
    if fused.shape[-3] != prev.feature.shape[-3]:
        raise ValueError(f"channel mismatch: {fused.shape[-3]} vs {prev.feature.shape[-3]}")
    out, gates = prop(fused, prev.feature)
    return PropagatedFeature(level=level, feature=out, gates=gates)


def fuse_top(fusion, agg5, agg4) -> PropagatedFeature:
    """Level 5-4 merge; the coarsest stage has nothing to propagate, so no gate."""
    if (agg5.level, agg4.level) != (5, 4):
        raise ValueError(f"expected levels (5, 4), got ({agg5.level}, {agg4.level})")
    return PropagatedFeature(level=4, feature=fuse_levels(fusion, agg4, agg5), gates=None)
