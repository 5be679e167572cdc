"""Detection and multi-supervision losses.

The detection loss is weighted BCE plus weighted IoU, where the per-pixel
weight emphasizes hard pixels near mask boundaries:

    w = 1 + 5 * |avgpool_31(t) - t|

Pooling uses valid-window averaging so a constant target gives w = 1
everywhere. Both terms consume pre-sigmoid logits; BCE uses the numerically
stable logit form. The total objective adds the boundary edge loss and one
detection term per side output.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .bgm import edge_loss

WEIGHT_KERNEL = 31
WEIGHT_SCALE = 5.0


@dataclass
class LossBreakdown:
    edge: float
    det_per_side: list  # one detached scalar per side output, finest first
    total: torch.Tensor  # graph-connected scalar

    def validate(self, tol=1e-6):
        recomposed = self.edge + sum(self.det_per_side)
        if abs(float(self.total) - recomposed) > tol:
            raise ValueError("loss breakdown does not sum to total")
        return self


def _check_pair(logits, target):
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(target.shape)}")


def _as_batch(x):
    return x[None] if x.dim() == 3 else x


def hard_pixel_weight(target, kernel_size=WEIGHT_KERNEL, scale=WEIGHT_SCALE):
    """1 + scale * |local mean - target|, valid-window local mean."""
    local = F.avg_pool2d(target, kernel_size, stride=1, padding=kernel_size // 2,
                         count_include_pad=False)
    return 1.0 + scale * (local - target).abs()


def weighted_bce(logits, target, weight=None):
    """Hard-pixel-weighted BCE, normalized by the weight mass per image."""
    _check_pair(logits, target)
    logits, target = _as_batch(logits), _as_batch(target.to(logits.dtype))
    if weight is None:
        weight = hard_pixel_weight(target)
    bce = F.binary_cross_entropy_with_logits(logits, target, reduction="none")
    per_image = (weight * bce).sum(dim=(1, 2, 3)) / weight.sum(dim=(1, 2, 3))
    return per_image.mean()


def weighted_iou(logits, target, weight=None):
    """1 - (intersection + 1) / (union + 1) with hard-pixel weighting."""
    _check_pair(logits, target)
    logits, target = _as_batch(logits), _as_batch(target.to(logits.dtype))
    if weight is None:
        weight = hard_pixel_weight(target)
    p = torch.sigmoid(logits)
    inter = (weight * p * target).sum(dim=(1, 2, 3))
    union = (weight * (p + target - p * target)).sum(dim=(1, 2, 3))
    per_image = 1.0 - (inter + 1.0) / (union + 1.0)
    return per_image.mean()


def detection_loss(logits, target):
    _check_pair(logits, target)
    b_logits, b_target = _as_batch(logits), _as_batch(target.to(logits.dtype))
    weight = hard_pixel_weight(b_target)
    return weighted_bce(b_logits, b_target, weight) + weighted_iou(b_logits, b_target, weight)


def total_loss(outputs, mask, edge_gt) -> LossBreakdown:
    """Edge loss plus a detection loss per side output, all at mask resolution.

    ``outputs`` is the network bundle carrying ``raw_logits`` (finest first)
    and the ``boundary`` probability map.
    """
    mask = _as_batch(mask)
    edge_gt = _as_batch(edge_gt)
    if outputs.boundary is None:
        e = mask.new_zeros(())
    else:
        e = edge_loss(_as_batch(outputs.boundary), edge_gt.to(outputs.boundary.dtype))
    sides = [detection_loss(_as_batch(s), mask) for s in outputs.raw_logits]
    total = e + sum(sides)
    return LossBreakdown(edge=float(e.detach()), det_per_side=[float(s.detach()) for s in sides],
                         total=total)
