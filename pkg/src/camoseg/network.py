"""Full detection network.

Pipeline: encoder pyramid -> boundary guidance on the two finest levels ->
per-level multi-scale aggregation -> top-down decoder (fusion of adjacent
levels, then gated propagation of the decoded feature from above). Each of
the four decoder stages receives the boundary guidance feature resized to
its grid, and emits a 1-channel side logit upsampled to input resolution.
The finest side output is the prediction map.

Every structural block can be toggled off through ``AblationConfig`` to
reproduce the reduced baselines (plain conv reduction instead of
aggregation, concat+conv merging instead of fusion, no gating, no boundary
branch).
"""

from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
from PIL import Image

from .backbone import BackboneSpec, build_backbone, backbone_forward
from .bgm import BoundaryGuidance
from .blocks import ConvBlock, upsample_to
from .cfpm import CrossLevelFusion, GatedPropagation
from .mfam import MultiScaleAggregation

DEFAULT_MID_CHANNELS = 32        # tiny surrogate decoder width
PAPER_MID_CHANNELS = 64          # res2net50-scale decoder width


def default_mid_channels(variant):
    return PAPER_MID_CHANNELS if variant == "res2net50" else DEFAULT_MID_CHANNELS


@dataclass
class AblationConfig:
    use_mfam: bool = True
    use_fusion: bool = True
    use_propagation: bool = True
    use_bgm: bool = True

    def __post_init__(self):
        if self.use_propagation and not self.use_fusion:
            raise ValueError("propagation requires fusion")

    @classmethod
    def full(cls):
        return cls(True, True, True, True)


# named variants of the component study, from bare decoder to full model
VARIANTS = {
    "A3": AblationConfig(False, False, False, False),
    "B1": AblationConfig(True, False, False, False),
    "C1": AblationConfig(True, True, False, False),
    "C2": AblationConfig(True, True, True, False),
    "E": AblationConfig(True, True, True, True),
}


@dataclass
class SideOutputs:
    maps: list           # 4 probability maps [B, 1, H, W], finest first
    raw_logits: list     # the same 4 maps pre-sigmoid
    boundary: torch.Tensor | None  # [B, 1, H, W] probabilities, None without BGM

    @property
    def prediction(self):
        return self.maps[0]

    def validate(self):
        if len(self.maps) != 4 or len(self.raw_logits) != 4:
            raise ValueError("expected 4 side outputs")
        size = tuple(self.maps[0].shape[-2:])
        for m in self.maps + self.raw_logits:
            if tuple(m.shape[-2:]) != size:
                raise ValueError("side outputs must share input resolution")
        if self.boundary is not None and tuple(self.boundary.shape[-2:]) != size:
            raise ValueError("boundary map must share input resolution")
        for m in self.maps:
            if m.min().item() < 0 or m.max().item() > 1:
                raise ValueError("probability maps must lie in (0, 1)")
        return self


class CamoNet(nn.Module):
    def __init__(self, backbone: BackboneSpec | None = None, mid_channels=None,
                 ablation: AblationConfig | None = None, norm=True):
        super().__init__()
        self.spec = backbone or BackboneSpec.tiny()
        self.ablation = ablation or AblationConfig.full()
        self.mid_channels = mid_channels = (mid_channels if mid_channels is not None
                                            else default_mid_channels(self.spec.variant))
        self.encoder = build_backbone(self.spec)
        ch = self.spec.channels
        c = mid_channels

        if self.ablation.use_mfam:
            self.aggregate = nn.ModuleList(
                [MultiScaleAggregation(ch[i], c, norm=norm) for i in range(5)])
        else:
            self.aggregate = nn.ModuleList(
                [ConvBlock(ch[i], c, 3, norm=norm) for i in range(5)])

        if self.ablation.use_fusion:
            self.fuse = nn.ModuleList([CrossLevelFusion(c) for _ in range(4)])
        else:
            self.fuse = nn.ModuleList([ConvBlock(2 * c, c, 3, norm=norm) for _ in range(4)])
        if self.ablation.use_propagation:
            self.propagate = nn.ModuleList([GatedPropagation(c) for _ in range(3)])

        if self.ablation.use_bgm:
            self.boundary = BoundaryGuidance(ch[0], ch[1], c, norm=norm)
            self.guide = nn.ModuleList([ConvBlock(c, c, 3, norm=norm) for _ in range(4)])

        self.heads = nn.ModuleList([nn.Conv2d(c, 1, 3, padding=1) for _ in range(4)])

    def _merge(self, idx, lo, hi):
        """Combine a finer lateral feature with the coarser one above it."""
        if self.ablation.use_fusion:
            return self.fuse[idx](lo, hi)
        hi = upsample_to(hi, lo.shape[-2:])
        return self.fuse[idx](torch.cat([hi, lo], dim=1))

    def forward(self, image) -> SideOutputs:
        if image.dim() == 3:
            image = image[None]
        size = image.shape[-2:]
        pyramid = backbone_forward(self.encoder, image)
        f = pyramid.levels

        bundle = None
        if self.ablation.use_bgm:
            bundle = self.boundary(f[0], f[1], size)

        agg = [self.aggregate[i](f[i]) for i in range(5)]

        # decoder stages, coarsest merge first: (5,4) -> (4,3) -> (3,2) -> (2,1)
        decoded = [self._merge(0, agg[3], agg[4])]
        for i in range(1, 4):
            merged = self._merge(i, agg[3 - i], agg[4 - i])
            if self.ablation.use_propagation:
                merged, _ = self.propagate[i - 1](merged, decoded[-1])
            decoded.append(merged)

        logits = []
        for i, d in enumerate(decoded):
            if bundle is not None:
                d = d + self.guide[i](upsample_to(bundle.guidance, d.shape[-2:]))
            logits.append(upsample_to(self.heads[i](d), size))
        logits = logits[::-1]  # finest first

        return SideOutputs(
            maps=[torch.sigmoid(s) for s in logits],
            raw_logits=logits,
            boundary=None if bundle is None else bundle.boundary,
        )


def count_parameters(module) -> int:
    return sum(p.numel() for p in module.parameters())


def predict_image(model, image_path, input_size=352, threshold=None, device="cpu"):
    """Predict a map for one image file at its original resolution.

    Returns ``(prediction, mask)`` where ``prediction`` is a float32 [H, W]
    array in (0, 1) and ``mask`` is a binary uint8 array or None when no
    threshold is given.
    """
    from .data import load_image

    with Image.open(image_path) as im:
        orig_w, orig_h = im.size
    image = load_image(image_path, input_size)
    model.eval()
    with torch.no_grad():
        out = model(image[None].to(device))
        pred = upsample_to(out.prediction, (orig_h, orig_w))[0, 0].cpu()
    pred = pred.numpy().astype(np.float32)
    mask = None
    if threshold is not None:
        mask = (pred >= float(threshold)).astype(np.uint8)
    return pred, mask


def save_prediction_png(pred, path):
    """Write a [H, W] map in [0, 1] as 8-bit grayscale."""
    arr = np.clip(np.asarray(pred, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8), mode="L").save(path)


def save_checkpoint(path, model, optimizer=None, epoch=0, config_hash="", metrics=None,
                    rng=None, config_dict=None):
    """Single-file archive: weights + metadata + RNG states for resumption."""
    payload = {
        "model": model.state_dict(),
        "optimizer": None if optimizer is None else optimizer.state_dict(),
        "epoch": int(epoch),
        "config_hash": config_hash,
        "config": dict(config_dict or {}),
        "metrics": dict(metrics or {}),
        "ablation": asdict(model.ablation),
        "backbone": {"variant": model.spec.variant, "channels": list(model.spec.channels),
                     "seed": model.spec.seed},
        "mid_channels": model.mid_channels,
        "rng": rng or {},
        "torch_rng": torch.get_rng_state(),
    }
    torch.save(payload, path)


def load_checkpoint(path, model=None, optimizer=None):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if model is not None:
        model.load_state_dict(payload["model"])
    if optimizer is not None and payload.get("optimizer") is not None:
        optimizer.load_state_dict(payload["optimizer"])
    return payload


def model_from_checkpoint(path, device="cpu"):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    spec = BackboneSpec(variant=payload["backbone"]["variant"],
                        channels=tuple(payload["backbone"]["channels"]),
                        seed=payload["backbone"].get("seed", 0))
    model = CamoNet(backbone=spec, mid_channels=payload["mid_channels"],
                    ablation=AblationConfig(**payload["ablation"]))
    model.load_state_dict(payload["model"])
    return model.to(device), payload
