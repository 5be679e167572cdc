"""Encoder feature pyramids.

Two variants share one contract: five feature levels where level 1 sits at
H/4 x W/4 and level i (i > 1) at H/2^i x W/2^i, with non-decreasing channel
counts. The res2net50 variant follows the standard bottleneck channel plan
(64, 256, 512, 1024, 2048); the tiny variant is a fixed-seed surrogate for
desk-scale tests.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

RES2NET50_CHANNELS = (64, 256, 512, 1024, 2048)
TINY_CHANNELS = (16, 32, 64, 128, 256)

# per-channel input normalization (ImageNet statistics), applied here so
# stored samples stay in [0, 1]
_NORM_MEAN = (0.485, 0.456, 0.406)
_NORM_STD = (0.229, 0.224, 0.225)


class WeightShapeError(ValueError):
    """A pretrained tensor does not match the model parameter shape."""


@dataclass
class BackboneSpec:
    variant: str = "tiny"  # "res2net50" | "tiny"
    channels: tuple = TINY_CHANNELS
    pretrained: Path | None = None
    seed: int = 0  # init seed for the tiny surrogate

    def __post_init__(self):
        if self.variant not in ("res2net50", "tiny"):
            raise ValueError(f"unknown backbone variant: {self.variant!r}")
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != 5 or any(c <= 0 for c in self.channels):
            raise ValueError("channels must be 5 positive ints")

    @classmethod
    def tiny(cls, seed=0):
        return cls(variant="tiny", channels=TINY_CHANNELS, seed=seed)

    @classmethod
    def res2net50(cls, pretrained=None):
        return cls(variant="res2net50", channels=RES2NET50_CHANNELS, pretrained=pretrained)


@dataclass
class FeaturePyramid:
    levels: list  # five tensors [B, C_i, H_i, W_i]
    input_size: tuple  # (H, W)

    def validate(self):
        h, w = self.input_size
        if len(self.levels) != 5:
            raise ValueError("pyramid must have 5 levels")
        expect = [(h // 4, w // 4)] + [(h // 2 ** i, w // 2 ** i) for i in range(2, 6)]
        for i, (f, size) in enumerate(zip(self.levels, expect), start=1):
            if tuple(f.shape[-2:]) != size:
                raise ValueError(f"level {i} is {tuple(f.shape[-2:])}, expected {size}")
        chans = [f.shape[-3] for f in self.levels]
        if chans != sorted(chans):
            raise ValueError(f"channel counts must be non-decreasing, got {chans}")
        return self


class _InputNorm(nn.Module):
    def __init__(self):
        super().__init__()
        self.register_buffer("mean", torch.tensor(_NORM_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_NORM_STD).view(1, 3, 1, 1))

    def forward(self, x):
        return (x - self.mean) / self.std


class TinyEncoder(nn.Module):
    """Five stride-matched conv stages; random init with a fixed seed."""

    def __init__(self, channels=TINY_CHANNELS, seed=0):
        super().__init__()
        self.channels = tuple(channels)
        c1, c2, c3, c4, c5 = self.channels
        self.norm = _InputNorm()
        self.stage1 = nn.Sequential(  # H/4
            nn.Conv2d(3, c1, 3, stride=2, padding=1), nn.BatchNorm2d(c1), nn.ReLU(inplace=True),
            nn.Conv2d(c1, c1, 3, stride=2, padding=1), nn.BatchNorm2d(c1), nn.ReLU(inplace=True),
        )
        self.stage2 = nn.Sequential(  # H/4
            nn.Conv2d(c1, c2, 3, padding=1), nn.BatchNorm2d(c2), nn.ReLU(inplace=True))
        self.stage3 = nn.Sequential(  # H/8
            nn.Conv2d(c2, c3, 3, stride=2, padding=1), nn.BatchNorm2d(c3), nn.ReLU(inplace=True))
        self.stage4 = nn.Sequential(  # H/16
            nn.Conv2d(c3, c4, 3, stride=2, padding=1), nn.BatchNorm2d(c4), nn.ReLU(inplace=True))
        self.stage5 = nn.Sequential(  # H/32
            nn.Conv2d(c4, c5, 3, stride=2, padding=1), nn.BatchNorm2d(c5), nn.ReLU(inplace=True))
        self._seed_init(seed)

    def _seed_init(self, seed):
        gen = torch.Generator().manual_seed(seed)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, generator=gen, nonlinearity="relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)

    def forward(self, x):
        x = self.norm(x)
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        f5 = self.stage5(f4)
        return f1, f2, f3, f4, f5


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, in_ch, mid_ch, stride=1, downsample=None):
        super().__init__()
        out_ch = mid_ch * self.expansion
        self.conv1 = nn.Conv2d(in_ch, mid_ch, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid_ch)
        self.conv2 = nn.Conv2d(mid_ch, mid_ch, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(mid_ch)
        self.conv3 = nn.Conv2d(mid_ch, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


class Res2Net50Shaped(nn.Module):
    """Bottleneck encoder matching the res2net50 channel/resolution contract.

    The internal scale-split of the original blocks is not reproduced; only
    the five-level output contract matters downstream.
    """

    def __init__(self, channels=RES2NET50_CHANNELS):
        super().__init__()
        if tuple(channels) != RES2NET50_CHANNELS:
            raise ValueError(f"res2net50 variant is fixed to channels {RES2NET50_CHANNELS}")
        self.channels = RES2NET50_CHANNELS
        self.norm = _InputNorm()
        self.conv1 = nn.Conv2d(3, 64, 7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(64)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)
        self.layer1 = self._make_layer(64, 64, 3, stride=1)
        self.layer2 = self._make_layer(256, 128, 4, stride=2)
        self.layer3 = self._make_layer(512, 256, 6, stride=2)
        self.layer4 = self._make_layer(1024, 512, 3, stride=2)

    @staticmethod
    def _make_layer(in_ch, mid_ch, blocks, stride):
        out_ch = mid_ch * Bottleneck.expansion
        down = None
        if stride != 1 or in_ch != out_ch:
            down = nn.Sequential(nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                                 nn.BatchNorm2d(out_ch))
        layers = [Bottleneck(in_ch, mid_ch, stride, down)]
        layers += [Bottleneck(out_ch, mid_ch) for _ in range(blocks - 1)]
        return nn.Sequential(*layers)

    def forward(self, x):
        x = self.norm(x)
        f1 = self.maxpool(self.relu(self.bn1(self.conv1(x))))  # 64, H/4
        f2 = self.layer1(f1)   # 256, H/4
        f3 = self.layer2(f2)   # 512, H/8
        f4 = self.layer3(f3)   # 1024, H/16
        f5 = self.layer4(f4)   # 2048, H/32
        return f1, f2, f3, f4, f5


def build_backbone(spec: BackboneSpec) -> nn.Module:
    if spec.variant == "tiny":
        enc = TinyEncoder(spec.channels, seed=spec.seed)
    else:
        enc = Res2Net50Shaped(spec.channels)
    if spec.pretrained is not None:
        load_pretrained(enc, spec.pretrained)
    return enc


def backbone_forward(encoder, image) -> FeaturePyramid:
    """Run the encoder and wrap/validate the five-level pyramid.

    ``image`` is [3, H, W] or [B, 3, H, W] with H, W divisible by 32.
    """
    if image.dim() == 3:
        image = image[None]
    h, w = image.shape[-2:]
    if h % 32 or w % 32:
        raise ValueError(f"input size {h}x{w} not divisible by 32")
    levels = list(encoder(image))
    return FeaturePyramid(levels=levels, input_size=(h, w)).validate()


def state_fingerprint(module) -> str:
    """Hex digest over all parameters/buffers in name order."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def load_pretrained(encoder, path):
    """Load a name->tensor archive into the encoder, shape-checked.

    Returns the fingerprint of the loaded weights for reproducibility logs.
    """
    path = Path(path)
    state = torch.load(path, map_location="cpu", weights_only=False)
    if isinstance(state, dict) and "model" in state and isinstance(state["model"], dict):
        state = state["model"]
    own = encoder.state_dict()
    for name, tensor in state.items():
        if name in own and tuple(own[name].shape) != tuple(tensor.shape):
            raise WeightShapeError(
                f"parameter {name}: checkpoint {tuple(tensor.shape)} vs model {tuple(own[name].shape)}")
    missing = [n for n in own if n not in state]
    if missing:
        raise WeightShapeError(f"parameter {missing[0]}: missing from weight file")
    encoder.load_state_dict(state)
    fp = state_fingerprint(encoder)
    import logging
    logging.getLogger(__name__).info("loaded pretrained weights %s (fingerprint %s)", path, fp)
    return fp
