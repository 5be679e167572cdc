"""Dataset scanning, sample loading, edge ground truth, and augmentation.

Expected directory layout::

    <root>/Imgs/*.jpg|*.png     RGB images
    <root>/GT/*.png             8-bit grayscale masks (0 background, 255 object)

Images and masks are paired by filename stem. Loaded samples carry the
image in [0, 1], the binarized mask, and a one-pixel-wide edge map derived
from the mask. Channel normalization happens inside the backbone, not here.
"""

import logging
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy import ndimage
from torchvision.transforms import InterpolationMode
from torchvision.transforms import functional as TF

log = logging.getLogger(__name__)

IMG_EXTENSIONS = (".jpg", ".jpeg", ".png")

# scale jitter ratios used by the training augmentation
SCALE_RATIOS = (0.75, 1.0, 1.25)
MAX_ROTATE_DEG = 15.0


class DatasetLayoutError(Exception):
    """The dataset root does not follow the Imgs/ + GT/ convention."""


class SampleLoadError(Exception):
    """A sample file exists but cannot be decoded."""

    def __init__(self, path, reason):
        super().__init__(f"cannot load {path}: {reason}")
        self.path = Path(path)


@dataclass
class Sample:
    image: torch.Tensor  # [3, H, W] float32 in [0, 1]
    mask: torch.Tensor   # [1, H, W] float32 in {0, 1}
    edge: torch.Tensor   # [1, H, W] float32 in {0, 1}
    id: str

    def validate(self):
        if self.image.shape[-2:] != self.mask.shape[-2:] or self.mask.shape != self.edge.shape:
            raise ValueError(f"sample {self.id}: image/mask/edge spatial sizes differ")
        if self.image.min() < 0 or self.image.max() > 1:
            raise ValueError(f"sample {self.id}: image values outside [0, 1]")
        for name, t in (("mask", self.mask), ("edge", self.edge)):
            vals = torch.unique(t)
            if not torch.all((vals == 0) | (vals == 1)):
                raise ValueError(f"sample {self.id}: {name} is not binary")
        return self


@dataclass
class DatasetManifest:
    root: Path
    pairs: list  # [(image_path, mask_path), ...] sorted by stem
    split: str = "train"

    def __len__(self):
        return len(self.pairs)

    def save(self, path):
        """Export as line-delimited ``image-path<TAB>mask-path``."""
        path = Path(path)
        lines = [f"{img}\t{msk}" for img, msk in self.pairs]
        path.write_text("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, path, root=None, split="train"):
        pairs = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            img, msk = line.split("\t")
            pairs.append((Path(img), Path(msk)))
        return cls(root=Path(root) if root else Path(path).parent, pairs=pairs, split=split)


def scan_dataset(root, split="train"):
    """Match Imgs/ and GT/ files by stem into a sorted manifest.

    Unmatched images are skipped with a warning; a missing directory or an
    empty match set is fatal.
    """
    root = Path(root)
    img_dir = root / "Imgs"
    gt_dir = root / "GT"
    for d in (img_dir, gt_dir):
        if not d.is_dir():
            raise DatasetLayoutError(f"missing directory: {d}")

    masks = {}
    for p in sorted(gt_dir.iterdir()):
        if p.suffix.lower() == ".png":
            masks[p.stem] = p

    pairs = []
    for p in sorted(img_dir.iterdir()):
        if p.suffix.lower() not in IMG_EXTENSIONS:
            continue
        stem = p.stem
        if stem not in masks:
            warnings.warn(f"no mask for image {p.name}, skipping")
            continue
        pairs.append((p, masks[stem]))

    if not pairs:
        raise DatasetLayoutError(f"no pairs found under {root}")
    pairs.sort(key=lambda pair: pair[0].stem)
    return DatasetManifest(root=root, pairs=pairs, split=split)


def extract_edge_gt(mask):
    """One-pixel-wide boundary of a binary mask.

    A pixel is an edge pixel iff it is foreground and at least one of its
    8-neighbors inside the frame is background. A full-foreground mask has
    no edges (out-of-frame is treated as foreground).
    """
    is_tensor = isinstance(mask, torch.Tensor)
    arr = mask.detach().cpu().numpy() if is_tensor else np.asarray(mask)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("extract_edge_gt expects a binary mask")
    squeezed = arr.reshape(arr.shape[-2:])
    fg = squeezed > 0.5
    eroded = ndimage.binary_erosion(fg, structure=np.ones((3, 3), bool), border_value=1)
    edge = (fg & ~eroded).astype(np.float32).reshape(arr.shape)
    if is_tensor:
        return torch.from_numpy(edge).to(mask.dtype)
    return edge


def load_image(path, target_size):
    """Load a lone image as [3, S, S] float32 in [0, 1] (no mask needed)."""
    try:
        with Image.open(path) as im:
            image = im.convert("RGB").resize((target_size, target_size), Image.BILINEAR)
    except Exception as exc:
        raise SampleLoadError(path, exc) from exc
    return torch.from_numpy(np.asarray(image, np.float32) / 255.0).permute(2, 0, 1)


def load_sample(entry, target_size):
    """Load one (image, mask) pair, standardized to ``target_size`` square.

    Image is resized bilinearly; the mask is resized nearest-neighbor and
    binarized at 0.5; the edge map is computed from the resized mask.
    """
    img_path, mask_path = entry
    try:
        with Image.open(img_path) as im:
            image = im.convert("RGB").resize((target_size, target_size), Image.BILINEAR)
    except Exception as exc:  # PIL raises a zoo of decode errors
        raise SampleLoadError(img_path, exc) from exc
    try:
        with Image.open(mask_path) as im:
            mask = im.convert("L").resize((target_size, target_size), Image.NEAREST)
    except Exception as exc:
        raise SampleLoadError(mask_path, exc) from exc

    image_t = torch.from_numpy(np.asarray(image, np.float32) / 255.0).permute(2, 0, 1)
    mask_t = (torch.from_numpy(np.asarray(mask, np.float32) / 255.0) > 0.5).float()[None]
    edge_t = extract_edge_gt(mask_t)
    return Sample(image=image_t, mask=mask_t, edge=edge_t, id=Path(img_path).stem)


def hflip(sample):
    """Horizontal flip of image, mask, and edge together (an involution)."""
    return replace(sample,
                   image=torch.flip(sample.image, dims=[-1]),
                   mask=torch.flip(sample.mask, dims=[-1]),
                   edge=torch.flip(sample.edge, dims=[-1]))


def _resize(sample, size):
    image = TF.resize(sample.image, [size, size], InterpolationMode.BILINEAR, antialias=True)
    mask = TF.resize(sample.mask, [size, size], InterpolationMode.NEAREST)
    edge = TF.resize(sample.edge, [size, size], InterpolationMode.NEAREST)
    return replace(sample, image=image, mask=mask, edge=edge)


def _crop(sample, top, left, size):
    return replace(sample,
                   image=sample.image[..., top:top + size, left:left + size],
                   mask=sample.mask[..., top:top + size, left:left + size],
                   edge=sample.edge[..., top:top + size, left:left + size])


def augment(sample, rng):
    """Random flip, rotation, and scale-jittered crop; rng is an explicit
    ``numpy.random.Generator`` so parallel workers stay reproducible.

    Image and mask receive the same geometric transform, the output is
    re-standardized to the input size and re-binarized, and the edge map is
    re-derived from the transformed mask (resampling a one-pixel ring does
    not commute with the transform, so deriving keeps edge == boundary of
    mask). Transforms that would clip the object at the frame are redrawn
    or skipped.
    """
    size = sample.image.shape[-1]
    out = sample

    if rng.random() < 0.5:
        out = hflip(out)

    if rng.random() < 0.5:
        fg_before = out.mask.sum()
        for _ in range(5):
            angle = float(rng.uniform(-MAX_ROTATE_DEG, MAX_ROTATE_DEG))
            rotated = TF.rotate(out.mask, angle, InterpolationMode.NEAREST)
            if fg_before == 0 or rotated.sum() >= 0.98 * fg_before:
                out = replace(out,
                              image=TF.rotate(out.image, angle, InterpolationMode.BILINEAR),
                              mask=rotated)
                break

    ratio = SCALE_RATIOS[rng.integers(len(SCALE_RATIOS))]
    if ratio != 1.0:
        scaled = max(32, int(round(size * ratio)))
        out = _resize(out, scaled)
        if scaled > size:
            out = _crop_keeping_object(out, rng, scaled, size)
        else:
            out = _resize(out, size)

    mask = (out.mask > 0.5).float()
    return replace(out, image=out.image.clamp(0.0, 1.0), mask=mask,
                   edge=extract_edge_gt(mask))


def _crop_keeping_object(out, rng, scaled, size):
    """Random crop window constrained to contain the whole foreground.

    A one-pixel margin is kept when possible so the object boundary stays
    off the frame border (border pixels generate no edge supervision).
    """
    fg = out.mask[0].nonzero()
    if fg.numel() == 0:
        top = int(rng.integers(scaled - size + 1))
        left = int(rng.integers(scaled - size + 1))
        return _crop(out, top, left, size)
    r0, c0 = fg.min(dim=0).values.tolist()
    r1, c1 = fg.max(dim=0).values.tolist()
    if r1 - r0 >= size or c1 - c0 >= size:
        return _resize(out, size)  # object outgrew the window; no crop

    def draw(lo_px, hi_px):
        lo = max(0, hi_px - size + 1)
        hi = min(scaled - size, lo_px)
        if lo > hi:  # margin infeasible, fall back to the tight range
            lo, hi = max(0, hi_px - size), min(scaled - size, lo_px + 1)
        return int(rng.integers(lo, hi + 1))

    top = draw(r0 - 1, r1 + 1)
    left = draw(c0 - 1, c1 + 1)
    return _crop(out, top, left, size)
