"""Segmentation metrics on grayscale maps.

All computation is float64 numpy. A prediction is scored against a binary
ground truth at 256 thresholds k/255 (k = 0..255) with M = (pred >= tau):

* PR / F curves: precision |M n G|/|M| (1 when M is empty, so the curve is
  a total function), recall |M n G|/|G|, F = (1+b2) P R / (b2 P + R).
* Structure measure: alpha-blend of an object term (foreground/background
  mean-and-spread similarity) and a region term (SSIM-form similarity on
  the four quadrants about the foreground centroid, area-weighted).
* Enhanced alignment: per threshold, the mean-centered agreement between
  the binarized map and the ground truth, remapped by ((a+1)^2)/4 and
  averaged over all pixels; the reported value is the mean over thresholds.
* MAE: mean absolute difference.

The curve code avoids the naive 256-pass scan: threshold counts come from
one sort + searchsorted, and the alignment score is assembled from the four
(fm, gt) pixel-combination counts. Loop-form references live in the test
suite and pin these implementations.
"""

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

EPS = np.spacing(1)
NUM_THRESHOLDS = 256

log = logging.getLogger(__name__)


class EmptyGroundTruthError(ValueError):
    """Ground truth has no foreground; threshold curves are undefined."""


@dataclass
class MetricConfig:
    alpha: float = 0.5
    beta_squared: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta_squared <= 0:
            raise ValueError("beta_squared must be positive")

    @property
    def thresholds(self):
        return np.arange(NUM_THRESHOLDS, dtype=np.float64) / 255.0


DEFAULT_CONFIG = MetricConfig()


def normalize_prediction(pred):
    """Min-max rescale to [0, 1], only when the input strays outside it."""
    pred = np.asarray(pred, dtype=np.float64)
    lo, hi = pred.min(), pred.max()
    if lo >= 0.0 and hi <= 1.0:
        return pred
    if hi - lo < EPS:
        return np.zeros_like(pred)
    return (pred - lo) / (hi - lo)


@dataclass
class EvalPair:
    pred: np.ndarray  # [H, W] float64 in [0, 1]
    gt: np.ndarray    # [H, W] float64 in {0, 1}

    @classmethod
    def from_arrays(cls, pred, gt):
        pred = normalize_prediction(pred)
        gt = np.asarray(gt, dtype=np.float64)
        if gt.ndim != 2 or pred.ndim != 2:
            raise ValueError("maps must be 2-D")
        return cls(pred=pred, gt=gt).validate()

    def validate(self):
        if self.pred.shape != self.gt.shape:
            raise ValueError(
                f"shape mismatch: {self.pred.shape} vs {self.gt.shape}")
        if self.pred.min() < 0.0 or self.pred.max() > 1.0:
            raise ValueError("pred must lie in [0, 1]")
        if not np.isin(self.gt, (0.0, 1.0)).all():
            raise ValueError("gt must be binary")
        return self


def _coerce(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def mae(pred, gt):
    pred, gt = _coerce(pred, gt)
    return float(np.abs(pred - gt).mean())


def _threshold_counts(pred, gt):
    """|M| and |M n G| for every threshold, via sorted-value bisection."""
    taus = DEFAULT_CONFIG.thresholds
    all_sorted = np.sort(pred, axis=None)
    fg_sorted = np.sort(pred[gt > 0.5], axis=None)
    m_size = pred.size - np.searchsorted(all_sorted, taus, side="left")
    tp = fg_sorted.size - np.searchsorted(fg_sorted, taus, side="left")
    return m_size.astype(np.float64), tp.astype(np.float64), float(fg_sorted.size)


def pr_curve(pred, gt, config=DEFAULT_CONFIG):
    """(precision, recall) arrays over the 256 thresholds."""
    pred, gt = _coerce(pred, gt)
    m_size, tp, n_fg = _threshold_counts(pred, gt)
    if n_fg == 0:
        raise EmptyGroundTruthError("gt has no foreground pixel")
    precision = np.where(m_size > 0, tp / np.maximum(m_size, 1.0), 1.0)
    recall = tp / n_fg
    return precision, recall


@dataclass
class FCurve:
    values: np.ndarray  # 256 reals
    mean: float
    max: float


def f_measure(pred, gt, config=DEFAULT_CONFIG) -> FCurve:
    precision, recall = pr_curve(pred, gt, config)
    b2 = config.beta_squared
    num = (1.0 + b2) * precision * recall
    den = b2 * precision + recall
    values = np.where(den > 0, num / np.maximum(den, EPS), 0.0)
    return FCurve(values=values, mean=float(values.mean()), max=float(values.max()))


def _object_score(values):
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)

def _s_object(pred, gt):
    fg = gt > 0.5
    u = gt.mean()
    return u * _object_score(pred[fg]) + (1.0 - u) * _object_score(1.0 - pred[~fg])


def _centroid(gt):
    """1-based (col, row) center of foreground mass, round-half-up."""
    rows, cols = gt.shape
    total = gt.sum()
    if total == 0:
        return int(np.floor(cols / 2.0 + 0.5)), int(np.floor(rows / 2.0 + 0.5))
    i = np.arange(1, cols + 1, dtype=np.float64)
    j = np.arange(1, rows + 1, dtype=np.float64)
    x = int(np.floor(gt.sum(axis=0) @ i / total + 0.5))
    y = int(np.floor(gt.sum(axis=1) @ j / total + 0.5))
    return x, y


def _region_ssim(pred, gt):
    n = pred.size
    if n == 0:
        return 0.0
    x, y = pred.mean(), gt.mean()
    sig_x = ((pred - x) ** 2).sum() / (n - 1 + EPS)
    sig_y = ((gt - y) ** 2).sum() / (n - 1 + EPS)
    sig_xy = ((pred - x) * (gt - y)).sum() / (n - 1 + EPS)
    a = 4.0 * x * y * sig_xy
    b = (x * x + y * y) * (sig_x + sig_y)
    if a != 0.0:
        return a / (b + EPS)
    return 1.0 if b == 0.0 else 0.0


def _s_region(pred, gt):
    rows, cols = gt.shape
    cx, cy = _centroid(gt)
    area = float(rows * cols)
    quads = [(slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, cols)),
             (slice(cy, rows), slice(0, cx)), (slice(cy, rows), slice(cx, cols))]
    w = [cx * cy / area, (cols - cx) * cy / area, cx * (rows - cy) / area, 0.0]
    w[3] = 1.0 - w[0] - w[1] - w[2]
    score = 0.0
    for wk, (rs, cs) in zip(w, quads):
        if wk > 0:
            score += wk * _region_ssim(pred[rs, cs], gt[rs, cs])
    return score


def s_measure(pred, gt, config=DEFAULT_CONFIG):
    """Structure similarity; degenerate ground truths fall back to mean rules."""
    pred, gt = _coerce(pred, gt)
    y = gt.mean()
    if y == 0.0:
        return float(1.0 - pred.mean())
    if y == 1.0:
        return float(pred.mean())
    q = config.alpha * _s_object(pred, gt) + (1.0 - config.alpha) * _s_region(pred, gt)
    return float(max(q, 0.0))


@dataclass
class ECurve:
    values: np.ndarray  # 256 reals
    mean: float


def e_measure(pred, gt, config=DEFAULT_CONFIG) -> ECurve:
    """Enhanced-alignment curve over thresholds, assembled from pixel counts.

    For binarized fm and gt, the alignment of a pixel depends only on the
    (fm, gt) value combination and the two map means, so each threshold
    needs just the four combination counts.
    """
    pred, gt = _coerce(pred, gt)
    n = float(pred.size)
    n_gt = float(gt.sum())
    m_size, tp, _ = _threshold_counts(pred, gt)

    if n_gt == 0:
        values = 1.0 - m_size / n  # mean of (1 - fm)
        return ECurve(values=values, mean=float(values.mean()))
    if n_gt == n:
        values = m_size / n  # mean of fm
        return ECurve(values=values, mean=float(values.mean()))

    counts = np.stack([tp, m_size - tp, n_gt - tp, n - m_size - n_gt + tp])
    fm_vals = np.array([1.0, 1.0, 0.0, 0.0])[:, None]
    gt_vals = np.array([1.0, 0.0, 1.0, 0.0])[:, None]
    d_fm = fm_vals - m_size[None, :] / n
    d_gt = gt_vals - n_gt / n
    align = 2.0 * d_gt * d_fm / (d_gt * d_gt + d_fm * d_fm + EPS)
    enhanced = ((align + 1.0) ** 2) / 4.0
    values = (counts * enhanced).sum(axis=0) / n
    return ECurve(values=values, mean=float(values.mean()))


def dice_iou(pred, gt, threshold=0.5):
    """Overlap scores of the binarized map: (Dice, IoU)."""
    pred, gt = _coerce(pred, gt)
    m = pred >= threshold
    g = gt > 0.5
    inter = float(np.logical_and(m, g).sum())
    m_sz, g_sz = float(m.sum()), float(g.sum())
    union = m_sz + g_sz - inter
    dice = 1.0 if m_sz + g_sz == 0 else 2.0 * inter / (m_sz + g_sz)
    iou = 1.0 if union == 0 else inter / union
    return dice, iou


@dataclass
class MetricReport:
    s_alpha: float
    e_phi_mean: float
    f_beta_mean: float
    f_beta_max: float
    mae: float
    pr: tuple          # (precision[256], recall[256]) averaged pointwise
    f_curve: np.ndarray
    e_curve: np.ndarray
    per_image: list = field(default_factory=list)  # rows of (stem, s, e, f_mean, f_max, mae)
    skipped: list = field(default_factory=list)    # stems excluded from curve averages
    missing: list = field(default_factory=list)    # stems lacking a counterpart file
    convention: str = "empty-binarization precision := 1"

    def validate(self):
        for name in ("s_alpha", "e_phi_mean", "f_beta_mean", "f_beta_max", "mae"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        for curve in (self.pr[0], self.pr[1], self.f_curve, self.e_curve):
            if len(curve) != NUM_THRESHOLDS:
                raise ValueError("curves must have 256 points")
        return self

    def write_per_image_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stem", "s_alpha", "e_phi_mean", "f_beta_mean",
                             "f_beta_max", "mae"])
            for row in self.per_image:
                writer.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])
            writer.writerow(["aggregate", f"{self.s_alpha:.6f}", f"{self.e_phi_mean:.6f}",
                             f"{self.f_beta_mean:.6f}", f"{self.f_beta_max:.6f}",
                             f"{self.mae:.6f}"])

    def write_curve_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "precision", "recall", "f_beta", "e_phi"])
            taus = DEFAULT_CONFIG.thresholds
            for k in range(NUM_THRESHOLDS):
                writer.writerow([f"{taus[k]:.6f}", f"{self.pr[0][k]:.6f}",
                                 f"{self.pr[1][k]:.6f}", f"{self.f_curve[k]:.6f}",
                                 f"{self.e_curve[k]:.6f}"])


def _load_gray(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def _resize_pred(pred, shape):
    if pred.shape == shape:
        return pred
    im = Image.fromarray(np.clip(pred * 255.0, 0, 255).astype(np.uint8), mode="L")
    return np.asarray(im.resize(shape[::-1], Image.BILINEAR), dtype=np.float64) / 255.0


def evaluate_pair(pred, gt, config=DEFAULT_CONFIG):
    """All per-image scalars and curves; curves are None on empty gt."""
    pair = EvalPair.from_arrays(pred, gt)
    s = s_measure(pair.pred, pair.gt, config)
    e = e_measure(pair.pred, pair.gt, config)
    m = mae(pair.pred, pair.gt)
    if pair.gt.sum() == 0:
        return {"s": s, "e": e, "mae": m, "f": None, "pr": None}
    p, r = pr_curve(pair.pred, pair.gt, config)
    f = f_measure(pair.pred, pair.gt, config)
    return {"s": s, "e": e, "mae": m, "f": f, "pr": (p, r)}


def evaluate_dataset(pred_dir, gt_dir, config=DEFAULT_CONFIG) -> MetricReport:
    """Score every prediction in ``pred_dir`` against its ground truth.

    Files pair by stem; predictions are resized to the ground-truth grid.
    Images whose ground truth has no foreground keep their S/E/MAE scores
    but are excluded from threshold-curve averaging.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt_files = {p.stem: p for p in sorted(gt_dir.iterdir())
                if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")}
    pred_files = {p.stem: p for p in sorted(pred_dir.iterdir())
                  if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")}

    rows, skipped, missing = [], [], []
    prs, fcurves, ecurves = [], [], []
    s_vals, e_vals, fmean_vals, fmax_vals, mae_vals = [], [], [], [], []

    for stem in sorted(gt_files):
        if stem not in pred_files:
            missing.append(stem)
            warnings.warn(f"no prediction for {stem}; excluded from report")
            continue
        gt = (_load_gray(gt_files[stem]) > 0.5).astype(np.float64)
        pred = _resize_pred(_load_gray(pred_files[stem]), gt.shape)
        res = evaluate_pair(pred, gt, config)
        s_vals.append(res["s"])
        e_vals.append(res["e"].mean)
        mae_vals.append(res["mae"])
        ecurves.append(res["e"].values)
        if res["f"] is None:
            skipped.append(stem)
            rows.append((stem, res["s"], res["e"].mean, 0.0, 0.0, res["mae"]))
            continue
        fmean_vals.append(res["f"].mean)
        fmax_vals.append(res["f"].max)
        prs.append(res["pr"])
        fcurves.append(res["f"].values)
        rows.append((stem, res["s"], res["e"].mean, res["f"].mean, res["f"].max,
                     res["mae"]))

    if not rows:
        raise ValueError(f"no evaluable pairs between {pred_dir} and {gt_dir}")

    def _mean(vals):
        return float(np.mean(vals)) if vals else 0.0

    if prs:
        precision = np.mean([p for p, _ in prs], axis=0)
        recall = np.mean([r for _, r in prs], axis=0)
        f_curve = np.mean(fcurves, axis=0)
    else:
        precision = recall = f_curve = np.zeros(NUM_THRESHOLDS)
    e_curve = np.mean(ecurves, axis=0)

    return MetricReport(
        s_alpha=_mean(s_vals), e_phi_mean=_mean(e_vals), f_beta_mean=_mean(fmean_vals),
        f_beta_max=_mean(fmax_vals), mae=_mean(mae_vals), pr=(precision, recall),
        f_curve=f_curve, e_curve=e_curve, per_image=rows, skipped=skipped,
        missing=missing).validate()
