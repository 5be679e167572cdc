"""Deliberately naive reference implementations used to pin the library.

Everything here favors obviousness over speed: explicit pixel loops,
threshold-by-threshold scans, and equation steps written out one line at a
time with functional conv/upsample primitives. Tolerances in the tests
bound the gap between these and the production code.
"""

import math

import numpy as np
import torch
import torch.nn.functional as F

# ---------------------------------------------------------------------------
# loss oracles (numpy float64, scalar loops)

def weight_oracle(target, kernel=31, scale=5.0):
    """Hard-pixel weight via an explicit valid-window mean at every pixel."""
    t = np.asarray(target, dtype=np.float64)
    h, w = t.shape
    r = kernel // 2
    out = np.ones((h, w))
    for i in range(h):
        for j in range(w):
            acc, cnt = 0.0, 0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        acc += t[ii, jj]
                        cnt += 1
            out[i, j] = 1.0 + scale * abs(acc / cnt - t[i, j])
    return out


def wbce_oracle(logits, target):
    x = np.asarray(logits, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    w = weight_oracle(t)
    num, den = 0.0, 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            v, y = x[i, j], t[i, j]
            bce = max(v, 0.0) - v * y + math.log1p(math.exp(-abs(v)))
            num += w[i, j] * bce
            den += w[i, j]
    return num / den


def wiou_oracle(logits, target):
    x = np.asarray(logits, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    w = weight_oracle(t)
    inter, union = 0.0, 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            p = 1.0 / (1.0 + math.exp(-x[i, j]))
            y = t[i, j]
            inter += w[i, j] * p * y
            union += w[i, j] * (p + y - p * y)
    return 1.0 - (inter + 1.0) / (union + 1.0)


def bce_prob_oracle(pred, target, eps=1e-7):
    """Plain-probability BCE with clamping, as used for the boundary map."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    total = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            q = min(max(p[i, j], eps), 1.0 - eps)
            total += -(t[i, j] * math.log(q) + (1.0 - t[i, j]) * math.log(1.0 - q))
    return total / p.size


def edge_oracle(mask):
    """Foreground pixels with a background 8-neighbor inside the frame."""
    m = np.asarray(mask, dtype=np.float64)
    h, w = m.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            if m[i, j] != 1.0:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii, jj = i + di, j + dj
                    if (di or dj) and 0 <= ii < h and 0 <= jj < w and m[ii, jj] == 0.0:
                        out[i, j] = 1.0
    return out


# ---------------------------------------------------------------------------
# metric oracles (threshold loops)

def mae_oracle(pred, gt):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    total = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            total += abs(p[i, j] - g[i, j])
    return total / p.size


def pr_oracle(pred, gt):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    n_fg = int((g > 0.5).sum())
    precision, recall = [], []
    for k in range(256):
        tau = k / 255.0
        m = p >= tau
        m_size = int(m.sum())
        tp = int((m & (g > 0.5)).sum())
        precision.append(1.0 if m_size == 0 else tp / m_size)
        recall.append(tp / n_fg)
    return np.array(precision), np.array(recall)


def f_oracle(pred, gt, beta_squared=0.3):
    precision, recall = pr_oracle(pred, gt)
    values = []
    for p, r in zip(precision, recall):
        den = beta_squared * p + r
        values.append(0.0 if den == 0 else (1.0 + beta_squared) * p * r / den)
    values = np.array(values)
    return values, float(values.mean()), float(values.max())


def _sample_std(values):
    n = len(values)
    if n <= 1:
        return 0.0
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def s_oracle(pred, gt, alpha=0.5):
    """Structure measure written directly from its object/region definition."""
    eps = np.spacing(1)
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    h, w = g.shape
    gt_mean = g.sum() / g.size
    if gt_mean == 0.0:
        return 1.0 - p.sum() / p.size
    if gt_mean == 1.0:
        return p.sum() / p.size

    # object term: similarity of fg on pred and bg on (1 - pred)
    fg_vals = [p[i, j] for i in range(h) for j in range(w) if g[i, j] == 1.0]
    bg_vals = [1.0 - p[i, j] for i in range(h) for j in range(w) if g[i, j] == 0.0]

    def score(vals):
        x = sum(vals) / len(vals)
        return 2.0 * x / (x * x + 1.0 + _sample_std(vals) + eps)

    s_obj = gt_mean * score(fg_vals) + (1.0 - gt_mean) * score(bg_vals)

    # region term: centroid of gt mass (1-based, round half up), 4 quadrants
    total = g.sum()
    cx = math.floor(sum(g[i, j] * (j + 1) for i in range(h) for j in range(w)) / total + 0.5)
    cy = math.floor(sum(g[i, j] * (i + 1) for i in range(h) for j in range(w)) / total + 0.5)

    def ssim_region(pr, gr):
        n = pr.size
        if n == 0:
            return 0.0
        x = pr.sum() / n
        y = gr.sum() / n
        sx = ((pr - x) ** 2).sum() / (n - 1 + eps)
        sy = ((gr - y) ** 2).sum() / (n - 1 + eps)
        sxy = ((pr - x) * (gr - y)).sum() / (n - 1 + eps)
        a = 4.0 * x * y * sxy
        b = (x * x + y * y) * (sx + sy)
        if a != 0.0:
            return a / (b + eps)
        return 1.0 if b == 0.0 else 0.0

    regions = [(p[:cy, :cx], g[:cy, :cx]), (p[:cy, cx:], g[:cy, cx:]),
               (p[cy:, :cx], g[cy:, :cx]), (p[cy:, cx:], g[cy:, cx:])]
    weights = [cy * cx, cy * (w - cx), (h - cy) * cx, (h - cy) * (w - cx)]
    s_reg = 0.0
    for wt, (pr, gr) in zip(weights, regions):
        if wt > 0:
            s_reg += (wt / (h * w)) * ssim_region(pr, gr)

    return max(alpha * s_obj + (1.0 - alpha) * s_reg, 0.0)


def e_oracle(pred, gt):
    """Enhanced-alignment curve via full per-threshold matrices."""
    eps = np.spacing(1)
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    n = g.size
    values = []
    for k in range(256):
        fm = (p >= k / 255.0).astype(np.float64)
        if g.sum() == 0:
            values.append((1.0 - fm).sum() / n)
            continue
        if g.sum() == n:
            values.append(fm.sum() / n)
            continue
        d_fm = fm - fm.sum() / n
        d_gt = g - g.sum() / n
        align = 2.0 * d_gt * d_fm / (d_gt * d_gt + d_fm * d_fm + eps)
        enhanced = ((align + 1.0) ** 2) / 4.0
        values.append(enhanced.sum() / n)
    values = np.array(values)
    return values, float(values.mean())


# ---------------------------------------------------------------------------
# equation oracles: the decoder blocks written out step by step with
# functional primitives, pulling weights from the (norm-free) modules

def _conv(block, x):
    c = block.conv
    return F.conv2d(x, c.weight, c.bias, padding=c.padding)


def mfam_oracle(module, x):
    f1 = _conv(module.reduce1, x)
    f2 = _conv(module.reduce2, x)
    f3 = _conv(module.reduce3, x)
    a = torch.relu(_conv(module.branch3, f1))
    b = torch.relu(_conv(module.branch5, f2))
    m3 = torch.relu(_conv(module.mix3, a + b))
    m5 = torch.relu(_conv(module.mix5, a + b))
    fused = m3 * m5 + a + b
    return torch.relu(_conv(module.fuse, fused)) + f3


def fuse_oracle(module, lo, hi):
    hi = F.interpolate(hi, size=lo.shape[-2:], mode="bilinear", align_corners=False)
    attention = torch.sigmoid(_conv(module.attn, hi + lo))
    enhanced_hi = hi + attention * hi
    enhanced_lo = lo + attention * lo
    return _conv(module.merge, _conv(module.post_hi, enhanced_hi)
                 + _conv(module.post_lo, enhanced_lo))


def propagate_oracle(module, fused, prev):
    prev = F.interpolate(prev, size=fused.shape[-2:], mode="bilinear",
                         align_corners=False)
    p1 = _conv(module.cur, fused)
    p2 = _conv(module.prev, prev)
    cat = torch.cat([p1, p2], dim=1)
    logits = F.conv2d(cat, module.gate.weight, module.gate.bias)
    g1, g2 = logits[:, 0:1], logits[:, 1:2]
    e1, e2 = torch.exp(g1), torch.exp(g2)
    w1 = e1 / (e1 + e2)
    w2 = e2 / (e1 + e2)
    return w1 * p1 + w2 * p2, w1, w2
