"""Restoration and segmentation metrics for images in the [-1, 1] convention."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .fileio import write_csv

PSNR_CAP = 99.0


def _same_shape(a, b, name):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def rmse(restored_list, true_list) -> float:
    """sqrt(mean_i mean_pixels (G(z_i) - G(z_hat_i))^2)."""
    if len(restored_list) != len(true_list) or not restored_list:
        raise ValueError("rmse: need two non-empty lists of equal length")
    per = []
    for r, t in zip(restored_list, true_list):
        r, t = _same_shape(r, t, "rmse")
        per.append(np.mean((r - t) ** 2))
    return float(np.sqrt(np.mean(per)))


def psnr(a, b, peak: float = 2.0, region=None) -> float:
    a, b = _same_shape(a, b, "psnr")
    if region is not None:
        sel = np.asarray(region) > 0
        a, b = a[sel], b[sel]
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return PSNR_CAP
    return float(10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03,
         data_range: float = 2.0) -> float:
    """Mean SSIM over all fully-contained Gaussian windows; channels averaged."""
    a, b = _same_shape(a, b, "ssim")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., k], b[..., k], window, sigma, k1, k2, data_range)
                              for k in range(a.shape[2])]))
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"ssim: image {a.shape} smaller than {window}x{window} window")
    w = gaussian_window(window, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2

    def filt(img):
        return np.einsum("ijkl,kl->ij", sliding_window_view(img, (window, window)), w)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _binary(m, name):
    m = np.asarray(m, dtype=np.float64)
    if not np.isin(m, (0.0, 1.0)).all():
        raise ValueError(f"{name}: mask is not binary")
    return m > 0


def dice(pred_mask, true_mask) -> float:
    p, t = _same_shape(pred_mask, true_mask, "dice")
    p, t = _binary(p, "dice"), _binary(t, "dice")
    denom = p.sum() + t.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.sum(p & t) / denom)


def _classes(score_map, true_mask, name):
    s, t = _same_shape(score_map, true_mask, name)
    t = _binary(t, name).ravel()
    if t.all() or not t.any():
        raise ValueError(f"{name}: true mask needs both positive and negative pixels")
    return s.ravel(), t


def pixel_auroc(score_map, true_mask) -> float:
    """Rank-sum AUROC with midranks for ties."""
    s, t = _classes(score_map, true_mask, "pixel_auroc")
    ranks = rankdata(s, method="average")
    n_pos, n_neg = int(t.sum()), int((~t).sum())
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def best_threshold_dice(score_map, true_mask) -> tuple[float, float]:
    """Best Dice over predictions ``score >= v`` for every observed value v."""
    s, t = _classes(score_map, true_mask, "best_threshold_dice")
    order = np.argsort(-s, kind="stable")
    s_sorted, t_sorted = s[order], t[order]
    tp = np.cumsum(t_sorted)
    k = np.arange(1, s.size + 1)
    # only cut where the next score differs so ties stay together
    last_of_run = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    d = np.where(last_of_run, 2.0 * tp / (k + t.sum()), -1.0)
    i = int(np.argmax(d))
    return float(s_sorted[i]), float(d[i])


@dataclass
class MetricReport:
    names: list
    rows: list = field(default_factory=list)

    def add(self, sample_id, values: dict):
        self.rows.append((str(sample_id), {k: float(values[k]) for k in self.names}))

    def aggregate(self) -> dict:
        out = {}
        for k in self.names:
            vals = np.array([v[k] for _, v in self.rows])
            out[k] = (float(vals.mean()), float(vals.std()))
        return out

    def to_csv(self, path):
        rows = [[sid] + [v[k] for k in self.names] for sid, v in self.rows]
        agg = self.aggregate()
        rows.append(["aggregate__mean"] + [agg[k][0] for k in self.names])
        rows.append(["aggregate__std"] + [agg[k][1] for k in self.names])
        write_csv(path, ["sample"] + list(self.names), rows)
