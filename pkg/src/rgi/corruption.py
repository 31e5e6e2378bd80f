"""Corrupted samples with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .fileio import read_pnm
from .generator import GeneratorModel, generate

MECHANISMS = ("central_block", "random_missing", "irregular", "defect_fill")
FILLS = ("normal", "normal_neg1", "uniform", "mean_fill")


@dataclass(frozen=True)
class CorruptionSpec:
    """How to corrupt an image.

    ``fill``: ``normal`` draws N(level, 1); ``normal_neg1`` draws N(-1, 1);
    ``uniform`` draws U(-1, 1); ``mean_fill`` writes the per-channel masked mean.
    ``block`` is the side of the central square; ``fraction`` the share of
    pixels hit by ``random_missing``; ``area`` the target share of the
    procedural irregular mask.
    """

    mechanism: str = "central_block"
    block: int = 8
    fraction: float = 0.25
    area: float = 0.1
    fill: str = "normal"
    level: float = 1.0
    seed: int = 0
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.fill not in FILLS:
            raise ValueError(f"unknown fill {self.fill!r}")
        if self.mechanism == "random_missing" and not 0 < self.fraction < 1:
            raise ValueError("missing fraction must lie in (0, 1)")
        if self.block < 0:
            raise ValueError("block must be >= 0")
        if not 0 < self.area < 1:
            raise ValueError("irregular area must lie in (0, 1)")


@dataclass(frozen=True)
class CorruptedSample:
    image: np.ndarray
    clean: np.ndarray
    true_mask: np.ndarray
    true_latent: np.ndarray | None
    n0: int
    spec: CorruptionSpec | None = None

    def __post_init__(self):
        if self.image.shape != self.clean.shape or self.true_mask.shape != self.clean.shape:
            raise ValueError("image, clean and mask shapes differ")


def sample_clean(model: GeneratorModel, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(model.latent_dim)
    return z, generate(model, z)


def central_block_mask(shape, block: int) -> np.ndarray:
    h, w = shape[:2]
    if block > h or block > w:
        raise ValueError(f"block {block} does not fit in image {h}x{w}")
    m = np.zeros((h, w))
    top, left = (h - block) // 2, (w - block) // 2
    m[top:top + block, left:left + block] = 1.0
    return m


def random_missing_mask(shape, fraction: float, rng: np.random.Generator) -> np.ndarray:
    h, w = shape[:2]
    k = int(round(fraction * h * w))
    m = np.zeros(h * w)
    m[rng.permutation(h * w)[:k]] = 1.0
    return m.reshape(h, w)


def irregular_mask(shape, area: float, rng: np.random.Generator, max_steps: int = 100000) -> np.ndarray:
    """Random-walk stroke, dilated by a 3x3 brush, grown until ``area`` is reached."""
    h, w = shape[:2]
    target = max(1, int(round(area * h * w)))
    m = np.zeros((h, w))
    y, x = int(rng.integers(h)), int(rng.integers(w))
    moves = np.array([(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, 1), (-1, 1), (1, -1)])
    for _ in range(max_steps):
        m[y, x] = 1.0
        if m.sum() >= target:
            break
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if m.sum() >= target:
                    break
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and rng.random() < 0.5:
                    m[yy, xx] = 1.0
        dy, dx = moves[rng.integers(len(moves))]
        y, x = int(np.clip(y + dy, 0, h - 1)), int(np.clip(x + dx, 0, w - 1))
    return m


def _expand(mask2d: np.ndarray, shape) -> np.ndarray:
    if mask2d.shape == tuple(shape):
        return mask2d.astype(np.float64)
    if mask2d.shape == tuple(shape[:2]) and len(shape) == 3:
        return np.repeat(mask2d[:, :, None], shape[2], axis=2).astype(np.float64)
    raise ValueError(f"mask shape {mask2d.shape} incompatible with image {tuple(shape)}")


def masked_mean_fill(clean: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-channel mean of ``clean`` over ``mask`` broadcast to the image shape."""
    if clean.ndim == 2:
        return np.full(clean.shape, clean[mask > 0].mean())
    fill = np.empty_like(clean)
    for k in range(clean.shape[2]):
        mk = mask[:, :, k] > 0
        if not mk.any():
            raise ValueError(f"defect mask is empty in channel {k}")
        fill[:, :, k] = clean[:, :, k][mk].mean()
    return fill


def _build_mask(shape, spec: CorruptionSpec, rng) -> np.ndarray:
    if spec.mask is not None:
        return _expand(np.asarray(spec.mask, dtype=np.float64), shape)
    if spec.mechanism == "central_block":
        return _expand(central_block_mask(shape, spec.block), shape)
    if spec.mechanism == "random_missing":
        return _expand(random_missing_mask(shape, spec.fraction, rng), shape)
    return _expand(irregular_mask(shape, spec.area, rng), shape)


def corrupt(clean, z_star, spec: CorruptionSpec) -> CorruptedSample:
    clean = np.asarray(clean, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    mask = _build_mask(clean.shape, spec, rng)
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ValueError("mask must be binary")
    fill_kind = "mean_fill" if spec.mechanism == "defect_fill" else spec.fill
    if fill_kind == "mean_fill":
        if not mask.any():
            fill = clean
        else:
            fill = masked_mean_fill(clean, mask)
    elif fill_kind == "normal":
        fill = rng.normal(spec.level, 1.0, clean.shape)
    elif fill_kind == "normal_neg1":
        fill = rng.normal(-1.0, 1.0, clean.shape)
    else:
        fill = rng.uniform(-1.0, 1.0, clean.shape)
    image = np.where(mask > 0, fill, clean)
    return CorruptedSample(image, clean, mask, None if z_star is None else np.asarray(z_star, dtype=np.float64),
                           int(mask.sum()), spec)


def synthesize_defect(clean, mask) -> CorruptedSample:
    """Fill ``mask`` with the per-channel mean of the clean pixels it covers."""
    clean = np.asarray(clean, dtype=np.float64)
    mask = _expand(np.asarray(mask, dtype=np.float64), clean.shape)
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ValueError("defect mask must be binary")
    if not mask.any():
        raise ValueError("defect mask is empty; masked mean undefined")
    image = np.where(mask > 0, masked_mean_fill(clean, mask), clean)
    spec = CorruptionSpec(mechanism="defect_fill", fill="mean_fill")
    return CorruptedSample(image, clean, mask, None, int(mask.sum()), spec)


def fit_mask(mask: np.ndarray, shape) -> np.ndarray:
    """Center-crop when the mask is at least as large as ``shape``, else nearest resize."""
    h, w = shape
    mh, mw = mask.shape
    if mh >= h and mw >= w:
        top, left = (mh - h) // 2, (mw - w) // 2
        return mask[top:top + h, left:left + w]
    rows = np.minimum((np.arange(h) * mh) // h, mh - 1)
    cols = np.minimum((np.arange(w) * mw) // w, mw - 1)
    return mask[np.ix_(rows, cols)]


def load_irregular_masks(path, shape=(16, 16)) -> list[np.ndarray]:
    """Load P5 masks (file or directory of *.pgm); pixels >= 128 count as corrupted."""
    path = Path(path)
    files = sorted(path.glob("*.pgm")) if path.is_dir() else [path]
    masks = []
    for f in files:
        raw = read_pnm(f, raw=True)
        if raw.ndim != 2:
            raise ValueError(f"{f}: expected a grayscale P5 mask")
        masks.append(fit_mask((raw >= 128).astype(np.float64), shape))
    return masks


def with_seed(spec: CorruptionSpec, seed: int) -> CorruptionSpec:
    return replace(spec, seed=seed)
