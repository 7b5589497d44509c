"""Reconstruction quality metrics and comparison artifacts.

best_aligned_iou absorbs the translation and point-reflection ambiguities
inherent to reconstruction from autocorrelation data: it maximizes IoU over
{identity, point reflection} x all cyclic translations, using FFT
cross-correlation so the search is O(n^2 log n).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class AlignTransform:
    reflected: bool
    shift: tuple[int, int]

    def __str__(self) -> str:
        kind = "reflect" if self.reflected else "identity"
        return f"{kind}+({self.shift[0]},{self.shift[1]})"


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference of two equal-sized real images."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    am = a != 0
    bm = b != 0
    union = np.logical_or(am, bm).sum()
    if union == 0:
        raise UndefinedMetricError("IoU of two empty masks is undefined")
    inter = np.logical_and(am, bm).sum()
    return float(inter) / float(union)


def _best_shift(cand: np.ndarray, truth_fft: np.ndarray) -> tuple[int, tuple[int, int]]:
    """Max cyclic-overlap count of `cand` against the truth, with the
    lexicographically smallest shift among ties."""
    corr = sfft.ifft2(truth_fft * np.conj(sfft.fft2(cand))).real
    counts = np.rint(corr).astype(np.int64)
    best = int(counts.max())
    ties = np.argwhere(counts == best)
    dy, dx = (int(v) for v in ties[0])  # argwhere is row-major sorted
    return best, (dy, dx)


def best_aligned_iou(recon: np.ndarray, truth: np.ndarray) -> tuple[float, AlignTransform]:
    """IoU maximized over point reflection and all cyclic translations.

    Returns the best IoU and the transform mapping `recon` onto `truth`.
    Ties prefer the identity orientation, then the smallest (dy, dx).
    """
    if recon.shape != truth.shape:
        raise ValueError(f"shape mismatch: {recon.shape} vs {truth.shape}")
    r = (recon != 0).astype(np.float64)
    t = (truth != 0).astype(np.float64)
    na = int(r.sum())
    nb = int(t.sum())
    if na + nb == 0:
        raise UndefinedMetricError("IoU of two empty masks is undefined")
    truth_fft = sfft.fft2(t)
    best_iou = -1.0
    best_tf = AlignTransform(False, (0, 0))
    for reflected, cand in ((False, r), (True, np.roll(r[::-1, ::-1], 1, axis=(0, 1)))):
        inter, shift = _best_shift(cand, truth_fft)
        val = inter / float(na + nb - inter)
        if val > best_iou:
            best_iou = val
            best_tf = AlignTransform(reflected, shift)
    return best_iou, best_tf


def apply_transform(mask: np.ndarray, tf: AlignTransform) -> np.ndarray:
    """Apply a best_aligned_iou transform to a mask."""
    out = mask
    if tf.reflected:
        out = np.roll(out[::-1, ::-1], 1, axis=(0, 1))
    return np.roll(out, tf.shift, axis=(0, 1))


def difference_image(truth: np.ndarray, recon: np.ndarray) -> np.ndarray:
    """Signed difference (truth - recon) after normalizing each to max 1."""
    if truth.shape != recon.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {recon.shape}")
    t = truth.astype(np.float64)
    r = recon.astype(np.float64)
    if t.max() > 0:
        t = t / t.max()
    if r.max() > 0:
        r = r / r.max()
    return t - r


def render_difference(diff: np.ndarray) -> np.ndarray:
    """Render a signed difference in [-1, 1] to 8 bits: -1 -> 0 (black),
    0 -> 128 (gray), +1 -> 255 (white)."""
    return np.rint((np.clip(diff, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)


REPORT_COLUMNS = ("id", "family", "method", "iou", "aligned_iou", "mse", "transform")


def write_report(rows: list[dict], path: str | Path) -> None:
    """Per-sample metric rows as CSV, one row per (id, method)."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in REPORT_COLUMNS})


def aggregate_report(rows: list[dict]) -> list[dict]:
    """Mean/median/std of aligned IoU and MSE per (family, method)."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((str(row["family"]), str(row["method"])), []).append(row)
    out = []
    for (family, method), members in sorted(groups.items()):
        ious = np.array([float(m["aligned_iou"]) for m in members])
        mses = np.array([float(m["mse"]) for m in members])
        out.append(
            {
                "family": family,
                "method": method,
                "count": len(members),
                "aligned_iou_mean": float(ious.mean()),
                "aligned_iou_median": float(np.median(ious)),
                "aligned_iou_std": float(ious.std()),
                "mse_mean": float(mses.mean()),
                "mse_median": float(np.median(mses)),
                "mse_std": float(mses.std()),
            }
        )
    return out


AGGREGATE_COLUMNS = (
    "family",
    "method",
    "count",
    "aligned_iou_mean",
    "aligned_iou_median",
    "aligned_iou_std",
    "mse_mean",
    "mse_median",
    "mse_std",
)


def write_aggregate_report(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS)
        writer.writeheader()
        for row in aggregate_report(rows):
            writer.writerow(row)
