"""Evaluation metrics: Dice overlap and landmark error in millimeters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NoDetectionError
from .projector import Image2D


def dice(pred: Image2D | np.ndarray, gt: Image2D | np.ndarray, threshold: float = 0.5) -> float:
    """2|A^B| / (|A|+|B|); defined as 1.0 when both masks are empty."""
    a = pred.values if isinstance(pred, Image2D) else np.asarray(pred)
    b = gt.values if isinstance(gt, Image2D) else np.asarray(gt)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a > threshold if a.dtype.kind == "f" else a > 0
    b = b > threshold if b.dtype.kind == "f" else b > 0
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def landmark_error_mm(pred_px, gt_px, pixel_size_mm: float = 0.62) -> float:
    """Euclidean pixel distance scaled to millimeters."""
    p = np.asarray(pred_px, dtype=np.float64)
    g = np.asarray(gt_px, dtype=np.float64)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(g))):
        raise InvalidArgumentError("landmark coordinates must be finite")
    return float(np.linalg.norm(p - g) * pixel_size_mm)


def extract_landmark(belief: Image2D | np.ndarray, window_radius: int = 20) -> tuple[float, float]:
    """Sub-pixel landmark from a belief map.

    Finds the argmax (ties broken by lowest row, then column) and returns the
    intensity-weighted centroid of the window around it. The default radius
    of 20 px covers 4 sigma of the standard 5 px belief bump, which keeps
    the truncation bias of the centroid below 1e-3 px.
    """
    vals = belief.values if isinstance(belief, Image2D) else np.asarray(belief)
    if vals.ndim != 2:
        raise InvalidArgumentError("belief map must be 2D")
    if not np.any(vals > 0):
        raise NoDetectionError("belief map is all zero")
    flat = int(np.argmax(vals))  # row-major argmax = lowest row, then column
    r0, c0 = divmod(flat, vals.shape[1])

    r_lo = max(r0 - window_radius, 0)
    r_hi = min(r0 + window_radius + 1, vals.shape[0])
    c_lo = max(c0 - window_radius, 0)
    c_hi = min(c0 + window_radius + 1, vals.shape[1])
    w = vals[r_lo:r_hi, c_lo:c_hi].astype(np.float64)
    total = w.sum()
    rows = np.arange(r_lo, r_hi, dtype=np.float64)
    cols = np.arange(c_lo, c_hi, dtype=np.float64)
    v = float((w.sum(axis=1) * rows).sum() / total)
    u = float((w.sum(axis=0) * cols).sum() / total)
    return u, v


def argmax_landmark(belief: Image2D | np.ndarray) -> tuple[float, float]:
    """Whole-pixel landmark: plain argmax with the same tie-breaking."""
    vals = belief.values if isinstance(belief, Image2D) else np.asarray(belief)
    if not np.any(vals > 0):
        raise NoDetectionError("belief map is all zero")
    r, c = divmod(int(np.argmax(vals)), vals.shape[1])
    return float(c), float(r)


@dataclass
class EvalReport:
    dice_scores: list[float] = field(default_factory=list)
    landmark_errors_mm: list[float] = field(default_factory=list)
    sample_ids: list[str] = field(default_factory=list)

    @property
    def dice_mean(self) -> float:
        return float(np.mean(self.dice_scores)) if self.dice_scores else float("nan")

    @property
    def dice_std(self) -> float:
        return float(np.std(self.dice_scores)) if self.dice_scores else float("nan")

    @property
    def landmark_mean_mm(self) -> float:
        return float(np.mean(self.landmark_errors_mm)) if self.landmark_errors_mm else float("nan")

    @property
    def landmark_std_mm(self) -> float:
        return float(np.std(self.landmark_errors_mm)) if self.landmark_errors_mm else float("nan")

    def to_dict(self) -> dict:
        return {
            "n_samples": len(self.dice_scores),
            "dice_mean": self.dice_mean,
            "dice_std": self.dice_std,
            "landmark_mean_mm": self.landmark_mean_mm,
            "landmark_std_mm": self.landmark_std_mm,
            "per_sample": {
                "ids": self.sample_ids,
                "dice": self.dice_scores,
                "landmark_errors_mm": self.landmark_errors_mm,
            },
        }
