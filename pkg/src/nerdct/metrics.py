"""Reconstruction quality metrics and the per-axis evaluation report."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d

from .volume import SLICE_AXES, get_slice

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(candidate, reference, data_range=1.0):
    """10 log10(data_range^2 / MSE); identical inputs give +inf."""
    candidate = np.asarray(candidate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if candidate.shape != reference.shape:
        raise ValueError(
            f"shape mismatch: {candidate.shape} vs {reference.shape}"
        )
    if not data_range > 0:
        raise ValueError(f"data_range must be > 0, got {data_range}")
    mse = float(np.mean((candidate - reference) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def _gaussian_window():
    half = (SSIM_WINDOW - 1) / 2.0
    coords = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(coords**2) / (2.0 * SSIM_SIGMA**2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim_2d(candidate, reference, data_range=1.0):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Windows are fully interior (valid correlation, no padding); slices
    smaller than the window are rejected.
    """
    candidate = np.asarray(candidate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if candidate.shape != reference.shape:
        raise ValueError(
            f"shape mismatch: {candidate.shape} vs {reference.shape}"
        )
    if candidate.ndim != 2:
        raise ValueError(f"expected 2D slices, got shape {candidate.shape}")
    if min(candidate.shape) < SSIM_WINDOW:
        raise ValueError(
            f"slice {candidate.shape} smaller than the {SSIM_WINDOW}x"
            f"{SSIM_WINDOW} window"
        )
    if not data_range > 0:
        raise ValueError(f"data_range must be > 0, got {data_range}")
    window = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def smooth(img):
        return correlate2d(img, window, mode="valid")

    mu_x = smooth(candidate)
    mu_y = smooth(reference)
    var_x = smooth(candidate * candidate) - mu_x**2
    var_y = smooth(reference * reference) - mu_y**2
    cov = smooth(candidate * reference) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


@dataclass
class ViewStats:
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    n_slices: int


@dataclass
class Report:
    views: dict          # axis name -> ViewStats
    data_range: float
    seed: int = None
    config: dict = None

    def to_dict(self):
        out = {
            "data_range": self.data_range,
            "seed": self.seed,
            "config": self.config,
            "views": {},
        }
        for axis, stats in self.views.items():
            out["views"][axis] = {
                "psnr_mean": _json_float(stats.psnr_mean),
                "psnr_std": _json_float(stats.psnr_std),
                "ssim_mean": _json_float(stats.ssim_mean),
                "ssim_std": _json_float(stats.ssim_std),
                "n_slices": stats.n_slices,
            }
        return out


def _json_float(value):
    """Non-finite floats serialize as strings ('inf', '-inf', 'nan')."""
    if math.isfinite(value):
        return value
    if math.isnan(value):
        return "nan"
    return "inf" if value > 0 else "-inf"


def _stats(values):
    values = np.asarray(values, dtype=np.float64)
    if np.all(np.isinf(values)):
        return math.inf, 0.0
    return float(np.mean(values)), float(np.std(values))


def evaluate_volume(candidate, reference, data_range=1.0, seed=None, config=None):
    """Per-slice PSNR/SSIM along axial, coronal, sagittal axes.

    Every slice of each view is scored and aggregated as mean/std.  A
    perfect reconstruction yields +inf PSNR (std reported as 0).
    """
    if candidate.shape != reference.shape:
        raise ValueError(
            f"shape mismatch: {candidate.shape} vs {reference.shape}"
        )
    counts = dict(zip(SLICE_AXES, candidate.shape))
    views = {}
    for axis in SLICE_AXES:
        psnr_values, ssim_values = [], []
        for index in range(counts[axis]):
            a = get_slice(candidate, axis, index)
            b = get_slice(reference, axis, index)
            psnr_values.append(psnr(a, b, data_range))
            ssim_values.append(ssim_2d(a, b, data_range))
        psnr_mean, psnr_std = _stats(psnr_values)
        ssim_mean, ssim_std = _stats(ssim_values)
        views[axis] = ViewStats(psnr_mean, psnr_std, ssim_mean, ssim_std,
                                counts[axis])
    return Report(views=views, data_range=data_range, seed=seed, config=config)
