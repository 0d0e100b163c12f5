"""Image quality metrics and the reconstruction loss.

All metrics take RGB images with float channels in [0, 1] (either
:class:`citysplat.core.Image` or plain (H, W, 3) arrays) and assume a dynamic
range of 1. SSIM uses Gaussian-weighted 11x11 moments over the valid region
only, so no padding bias enters threshold comparisons.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve

from .core import Image

__all__ = ["MetricReport", "ssim", "l_ssim", "psnr", "l1", "training_loss", "metric_report"]

_WINDOW = 11
_SIGMA = 1.5
_C1 = 0.01**2
_C2 = 0.03**2


@dataclass(frozen=True)
class MetricReport:
    """Per-image quality summary.

    Attributes
    ----------
    ssim : float
        Mean structural similarity, in [-1, 1].
    psnr : float
        Peak signal-to-noise ratio in dB; ``inf`` for identical images.
    l1 : float
        Mean absolute error.
    loss : float
        ``(1 - lam) * l1 + lam * (1 - ssim)``.
    """

    ssim: float
    psnr: float
    l1: float
    loss: float


def _pixels(a) -> np.ndarray:
    px = a.pixels if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    if px.ndim != 3 or px.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {px.shape}")
    return np.asarray(px, dtype=np.float64)


def _check_pair(a, b):
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ValueError(f"image dimensions differ: {pa.shape} vs {pb.shape}")
    return pa, pb


def _gaussian_window() -> np.ndarray:
    g = np.exp(-((np.arange(_WINDOW) - _WINDOW // 2) ** 2) / (2.0 * _SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


_W2D = _gaussian_window()


def ssim(a, b) -> float:
    """Mean structural similarity between two images.

    Gaussian-weighted local statistics (11x11 window, sigma 1.5, C1=0.01^2,
    C2=0.03^2, dynamic range 1) are computed per channel over the valid
    region and the per-channel means are averaged. Symmetric in ``(a, b)``.
    Images must be at least 11x11.
    """
    pa, pb = _check_pair(a, b)
    if pa.shape[0] < _WINDOW or pa.shape[1] < _WINDOW:
        raise ValueError(f"images must be at least {_WINDOW}x{_WINDOW} for ssim")
    vals = []
    for ch in range(3):
        x, y = pa[:, :, ch], pb[:, :, ch]
        mu_x = convolve(x, _W2D, mode="valid")
        mu_y = convolve(y, _W2D, mode="valid")
        e_xx = convolve(x * x, _W2D, mode="valid")
        e_yy = convolve(y * y, _W2D, mode="valid")
        e_xy = convolve(x * y, _W2D, mode="valid")
        var_x = e_xx - mu_x**2
        var_y = e_yy - mu_y**2
        cov = e_xy - mu_x * mu_y
        num = (2 * mu_x * mu_y + _C1) * (2 * cov + _C2)
        den = (mu_x**2 + mu_y**2 + _C1) * (var_x + var_y + _C2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def l_ssim(a, b) -> float:
    """Structural dissimilarity, ``1 - ssim(a, b)``."""
    return 1.0 - ssim(a, b)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, ``10 log10(1 / MSE)``.

    Returns ``inf`` when the images are identical.
    """
    pa, pb = _check_pair(a, b)
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def l1(a, b) -> float:
    """Mean absolute error."""
    pa, pb = _check_pair(a, b)
    return float(np.mean(np.abs(pa - pb)))


def training_loss(render, gt, lam: float = 0.2) -> float:
    """Weighted reconstruction loss ``(1 - lam) * L1 + lam * (1 - SSIM)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must be in [0, 1]")
    return (1.0 - lam) * l1(render, gt) + lam * l_ssim(render, gt)


def metric_report(render, gt, lam: float = 0.2) -> MetricReport:
    """Compute all metrics for one image pair."""
    s = ssim(render, gt)
    e1 = l1(render, gt)
    return MetricReport(ssim=s, psnr=psnr(render, gt), l1=e1, loss=(1.0 - lam) * e1 + lam * (1.0 - s))
