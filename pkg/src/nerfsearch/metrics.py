"""Image quality metrics: PSNR and windowed SSIM.

Both operate on float images in [0, 1]. SSIM uses an 11x11 Gaussian window
(sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.0, evaluated on valid
windows only; color images are scored per channel and averaged.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE), with zero MSE mapped to the 100 dB cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a - b)))
    if mse == 0.0:
        return PSNR_CAP_DB
    return 10.0 * np.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian kernel (separable outer product)."""
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_single(a: np.ndarray, b: np.ndarray, window: np.ndarray,
                 c1: float, c2: float) -> float:
    mu1 = convolve2d(a, window, mode="valid")
    mu2 = convolve2d(b, window, mode="valid")
    s11 = convolve2d(a * a, window, mode="valid") - mu1 * mu1
    s22 = convolve2d(b * b, window, mode="valid") - mu2 * mu2
    s12 = convolve2d(a * b, window, mode="valid") - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity; [H, W] or [H, W, C] inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = gaussian_window()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    if a.ndim == 2:
        return _ssim_single(a, b, window, c1, c2)
    vals = [_ssim_single(a[..., c], b[..., c], window, c1, c2)
            for c in range(a.shape[2])]
    return float(np.mean(vals))


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM values and their arithmetic means."""

    psnr_values: list[float] = field(default_factory=list)
    ssim_values: list[float] = field(default_factory=list)

    def add(self, rendered: np.ndarray, reference: np.ndarray) -> None:
        self.psnr_values.append(psnr(rendered, reference))
        self.ssim_values.append(ssim(rendered, reference))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_values)) if self.psnr_values else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values)) if self.ssim_values else float("nan")


METRICS_CSV_FIELDS = ["scene", "architecture", "psnr", "ssim", "lpips",
                      "params_M", "flops_G", "fps"]


def metrics_csv_row(scene: str, architecture: str, psnr_db: float, ssim_val: float,
                    params_m: float, flops_g: float, fps: float | None = None) -> dict:
    """One CSV row; the lpips column is a named placeholder and stays empty."""
    return {
        "scene": scene, "architecture": architecture,
        "psnr": f"{psnr_db:.4f}", "ssim": f"{ssim_val:.6f}", "lpips": "",
        "params_M": f"{params_m:.4f}", "flops_G": f"{flops_g:.4f}",
        "fps": "" if fps is None else f"{fps:.4f}",
    }


def append_metrics_csv(path, rows: list[dict]) -> None:
    """Append rows, writing the header when the file is new or empty."""
    import os
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_CSV_FIELDS)
        if new_file:
            writer.writeheader()
        writer.writerows(rows)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
