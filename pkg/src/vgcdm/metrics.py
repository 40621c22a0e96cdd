"""Signal-generation quality metrics: RMSE, PSNR, FSCS.

FSCS is the cosine similarity of one-sided FFT magnitude spectra; magnitudes
are nonnegative, so FSCS lies in [0, 1] and ignores phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


class ZeroReferenceError(MetricError):
    """PSNR reference signal is all zero, so MAX is undefined."""


class ZeroSpectrumError(MetricError):
    """An all-zero signal has no spectral direction for cosine similarity."""


@dataclass(frozen=True)
class MetricConfig:
    psnr_max_mode: str = "per_sample_max_abs"
    fft_kind: str = "one_sided_magnitude"
    psnr_identical_policy: str = "cap_at_value"   # or "error"
    psnr_cap_db: float = 100.0

    def __post_init__(self):
        if self.psnr_max_mode not in ("per_sample_max_abs",):
            raise ValueError(f"unknown psnr_max_mode {self.psnr_max_mode!r}")
        if self.fft_kind not in ("one_sided_magnitude",):
            raise ValueError(f"unknown fft_kind {self.fft_kind!r}")
        if self.psnr_identical_policy not in ("cap_at_value", "error"):
            raise ValueError(
                f"unknown psnr_identical_policy {self.psnr_identical_policy!r}"
            )


def _as_pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size != y_hat.size:
        raise MetricError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise MetricError("empty signals")
    return y, y_hat


def rmse(y, y_hat) -> float:
    """Quadratic mean of pointwise differences."""
    y, y_hat = _as_pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def psnr(y, y_hat, cfg: MetricConfig = MetricConfig()) -> float:
    """10 log10(MAX^2 / MSE) in dB, MAX = max |y| of the ground truth."""
    y, y_hat = _as_pair(y, y_hat)
    peak = float(np.max(np.abs(y)))
    if peak == 0.0:
        raise ZeroReferenceError("all-zero ground truth: PSNR reference undefined")
    mse = float(np.mean((y - y_hat) ** 2))
    if mse == 0.0:
        if cfg.psnr_identical_policy == "error":
            raise MetricError("identical signals: PSNR is unbounded")
        return cfg.psnr_cap_db
    return float(10.0 * np.log10(peak ** 2 / mse))


def magnitude_spectrum(y) -> np.ndarray:
    """One-sided FFT magnitude spectrum (L//2 + 1 bins, DC included)."""
    y = np.asarray(y, dtype=np.float64).ravel()
    return np.abs(np.fft.rfft(y))


def fscs(y, y_hat) -> float:
    """Cosine similarity of one-sided FFT magnitude spectra, in [0, 1]."""
    y, y_hat = _as_pair(y, y_hat)
    a = magnitude_spectrum(y)
    b = magnitude_spectrum(y_hat)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroSpectrumError("all-zero signal has no magnitude spectrum")
    return float(np.clip(np.dot(a, b) / (na * nb), 0.0, 1.0))


def batch_stats(values) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise MetricError("batch_stats over an empty list")
    return float(np.mean(arr)), float(np.std(arr))
