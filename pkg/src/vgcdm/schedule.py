"""Noise schedules and closed-form forward-process quantities.

Index convention: t runs over {0, ..., T-1} in code; step t here corresponds
to step t+1 in the usual 1-based presentation of diffusion chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SCHEDULE_KINDS = ("linear", "cosine")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta table with derived alpha / cumulative-alpha tables."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    kind: str

    def __post_init__(self):
        for name in ("betas", "alphas", "alpha_bars"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.betas.shape != (self.T,):
            raise ValueError("betas must have shape (T,)")
        if np.any(self.betas <= 0) or np.any(self.betas >= 1):
            raise ValueError("betas must lie strictly in (0, 1)")
        if np.any(np.diff(self.alpha_bars) >= 0):
            raise ValueError("alpha_bars must be strictly decreasing")


def _finalize(betas: np.ndarray, kind: str) -> NoiseSchedule:
    betas = np.asarray(betas, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(
        T=betas.size, betas=betas, alphas=alphas, alpha_bars=alpha_bars, kind=kind
    )


def linear_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Arithmetic progression from beta_start to beta_end over T steps."""
    if T < 2:
        raise ValueError("T must be at least 2")
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError("require 0 < beta_start <= beta_end < 1")
    betas = beta_start + (beta_end - beta_start) * np.arange(T, dtype=np.float64) / (T - 1)
    return _finalize(betas, "linear")


def cosine_schedule(T: int, s: float = 0.008) -> NoiseSchedule:
    """Squared-cosine cumulative-alpha construction with offset s.

    alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2);
    betas derived as 1 - alpha_bar_t / alpha_bar_{t-1}, clipped to <= 0.999.
    """
    if T < 2:
        raise ValueError("T must be at least 2")
    if s <= 0:
        raise ValueError("s must be positive")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((steps / T + s) / (1 + s)) * math.pi / 2) ** 2
    alpha_bar = f / f[0]
    betas = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    betas = np.clip(betas, 1e-8, 0.999)
    return _finalize(betas, "cosine")


def make_schedule(kind: str, T: int, beta_start: float = 1e-4, beta_end: float = 0.02,
                  cosine_s: float = 0.008) -> NoiseSchedule:
    if kind == "linear":
        return linear_schedule(T, beta_start, beta_end)
    if kind == "cosine":
        return cosine_schedule(T, cosine_s)
    raise ValueError(f"unknown schedule kind {kind!r}")


def q_sample(x0, t: int, eps, sched: NoiseSchedule):
    """Closed-form forward draw: x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    if not (0 <= t < sched.T):
        raise IndexError(f"t={t} out of range [0, {sched.T})")
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError("x0 and eps must have the same shape")
    ab = sched.alpha_bars[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


@dataclass(frozen=True)
class PosteriorStep:
    """Coefficients of the eps-parameterized reverse-step mean and variance.

    mean = mean_scale * (x_t - eps_coeff * eps_hat); variance is the fixed
    sigma_t^2 = beta_t choice (only an eps-predictor is trained).
    """

    mean_scale: float
    eps_coeff: float
    variance: float


def posterior_step_params(t: int, sched: NoiseSchedule) -> PosteriorStep:
    if not (0 <= t < sched.T):
        raise IndexError(f"t={t} out of range [0, {sched.T})")
    alpha = sched.alphas[t]
    beta = sched.betas[t]
    ab = sched.alpha_bars[t]
    return PosteriorStep(
        mean_scale=float(1.0 / math.sqrt(alpha)),
        eps_coeff=float(beta / math.sqrt(1.0 - ab)),
        variance=float(beta),
    )
